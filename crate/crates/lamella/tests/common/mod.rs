//! Shared helpers for the oracle test suites.

use lamella::real::V3;
use lamella::shell::RefPoint;
use lamella::splines::{
    build_multipatch, ControlPoint, InterfaceDecl, KnotVector, MultiPatchSurface, NurbsPatch,
};

/// Deterministic pseudo-random stream in [-1, 1].
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
    pub fn unit(&mut self) -> f64 {
        0.5 * (self.next() + 1.0)
    }
}

/// Flat bi-quadratic patch on [0,1]^2 with n x n elements.
pub fn unit_square(n: usize) -> NurbsPatch {
    let ku = KnotVector::uniform(2, n);
    let kv = KnotVector::uniform(2, n);
    let gu = lamella::splines::greville_abscissae(&ku);
    let gv = lamella::splines::greville_abscissae(&kv);
    let mut cps = Vec::new();
    for &v in &gv {
        for &u in &gu {
            cps.push(ControlPoint { x: [u, v, 0.0], w: 1.0 });
        }
    }
    NurbsPatch::new(ku, kv, cps).unwrap()
}

/// Reference quadrature data of the patch's single element family.
pub fn ref_points_of(patch: &NurbsPatch) -> Vec<Vec<RefPoint>> {
    let positions: Vec<[f64; 3]> = patch.cps.iter().map(|c| c.x).collect();
    let mp = build_multipatch(vec![patch.clone()], &[], &[]).unwrap();
    mp.elements
        .iter()
        .map(|e| RefPoint::element_rule(&mp.patches[0], e.rect, &positions).unwrap())
        .collect()
}

/// Two bi-quadratic patches joined along x = 1 with a fold angle (0 = flat).
/// Patch A spans [0,1] x [0,1] at z = 0; patch B rises at `angle` from the
/// shared edge.
pub fn folded_pair(angle: f64, n: usize) -> MultiPatchSurface {
    let a = unit_square(n);
    let ku = KnotVector::uniform(2, n);
    let kv = KnotVector::uniform(2, n);
    let gu = lamella::splines::greville_abscissae(&ku);
    let gv = lamella::splines::greville_abscissae(&kv);
    let (c, s) = (angle.cos(), angle.sin());
    let mut cps = Vec::new();
    for &v in &gv {
        for &u in &gu {
            cps.push(ControlPoint { x: [1.0 + c * u, v, s * u], w: 1.0 });
        }
    }
    let b = NurbsPatch::new(ku, kv, cps).unwrap();
    let decl = InterfaceDecl { a: (0, 1), b: (1, 3), alpha0: None };
    build_multipatch(vec![a, b], &[decl], &[]).unwrap()
}

/// Random nodal perturbation of the reference positions.
pub fn perturbed_positions(mp: &MultiPatchSurface, amp: f64, rng: &mut Lcg) -> Vec<V3<f64>> {
    mp.positions
        .iter()
        .map(|p| V3([p[0] + amp * rng.next(), p[1] + amp * rng.next(), p[2] + amp * rng.next()]))
        .collect()
}

pub fn rel_frobenius(a: &[f64], b: &[f64]) -> f64 {
    let na: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if nb == 0.0 {
        na
    } else {
        na / nb
    }
}

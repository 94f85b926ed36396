//! Error metrics and convergence-slope fits.

use crate::shell::RefPoint;
use crate::splines::MultiPatchSurface;

/// Collected error measures of one benchmark run.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ErrorReport {
    pub l2_displacement: Option<f64>,
    pub max_displacement: Option<f64>,
    pub mean_curvature_rel_error: Option<f64>,
    pub fracture_energy_rel_error: Option<f64>,
    pub ch_energy_rel_error: Option<f64>,
    pub sphere_l2: Option<f64>,
    pub convergence_slope: Option<f64>,
    pub recovered_moment_rel_error: Option<f64>,
    pub extras: std::collections::BTreeMap<String, f64>,
}

/// Least-squares slope of log(err) against log(n) over >= 3 levels; the
/// reported convergence order is the negated slope.
pub fn convergence_slope(n: &[f64], err: &[f64]) -> f64 {
    assert!(n.len() >= 3, "slope needs at least 3 levels");
    let xs: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let nn = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|v| v * v).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    (nn * sxy - sx * sy) / (nn * sxx - sx * sx)
}

/// Maximum relative difference between two scalar time series with
/// non-coinciding time points; the reference series is linearly interpolated.
pub fn interpolated_rel_difference(reference: &[(f64, f64)], other: &[(f64, f64)]) -> f64 {
    let interp = |t: f64| -> Option<f64> {
        if t < reference.first()?.0 || t > reference.last()?.0 {
            return None;
        }
        let idx = reference.partition_point(|&(tt, _)| tt <= t);
        if idx == 0 {
            return Some(reference[0].1);
        }
        if idx >= reference.len() {
            return Some(reference.last()?.1);
        }
        let (t0, v0) = reference[idx - 1];
        let (t1, v1) = reference[idx];
        Some(if t1 > t0 { v0 + (v1 - v0) * (t - t0) / (t1 - t0) } else { v0 })
    };
    let mut worst = 0.0f64;
    for &(t, v) in other {
        if let Some(r) = interp(t) {
            worst = worst.max((v - r).abs() / r.abs().max(1e-300));
        }
    }
    worst
}

/// Sphere geometry error: eps_L2 = (1/R^2) sqrt( int (||X - X0|| - R)^2 dS ).
pub fn sphere_geometry_error(
    mp: &MultiPatchSurface,
    ref_points: &[Vec<RefPoint>],
    center: [f64; 3],
    radius: f64,
) -> f64 {
    let mut acc = 0.0;
    for (e, elem) in mp.elements.iter().enumerate() {
        let patch = &mp.patches[elem.patch];
        for rp in &ref_points[e] {
            // position at the quadrature point from the patch control points
            let mut x = [0.0f64; 3];
            for (i, &cp) in rp.shape.cps.iter().enumerate() {
                for k in 0..3 {
                    x[k] += rp.shape.value[i] * patch.cps[cp].x[k];
                }
            }
            let d = ((x[0] - center[0]).powi(2)
                + (x[1] - center[1]).powi(2)
                + (x[2] - center[2]).powi(2))
            .sqrt();
            acc += (d - radius) * (d - radius) * rp.da_ref;
        }
    }
    acc.sqrt() / (radius * radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let n = [10.0, 20.0, 40.0, 80.0];
        let err: Vec<f64> = n.iter().map(|v: &f64| 3.0 * v.powf(-1.84)).collect();
        let s = convergence_slope(&n, &err);
        assert!((s + 1.84).abs() < 1e-12);
    }

    #[test]
    fn exact_sphere_has_machine_zero_error() {
        let patch = crate::bench::cases::sphere_octant(1.0, 2);
        let positions: Vec<[f64; 3]> = patch.cps.iter().map(|c| c.x).collect();
        let mp = crate::splines::build_multipatch(vec![patch], &[], &[]).unwrap();
        let mut rps = Vec::new();
        for elem in &mp.elements {
            rps.push(
                crate::shell::RefPoint::element_rule(&mp.patches[0], elem.rect, &positions)
                    .unwrap(),
            );
        }
        let err = sphere_geometry_error(&mp, &rps, [0.0; 3], 1.0);
        assert!(err < 1e-13, "eps_L2 = {err}");
    }

    #[test]
    fn uniform_offset_gives_exact_max_error() {
        // max displacement error of a uniformly offset flat sheet equals the offset
        let delta = 0.0321;
        let exact = |x: [f64; 3]| x;
        let offset = |x: [f64; 3]| [x[0], x[1], x[2] + delta];
        let mut max_err = 0.0f64;
        for i in 0..10 {
            let p = [i as f64 / 10.0, 0.3, 0.0];
            let d = (0..3)
                .map(|k| (offset(p)[k] - exact(p)[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            max_err = max_err.max(d);
        }
        assert!((max_err - delta).abs() < 1e-15);
    }
}

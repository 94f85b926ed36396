//! Tensor-product NURBS patches: rational shape function tables, knot
//! insertion and patch splitting along C0 lines.

use super::knots::{basis_derivs, KnotVector};
use super::SplineError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub x: [f64; 3],
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    U,
    V,
}

/// A single tensor-product NURBS patch.
///
/// Control points are stored row-major over the second parametric direction:
/// index `(i, j) -> j * n_u + i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NurbsPatch {
    pub ku: KnotVector,
    pub kv: KnotVector,
    pub cps: Vec<ControlPoint>,
}

/// Rational shape functions of one element evaluated at a parametric point:
/// values, first and second parametric derivatives of the `n_e` nonzero
/// functions, along with the patch-local control point indices they belong to.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    /// patch-local control point index per local function
    pub cps: Vec<usize>,
    pub value: Vec<f64>,
    /// d/dxi^1, d/dxi^2
    pub d1: Vec<[f64; 2]>,
    /// d2/d11, d2/d22, d2/d12
    pub d2: Vec<[f64; 3]>,
}

/// Rational curve sample: point and first parametric derivative.
#[derive(Debug, Clone, Copy)]
pub struct CurveSample {
    pub x: [f64; 3],
    pub dx: [f64; 3],
    /// rational basis values of the `p+1` nonzero functions
    pub n: [f64; 4],
    /// their first derivatives
    pub dn: [f64; 4],
    /// first local control point index
    pub first: usize,
    pub n_funcs: usize,
}

impl NurbsPatch {
    pub fn new(ku: KnotVector, kv: KnotVector, cps: Vec<ControlPoint>) -> Result<Self, SplineError> {
        if cps.len() != ku.n_basis() * kv.n_basis() {
            return Err(SplineError::InvalidNet(format!(
                "control net size {} does not match {} x {}",
                cps.len(),
                ku.n_basis(),
                kv.n_basis()
            )));
        }
        if cps.iter().any(|c| c.w <= 0.0) {
            return Err(SplineError::InvalidNet("weights must be strictly positive".into()));
        }
        Ok(NurbsPatch { ku, kv, cps })
    }

    pub fn n_u(&self) -> usize {
        self.ku.n_basis()
    }

    pub fn n_v(&self) -> usize {
        self.kv.n_basis()
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.ku.degree(), self.kv.degree())
    }

    #[inline]
    pub fn cp_index(&self, i: usize, j: usize) -> usize {
        j * self.n_u() + i
    }

    /// Rational shape functions with derivatives up to second order at `xi`.
    pub fn shape_table(&self, xi: [f64; 2]) -> Result<ShapeTable, SplineError> {
        let (p, q) = self.degrees();
        let (su, bu) = basis_derivs(&self.ku, xi[0], 2)?;
        let (sv, bv) = basis_derivs(&self.kv, xi[1], 2)?;
        let n_e = (p + 1) * (q + 1);

        let mut cps = Vec::with_capacity(n_e);
        let mut aw = Vec::with_capacity(n_e); // weighted tensor basis: value + 5 derivs
        let mut wsum = [0.0f64; 6]; // W, W_1, W_2, W_11, W_22, W_12
        for b in 0..=q {
            for a in 0..=p {
                let i = su - p + a;
                let j = sv - q + b;
                let idx = self.cp_index(i, j);
                let w = self.cps[idx].w;
                let t = [
                    bu[0][a] * bv[0][b] * w,
                    bu[1][a] * bv[0][b] * w,
                    bu[0][a] * bv[1][b] * w,
                    bu[2][a] * bv[0][b] * w,
                    bu[0][a] * bv[2][b] * w,
                    bu[1][a] * bv[1][b] * w,
                ];
                for k in 0..6 {
                    wsum[k] += t[k];
                }
                cps.push(idx);
                aw.push(t);
            }
        }

        let iw = 1.0 / wsum[0];
        let mut value = Vec::with_capacity(n_e);
        let mut d1 = Vec::with_capacity(n_e);
        let mut d2 = Vec::with_capacity(n_e);
        for t in &aw {
            let r = t[0] * iw;
            let r1 = (t[1] - r * wsum[1]) * iw;
            let r2 = (t[2] - r * wsum[2]) * iw;
            let r11 = (t[3] - 2.0 * r1 * wsum[1] - r * wsum[3]) * iw;
            let r22 = (t[4] - 2.0 * r2 * wsum[2] - r * wsum[4]) * iw;
            let r12 = (t[5] - r1 * wsum[2] - r2 * wsum[1] - r * wsum[5]) * iw;
            value.push(r);
            d1.push([r1, r2]);
            d2.push([r11, r22, r12]);
        }
        Ok(ShapeTable { cps, value, d1, d2 })
    }

    /// Surface point at `xi`.
    pub fn point(&self, xi: [f64; 2]) -> Result<[f64; 3], SplineError> {
        let t = self.shape_table(xi)?;
        let mut x = [0.0; 3];
        for (r, &cp) in t.value.iter().zip(&t.cps) {
            for k in 0..3 {
                x[k] += r * self.cps[cp].x[k];
            }
        }
        Ok(x)
    }

    /// Insert a single knot in the given direction (Boehm, homogeneous form).
    pub fn insert_knot(&mut self, dir: Direction, t: f64) {
        match dir {
            Direction::U => self.insert_knot_u(t),
            Direction::V => self.insert_knot_v(t),
        }
    }

    fn insert_knot_u(&mut self, t: f64) {
        let (new_kv, k) = self.ku.inserted(t);
        let p = self.ku.degree();
        let n_u = self.n_u();
        let n_v = self.n_v();
        let old = &self.cps;
        let knots = self.ku.knots();
        let mut cps = Vec::with_capacity((n_u + 1) * n_v);
        for j in 0..n_v {
            for i in 0..=n_u {
                let alpha = if i <= k - p {
                    1.0
                } else if i >= k + 1 {
                    0.0
                } else {
                    (t - knots[i]) / (knots[i + p] - knots[i])
                };
                let cp = if alpha >= 1.0 {
                    old[j * n_u + i]
                } else if alpha <= 0.0 {
                    old[j * n_u + i - 1]
                } else {
                    homog_mix(old[j * n_u + i], old[j * n_u + i - 1], alpha)
                };
                cps.push(cp);
            }
        }
        self.ku = new_kv;
        self.cps = cps;
    }

    fn insert_knot_v(&mut self, t: f64) {
        let (new_kv, k) = self.kv.inserted(t);
        let q = self.kv.degree();
        let n_u = self.n_u();
        let n_v = self.n_v();
        let old = &self.cps;
        let knots = self.kv.knots();
        let mut cps = Vec::with_capacity(n_u * (n_v + 1));
        for j in 0..=n_v {
            let alpha = if j <= k - q {
                1.0
            } else if j >= k + 1 {
                0.0
            } else {
                (t - knots[j]) / (knots[j + q] - knots[j])
            };
            for i in 0..n_u {
                let cp = if alpha >= 1.0 {
                    old[j * n_u + i]
                } else if alpha <= 0.0 {
                    old[(j - 1) * n_u + i]
                } else {
                    homog_mix(old[j * n_u + i], old[(j - 1) * n_u + i], alpha)
                };
                cps.push(cp);
            }
        }
        self.kv = new_kv;
        self.cps = cps;
    }

    /// Raise the multiplicity of knot `t` to `mult` in the given direction.
    pub fn insert_to_multiplicity(&mut self, dir: Direction, t: f64, mult: usize) {
        let current = match dir {
            Direction::U => self.ku.multiplicity(t),
            Direction::V => self.kv.multiplicity(t),
        };
        for _ in current..mult {
            self.insert_knot(dir, t);
        }
    }

    /// Bisect every nonzero span `levels` times. The geometry map is unchanged.
    pub fn refine_uniform(&self, levels: usize) -> NurbsPatch {
        let mut patch = self.clone();
        for _ in 0..levels {
            for dir in [Direction::U, Direction::V] {
                let bps = match dir {
                    Direction::U => patch.ku.breakpoints(),
                    Direction::V => patch.kv.breakpoints(),
                };
                for w in bps.windows(2) {
                    patch.insert_knot(dir, 0.5 * (w[0] + w[1]));
                }
            }
        }
        patch
    }

    /// Patch-local control point indices along an edge, in edge-parameter order.
    ///
    /// Edges are numbered 0: v=lo (u varies), 1: u=hi (v varies),
    /// 2: v=hi (u varies), 3: u=lo (v varies).
    pub fn edge_cp_indices(&self, edge: u8) -> Vec<usize> {
        let n_u = self.n_u();
        let n_v = self.n_v();
        match edge {
            0 => (0..n_u).map(|i| self.cp_index(i, 0)).collect(),
            1 => (0..n_v).map(|j| self.cp_index(n_u - 1, j)).collect(),
            2 => (0..n_u).map(|i| self.cp_index(i, n_v - 1)).collect(),
            3 => (0..n_v).map(|j| self.cp_index(0, j)).collect(),
            _ => panic!("edge id must be 0..4"),
        }
    }

    /// Knot vector running along an edge.
    pub fn edge_knots(&self, edge: u8) -> &KnotVector {
        match edge {
            0 | 2 => &self.ku,
            1 | 3 => &self.kv,
            _ => panic!("edge id must be 0..4"),
        }
    }

    /// Rational edge-curve sample (point, tangent, local basis) at edge
    /// parameter `t`, using the given control points for the edge row.
    pub fn edge_curve_sample(
        &self,
        edge: u8,
        t: f64,
        positions: &[[f64; 3]],
    ) -> Result<CurveSample, SplineError> {
        let kv = self.edge_knots(edge);
        let p = kv.degree();
        assert!(p + 1 <= 4, "edge degree above cubic not supported in frames");
        let (span, d) = basis_derivs(kv, t, 1)?;
        let first = span - p;
        let edge_cps = self.edge_cp_indices(edge);
        let mut wsum = 0.0;
        let mut dwsum = 0.0;
        let mut aw = [0.0f64; 4];
        let mut daw = [0.0f64; 4];
        for a in 0..=p {
            let w = self.cps[edge_cps[first + a]].w;
            aw[a] = d[0][a] * w;
            daw[a] = d[1][a] * w;
            wsum += aw[a];
            dwsum += daw[a];
        }
        let iw = 1.0 / wsum;
        let mut n = [0.0f64; 4];
        let mut dn = [0.0f64; 4];
        let mut x = [0.0; 3];
        let mut dx = [0.0; 3];
        for a in 0..=p {
            n[a] = aw[a] * iw;
            dn[a] = (daw[a] - n[a] * dwsum) * iw;
            let pos = positions[first + a];
            for k in 0..3 {
                x[k] += n[a] * pos[k];
                dx[k] += dn[a] * pos[k];
            }
        }
        Ok(CurveSample { x, dx, n, dn, first, n_funcs: p + 1 })
    }

    /// Map edge parameter to the surface parametric point on this patch.
    pub fn edge_to_xi(&self, edge: u8, t: f64) -> [f64; 2] {
        let (ulo, uhi) = self.ku.domain();
        let (vlo, vhi) = self.kv.domain();
        match edge {
            0 => [t, vlo],
            1 => [uhi, t],
            2 => [t, vhi],
            3 => [ulo, t],
            _ => panic!("edge id must be 0..4"),
        }
    }

    /// Split at an existing knot of full multiplicity `p` in direction `dir`.
    pub fn split(&self, dir: Direction, t: f64) -> (NurbsPatch, NurbsPatch) {
        match dir {
            Direction::U => self.split_u(t),
            Direction::V => self.split_v(t),
        }
    }

    fn split_u(&self, t: f64) -> (NurbsPatch, NurbsPatch) {
        let p = self.ku.degree();
        assert_eq!(self.ku.multiplicity(t), p, "split requires multiplicity p at t");
        let knots = self.ku.knots();
        let a = knots.iter().position(|&k| k == t).unwrap();
        let n_u = self.n_u();
        let n_v = self.n_v();

        let mut left_knots: Vec<f64> = knots[..a + p].to_vec();
        left_knots.push(t);
        let mut right_knots = vec![t];
        right_knots.extend_from_slice(&knots[a..]);

        let ku_l = KnotVector::new(p, left_knots).unwrap();
        let ku_r = KnotVector::new(p, right_knots).unwrap();
        let n_l = ku_l.n_basis();
        let n_r = ku_r.n_basis();
        debug_assert_eq!(n_l + n_r - 1, n_u);

        let mut cps_l = Vec::with_capacity(n_l * n_v);
        let mut cps_r = Vec::with_capacity(n_r * n_v);
        for j in 0..n_v {
            for i in 0..n_l {
                cps_l.push(self.cps[j * n_u + i]);
            }
            for i in 0..n_r {
                cps_r.push(self.cps[j * n_u + (n_l - 1) + i]);
            }
        }
        (
            NurbsPatch { ku: ku_l, kv: self.kv.clone(), cps: cps_l },
            NurbsPatch { ku: ku_r, kv: self.kv.clone(), cps: cps_r },
        )
    }

    fn split_v(&self, t: f64) -> (NurbsPatch, NurbsPatch) {
        let q = self.kv.degree();
        assert_eq!(self.kv.multiplicity(t), q, "split requires multiplicity q at t");
        let knots = self.kv.knots();
        let a = knots.iter().position(|&k| k == t).unwrap();
        let n_u = self.n_u();
        let _n_v = self.n_v();

        let mut lower_knots: Vec<f64> = knots[..a + q].to_vec();
        lower_knots.push(t);
        let mut upper_knots = vec![t];
        upper_knots.extend_from_slice(&knots[a..]);

        let kv_l = KnotVector::new(q, lower_knots).unwrap();
        let kv_u = KnotVector::new(q, upper_knots).unwrap();
        let n_l = kv_l.n_basis();

        let cps_l = self.cps[..n_l * n_u].to_vec();
        let cps_u = self.cps[(n_l - 1) * n_u..].to_vec();
        (
            NurbsPatch { ku: self.ku.clone(), kv: kv_l, cps: cps_l },
            NurbsPatch { ku: self.ku.clone(), kv: kv_u, cps: cps_u },
        )
    }
}

fn homog_mix(a: ControlPoint, b: ControlPoint, alpha: f64) -> ControlPoint {
    // interpolate in homogeneous coordinates (w*x, w)
    let w = alpha * a.w + (1.0 - alpha) * b.w;
    let mut x = [0.0; 3];
    for k in 0..3 {
        x[k] = (alpha * a.w * a.x[k] + (1.0 - alpha) * b.w * b.x[k]) / w;
    }
    ControlPoint { x, w }
}

/// Realize C0 lines inside a patch: raise the knot multiplicity to the degree
/// at every requested parameter and split into separate patches. Returns the
/// patches ordered along `dir`.
pub fn split_at_c0_lines(patch: &NurbsPatch, dir: Direction, lines: &[f64]) -> Vec<NurbsPatch> {
    let mut work = patch.clone();
    let deg = match dir {
        Direction::U => patch.ku.degree(),
        Direction::V => patch.kv.degree(),
    };
    for &t in lines {
        work.insert_to_multiplicity(dir, t, deg);
    }
    let mut out = Vec::new();
    let mut rest = work;
    let mut sorted: Vec<f64> = lines.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &t in &sorted {
        let (l, r) = rest.split(dir, t);
        out.push(l);
        rest = r;
    }
    out.push(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Flat unit square as a bi-quadratic B-spline patch.
    pub fn unit_square(n_el: usize) -> NurbsPatch {
        let ku = KnotVector::uniform(2, n_el);
        let kv = KnotVector::uniform(2, n_el);
        let gu = super::super::knots::greville_abscissae(&ku);
        let gv = super::super::knots::greville_abscissae(&kv);
        let mut cps = Vec::new();
        for &v in &gv {
            for &u in &gu {
                cps.push(ControlPoint { x: [u, v, 0.0], w: 1.0 });
            }
        }
        NurbsPatch::new(ku, kv, cps).unwrap()
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn unit_weights_reduce_to_bspline() {
        let p = unit_square(2);
        let t = p.shape_table([0.3, 0.7]).unwrap();
        // flat Greville grid with unit weights reproduces the identity map
        let x = p.point([0.3, 0.7]).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-14 && (x[1] - 0.7).abs() < 1e-14);
        let s: f64 = t.value.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        for a in 0..2 {
            let sd: f64 = t.d1.iter().map(|d| d[a]).sum();
            assert!(sd.abs() < 1e-12);
        }
    }

    #[test]
    fn rational_derivs_match_quotient_rule_oracle() {
        // mixed-weight quadratic patch; oracle builds R = N w / sum(N w) by
        // direct evaluation and finite differences.
        let ku = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).unwrap();
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let mut state = 7u64;
        let cps: Vec<ControlPoint> = (0..12)
            .map(|k| ControlPoint {
                x: [k as f64, lcg(&mut state), lcg(&mut state)],
                w: 0.5 + lcg(&mut state),
            })
            .collect();
        let patch = NurbsPatch::new(ku, kv, cps).unwrap();
        let xi = [0.3, 0.7];
        let t = patch.shape_table(xi).unwrap();

        let eval = |xi: [f64; 2]| -> Vec<f64> {
            let tt = patch.shape_table(xi).unwrap();
            tt.value.clone()
        };
        let h = 1e-6;
        let vpu = eval([xi[0] + h, xi[1]]);
        let vmu = eval([xi[0] - h, xi[1]]);
        let vpv = eval([xi[0], xi[1] + h]);
        let vmv = eval([xi[0], xi[1] - h]);
        for i in 0..t.value.len() {
            let fdu = (vpu[i] - vmu[i]) / (2.0 * h);
            let fdv = (vpv[i] - vmv[i]) / (2.0 * h);
            assert!((t.d1[i][0] - fdu).abs() < 1e-6 * fdu.abs().max(1.0));
            assert!((t.d1[i][1] - fdv).abs() < 1e-6 * fdv.abs().max(1.0));
        }
        let s: f64 = t.value.iter().sum();
        assert!((s - 1.0).abs() < 1e-13);
        let s1: f64 = t.d1.iter().map(|d| d[0]).sum();
        let s2: f64 = t.d1.iter().map(|d| d[1]).sum();
        assert!(s1.abs() < 1e-12 && s2.abs() < 1e-12);
    }

    #[test]
    fn second_derivs_match_fd() {
        let ku = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).unwrap();
        let kv = ku.clone();
        let mut state = 99u64;
        let cps: Vec<ControlPoint> = (0..16)
            .map(|_| ControlPoint {
                x: [lcg(&mut state), lcg(&mut state), lcg(&mut state)],
                w: 0.5 + lcg(&mut state),
            })
            .collect();
        let patch = NurbsPatch::new(ku, kv, cps).unwrap();
        let xi = [0.31, 0.64];
        let t = patch.shape_table(xi).unwrap();
        let h = 1e-5;
        let val = |xi: [f64; 2]| patch.shape_table(xi).unwrap().value;
        let c = val(xi);
        let pu = val([xi[0] + h, xi[1]]);
        let mu = val([xi[0] - h, xi[1]]);
        let pv = val([xi[0], xi[1] + h]);
        let mv = val([xi[0], xi[1] - h]);
        let pp = val([xi[0] + h, xi[1] + h]);
        let pm = val([xi[0] + h, xi[1] - h]);
        let mp = val([xi[0] - h, xi[1] + h]);
        let mm = val([xi[0] - h, xi[1] - h]);
        for i in 0..c.len() {
            let fd11 = (pu[i] - 2.0 * c[i] + mu[i]) / (h * h);
            let fd22 = (pv[i] - 2.0 * c[i] + mv[i]) / (h * h);
            let fd12 = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h);
            assert!((t.d2[i][0] - fd11).abs() < 1e-4 * fd11.abs().max(1.0));
            assert!((t.d2[i][1] - fd22).abs() < 1e-4 * fd22.abs().max(1.0));
            assert!((t.d2[i][2] - fd12).abs() < 1e-4 * fd12.abs().max(1.0));
        }
    }

    #[test]
    fn refinement_preserves_geometry() {
        let base = unit_square(1);
        let refined = base.refine_uniform(2);
        assert_eq!(refined.ku.nonzero_spans().len(), 4);
        let mut state = 3u64;
        for _ in 0..100 {
            let xi = [lcg(&mut state), lcg(&mut state)];
            let a = base.point(xi).unwrap();
            let b = refined.point(xi).unwrap();
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
        // levels = 0 is the identity
        let same = base.refine_uniform(0);
        assert_eq!(same.cps, base.cps);
    }

    #[test]
    fn refinement_preserves_rational_geometry() {
        // quarter-cylinder arc: exact rational quadratic in u, straight in v
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ku = KnotVector::new(2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let kv = ku.clone();
        let arc = [([1.0, 0.0], 1.0), ([1.0, 1.0], s), ([0.0, 1.0], 1.0)];
        let mut cps = Vec::new();
        for j in 0..3 {
            let z = j as f64 / 2.0;
            for (xy, w) in arc {
                cps.push(ControlPoint { x: [xy[0], xy[1], z], w });
            }
        }
        let base = NurbsPatch::new(ku, kv, cps).unwrap();
        let refined = base.refine_uniform(3);
        let mut state = 11u64;
        let mut max_dev: f64 = 0.0;
        for _ in 0..200 {
            let xi = [lcg(&mut state), lcg(&mut state)];
            let a = base.point(xi).unwrap();
            let b = refined.point(xi).unwrap();
            let r = (a[0] * a[0] + a[1] * a[1]).sqrt();
            assert!((r - 1.0).abs() < 1e-14, "exact arc radius");
            let d = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
            max_dev = max_dev.max(d);
        }
        assert!(max_dev < 1e-12);
    }

    #[test]
    fn c0_split_is_conforming_and_pointwise_equal() {
        let base = unit_square(4);
        let parts = split_at_c0_lines(&base, Direction::U, &[0.5]);
        assert_eq!(parts.len(), 2);
        // shared edge control points coincide
        let right_of_left = parts[0].edge_cp_indices(1);
        let left_of_right = parts[1].edge_cp_indices(3);
        for (a, b) in right_of_left.iter().zip(&left_of_right) {
            let pa = parts[0].cps[*a];
            let pb = parts[1].cps[*b];
            for k in 0..3 {
                assert!((pa.x[k] - pb.x[k]).abs() < 1e-14);
            }
        }
        // geometry unchanged
        let mut state = 5u64;
        for _ in 0..50 {
            let xi = [lcg(&mut state), lcg(&mut state)];
            let orig = base.point(xi).unwrap();
            let split = if xi[0] <= 0.5 { &parts[0] } else { &parts[1] };
            let p = split.point(xi).unwrap();
            for k in 0..3 {
                assert!((orig[k] - p[k]).abs() < 1e-12);
            }
        }
    }
}

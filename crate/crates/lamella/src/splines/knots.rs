//! Open (clamped) knot vectors and B-spline basis evaluation.

use super::SplineError;
use serde::{Deserialize, Serialize};

/// Open knot vector of a given polynomial degree.
///
/// The first and last knots are repeated `degree + 1` times, the sequence is
/// non-decreasing, and there are at least `2 (degree + 1)` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self, SplineError> {
        if degree < 1 {
            return Err(SplineError::InvalidKnots("degree must be >= 1".into()));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(SplineError::InvalidKnots(format!(
                "need at least {} knots, got {}",
                2 * (degree + 1),
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(SplineError::InvalidKnots("knots must be non-decreasing".into()));
        }
        let first = knots[0];
        let last = *knots.last().unwrap();
        if knots[..=degree].iter().any(|&k| k != first)
            || knots[knots.len() - degree - 1..].iter().any(|&k| k != last)
        {
            return Err(SplineError::InvalidKnots(
                "end knots must be repeated degree+1 times (clamped)".into(),
            ));
        }
        Ok(KnotVector { degree, knots })
    }

    /// Uniform open knot vector on [0, 1] with `n_elements` nonzero spans.
    pub fn uniform(degree: usize, n_elements: usize) -> Self {
        let mut knots = vec![0.0; degree + 1];
        for i in 1..n_elements {
            knots.push(i as f64 / n_elements as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        KnotVector { degree, knots }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions n = #knots - degree - 1.
    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Breakpoints of the nonzero spans (unique knots).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![self.knots[0]];
        for &k in &self.knots {
            if k > *out.last().unwrap() {
                out.push(k);
            }
        }
        out
    }

    /// Spans with nonzero measure as knot-index ranges.
    pub fn nonzero_spans(&self) -> Vec<usize> {
        (self.degree..self.n_basis())
            .filter(|&i| self.knots[i + 1] > self.knots[i])
            .collect()
    }

    /// Multiplicity of knot value `t` (exact comparison).
    pub fn multiplicity(&self, t: f64) -> usize {
        self.knots.iter().filter(|&&k| k == t).count()
    }

    /// Insert a knot value, returning the span index it was inserted in.
    pub(crate) fn inserted(&self, t: f64) -> (KnotVector, usize) {
        let k = find_span(self, t).expect("insertion inside domain");
        let mut knots = self.knots.clone();
        knots.insert(k + 1, t);
        (KnotVector { degree: self.degree, knots }, k)
    }
}

/// Knot span index i with knots[i] <= u < knots[i+1]; the rightmost nonzero
/// span is returned at the upper end of the domain.
pub fn find_span(kv: &KnotVector, u: f64) -> Result<usize, SplineError> {
    let (lo, hi) = kv.domain();
    if u < lo || u > hi {
        return Err(SplineError::OutOfDomain { u, lo, hi });
    }
    let n = kv.n_basis();
    if u >= hi {
        // right-end convention: last span with nonzero measure
        let mut i = n - 1;
        while kv.knots[i + 1] <= kv.knots[i] {
            i -= 1;
        }
        return Ok(i);
    }
    let mut low = kv.degree;
    let mut high = n;
    while high - low > 1 {
        let mid = (low + high) / 2;
        if u < kv.knots[mid] {
            high = mid;
        } else {
            low = mid;
        }
    }
    Ok(low)
}

/// Values and derivatives (up to order `k <= 2`) of the `degree + 1` B-splines
/// that are nonzero at `u`. Returns `(span, ders)` with `ders[r][j]` the r-th
/// derivative of the j-th local function.
pub fn basis_derivs(kv: &KnotVector, u: f64, k: usize) -> Result<(usize, Vec<Vec<f64>>), SplineError> {
    if k > 2 {
        return Err(SplineError::UnsupportedOrder(k));
    }
    let span = find_span(kv, u)?;
    let p = kv.degree;
    let nd = k.min(p);
    let knots = &kv.knots;

    // Cox-de Boor triangle with stored knot differences (lower part) and
    // basis values (upper part).
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let mut ders = vec![vec![0.0; p + 1]; k + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }

    let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
    for r in 0..=p {
        let mut s1 = 0;
        let mut s2 = 1;
        a[0].iter_mut().for_each(|x| *x = 0.0);
        a[1].iter_mut().for_each(|x| *x = 0.0);
        a[0][0] = 1.0;
        for kk in 1..=nd {
            let mut d = 0.0;
            let rk = r as isize - kk as isize;
            let pk = p - kk;
            if r >= kk {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { kk - 1 } else { p - r };
            for j in j1..=j2 {
                a[s2][j] =
                    (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
            }
            if r <= pk {
                a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                d += a[s2][kk] * ndu[r][pk];
            }
            ders[kk][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }

    let mut factor = p as f64;
    for kk in 1..=nd {
        for j in 0..=p {
            ders[kk][j] *= factor;
        }
        factor *= (p - kk) as f64;
    }
    Ok((span, ders))
}

/// Greville abscissae g_i = (U[i+1] + ... + U[i+p]) / p.
pub fn greville_abscissae(kv: &KnotVector) -> Vec<f64> {
    let p = kv.degree;
    (0..kv.n_basis())
        .map(|i| kv.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernstein2() -> KnotVector {
        KnotVector::new(2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn find_span_examples() {
        assert_eq!(find_span(&bernstein2(), 0.5).unwrap(), 2);
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(find_span(&kv, 1.0).unwrap(), 3);
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0]).unwrap();
        // independent oracle: linear scan over spans
        let scan = |u: f64| {
            let ks = kv.knots();
            let mut s = kv.degree();
            for i in kv.degree()..kv.n_basis() {
                if ks[i] <= u && u < ks[i + 1] {
                    s = i;
                }
            }
            s
        };
        assert_eq!(find_span(&kv, 0.6).unwrap(), 4);
        assert_eq!(find_span(&kv, 0.6).unwrap(), scan(0.6));
        assert!(find_span(&kv, 1.5).is_err());
    }

    #[test]
    fn bernstein_values() {
        let (_, d) = basis_derivs(&bernstein2(), 0.5, 0).unwrap();
        assert!((d[0][0] - 0.25).abs() < 1e-15);
        assert!((d[0][1] - 0.5).abs() < 1e-15);
        assert!((d[0][2] - 0.25).abs() < 1e-15);
    }

    /// Direct Cox-de Boor recursion, independent of the table-based routine.
    fn cox_de_boor(kv: &KnotVector, i: usize, p: usize, u: f64) -> f64 {
        let t = kv.knots();
        if p == 0 {
            let last = kv.domain().1;
            let inside = (t[i] <= u && u < t[i + 1]) || (u >= last && t[i] < t[i + 1] && u <= t[i + 1]);
            return if inside { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        if t[i + p] > t[i] {
            v += (u - t[i]) / (t[i + p] - t[i]) * cox_de_boor(kv, i, p - 1, u);
        }
        if t[i + p + 1] > t[i + 1] {
            v += (t[i + p + 1] - u) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(kv, i + 1, p - 1, u);
        }
        v
    }

    #[test]
    fn matches_direct_recursion_and_fd() {
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).unwrap();
        let u = 0.25;
        let (span, d) = basis_derivs(&kv, u, 2).unwrap();
        for j in 0..=2 {
            let i = span - 2 + j;
            let direct = cox_de_boor(&kv, i, 2, u);
            assert!((d[0][j] - direct).abs() < 1e-13, "value {j}");
            let h = 1e-6;
            let fd1 = (cox_de_boor(&kv, i, 2, u + h) - cox_de_boor(&kv, i, 2, u - h)) / (2.0 * h);
            assert!(
                (d[1][j] - fd1).abs() <= 1e-6 * fd1.abs().max(1.0),
                "first derivative {j}: {} vs {}",
                d[1][j],
                fd1
            );
            let fd2 = (cox_de_boor(&kv, i, 2, u + h) - 2.0 * direct + cox_de_boor(&kv, i, 2, u - h))
                / (h * h);
            assert!((d[2][j] - fd2).abs() <= 1e-3 * fd2.abs().max(1.0), "second derivative {j}");
        }
    }

    #[test]
    fn partition_of_unity_at_random_points() {
        let kv = KnotVector::new(3, vec![0.0, 0.0, 0.0, 0.0, 0.2, 0.5, 0.5, 0.9, 1.0, 1.0, 1.0, 1.0])
            .unwrap();
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..1000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            let (_, d) = basis_derivs(&kv, u, 2).unwrap();
            let s0: f64 = d[0].iter().sum();
            let s1: f64 = d[1].iter().sum();
            let s2: f64 = d[2].iter().sum();
            assert!((s0 - 1.0).abs() < 1e-12);
            assert!(s1.abs() < 1e-10);
            assert!(s2.abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_orders_and_knots() {
        assert!(basis_derivs(&bernstein2(), 0.5, 3).is_err());
        assert!(KnotVector::new(2, vec![0.0, 0.0, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(2, vec![0.0, 0.0, 0.0, -0.1, 1.0, 1.0, 1.0]).is_err());
    }
}

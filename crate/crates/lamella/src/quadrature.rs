//! Gauss-Legendre rules on [-1, 1] plus the closed trapezoidal rule used for
//! linearly interpolated Lagrange multipliers.

/// Gauss-Legendre points and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3.0_f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0 / 5.0_f64).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0 / 5.0_f64).sqrt()).sqrt();
            let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0 / 5.0_f64).sqrt()).sqrt();
            let wa = (18.0 + 30.0_f64.sqrt()) / 36.0;
            let wb = (18.0 - 30.0_f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let a = 1.0 / 3.0 * (5.0 - 2.0 * (10.0 / 7.0_f64).sqrt()).sqrt();
            let b = 1.0 / 3.0 * (5.0 + 2.0 * (10.0 / 7.0_f64).sqrt()).sqrt();
            let wa = (322.0 + 13.0 * 70.0_f64.sqrt()) / 900.0;
            let wb = (322.0 - 13.0 * 70.0_f64.sqrt()) / 900.0;
            (
                vec![-b, -a, 0.0, a, b],
                vec![wb, wa, 128.0 / 225.0, wa, wb],
            )
        }
        6 => {
            let x = [
                0.238619186083196908630501721681,
                0.661209386466264513661399595020,
                0.932469514203152027812301554494,
            ];
            let w = [
                0.467913934572691047389870343990,
                0.360761573048138607569833513838,
                0.171324492379170345040296142173,
            ];
            (
                vec![-x[2], -x[1], -x[0], x[0], x[1], x[2]],
                vec![w[2], w[1], w[0], w[0], w[1], w[2]],
            )
        }
        _ => panic!("unsupported Gauss rule order {n}"),
    }
}

/// Rule on the unit interval [0, 1]: points and weights.
pub fn on_unit_interval(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|xi| 0.5 * (xi + 1.0)).collect(),
        w.iter().map(|wi| 0.5 * wi).collect(),
    )
}

/// Closed trapezoidal rule with 2 points on the unit interval.
pub fn trapezoidal_unit() -> (Vec<f64>, Vec<f64>) {
    (vec![0.0, 1.0], vec![0.5, 0.5])
}

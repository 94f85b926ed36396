//! Curvilinear differential geometry at quadrature points.
//!
//! Products follow the usual conventions: metric components, curvature
//! components and constraint values are dot products; the surface normal and
//! the interface frame vectors come from cross products.

use crate::real::{Real, Sym2, V3};
use crate::splines::ShapeTable;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate surface tangents: |a1 x a2| = {0:.3e}")]
    DegenerateTangents(f64),
    #[error("zero-length interface tangent")]
    SingularInterface,
}

/// First fundamental form and normal at a surface point.
#[derive(Debug, Clone, Copy)]
pub struct FirstFundamental<R: Real> {
    /// covariant tangents a_1, a_2
    pub a: [V3<R>; 2],
    /// unit normal a_1 x a_2 / |a_1 x a_2|
    pub n: V3<R>,
    /// covariant metric a_{ab}
    pub cov: Sym2<R>,
    /// contravariant metric a^{ab} = [a_{ab}]^{-1}
    pub con: Sym2<R>,
    /// area density |a_1 x a_2| = sqrt(det a_{ab})
    pub jac: R,
}

impl<R: Real> FirstFundamental<R> {
    /// Contravariant tangent a^alpha = a^{ab} a_b.
    #[inline]
    pub fn a_con(&self, alpha: usize) -> V3<R> {
        self.a[0].scale(self.con.get(alpha, 0)) + self.a[1].scale(self.con.get(alpha, 1))
    }
}

/// Second fundamental form, mean curvature and Christoffel symbols.
#[derive(Debug, Clone, Copy)]
pub struct SecondFundamental<R: Real> {
    /// curvature components b_{ab} = a_{a,b} . n
    pub cov: Sym2<R>,
    /// mean curvature H = a^{ab} b_{ab} / 2
    pub mean: R,
    /// Christoffel symbols of the second kind, gamma[c][ab] with ab in
    /// {11, 22, 12}
    pub gamma: [[R; 3]; 2],
}

/// Interpolate positions from nodal values: x(\xi), a_alpha = N_{,alpha} x_e.
#[inline]
pub fn tangents<R: Real>(shape: &ShapeTable, xs: &[V3<R>]) -> [V3<R>; 2] {
    let mut a = [V3::zero(), V3::zero()];
    for (i, d) in shape.d1.iter().enumerate() {
        a[0] += xs[i].scale(R::from_f64(d[0]));
        a[1] += xs[i].scale(R::from_f64(d[1]));
    }
    a
}

/// Metrics, normal and area density from nodal positions.
pub fn surface_kinematics<R: Real>(
    shape: &ShapeTable,
    xs: &[V3<R>],
) -> Result<FirstFundamental<R>, GeometryError> {
    let a = tangents(shape, xs);
    let cross = a[0].cross(a[1]);
    let jac = cross.norm();
    if jac.value() < 1e-14 {
        return Err(GeometryError::DegenerateTangents(jac.value()));
    }
    let n = cross.scale(R::one() / jac);
    let cov = Sym2 { m11: a[0].dot(a[0]), m22: a[1].dot(a[1]), m12: a[0].dot(a[1]) };
    let con = cov.inverse();
    Ok(FirstFundamental { a, n, cov, con, jac })
}

/// Curvature tensor, mean curvature and Christoffel symbols; requires second
/// parametric derivatives in the shape table.
pub fn curvature<R: Real>(
    shape: &ShapeTable,
    xs: &[V3<R>],
    first: &FirstFundamental<R>,
) -> SecondFundamental<R> {
    // second parametric derivatives of the map: a_{1,1}, a_{2,2}, a_{1,2}
    let mut dd = [V3::zero(), V3::zero(), V3::zero()];
    for (i, d) in shape.d2.iter().enumerate() {
        dd[0] += xs[i].scale(R::from_f64(d[0]));
        dd[1] += xs[i].scale(R::from_f64(d[1]));
        dd[2] += xs[i].scale(R::from_f64(d[2]));
    }
    let cov = Sym2 {
        m11: dd[0].dot(first.n),
        m22: dd[1].dot(first.n),
        m12: dd[2].dot(first.n),
    };
    let mean = (first.con.m11 * cov.m11
        + first.con.m22 * cov.m22
        + (first.con.m12 * cov.m12).scale(2.0))
    .scale(0.5);
    let mut gamma = [[R::zero(); 3]; 2];
    for c in 0..2 {
        let ac = first.a_con(c);
        for (k, d) in dd.iter().enumerate() {
            gamma[c][k] = d.dot(ac);
        }
    }
    SecondFundamental { cov, mean, gamma }
}

/// Covariant second derivatives N_{;ab} = N_{,ab} - Gamma^c_{ab} N_{,c}
/// per shape function, components ordered {11, 22, 12}.
pub fn covariant_second_deriv<R: Real>(
    shape: &ShapeTable,
    gamma: &[[R; 3]; 2],
) -> Vec<[R; 3]> {
    shape
        .d1
        .iter()
        .zip(&shape.d2)
        .map(|(d1, d2)| {
            let g1 = R::from_f64(d1[0]);
            let g2 = R::from_f64(d1[1]);
            [
                R::from_f64(d2[0]) - gamma[0][0] * g1 - gamma[1][0] * g2,
                R::from_f64(d2[1]) - gamma[0][1] * g1 - gamma[1][1] * g2,
                R::from_f64(d2[2]) - gamma[0][2] * g1 - gamma[1][2] * g2,
            ]
        })
        .collect()
}

/// Surface Laplacian of each shape function: a^{ab} N_{;ab}.
pub fn laplace_shapes<R: Real>(dd_cov: &[[R; 3]], con: &Sym2<R>) -> Vec<R> {
    dd_cov
        .iter()
        .map(|d| con.m11 * d[0] + con.m22 * d[1] + (con.m12 * d[2]).scale(2.0))
        .collect()
}

/// Surface gradient and Laplacian of a scalar field from nodal coefficients.
pub fn surface_gradient_and_laplacian<R: Real>(
    shape: &ShapeTable,
    phi: &[R],
    first: &FirstFundamental<R>,
    dd_cov: &[[R; 3]],
) -> (V3<R>, R) {
    let mut d1 = [R::zero(); 2];
    let mut dcov = [R::zero(); 3];
    for i in 0..phi.len() {
        d1[0] += phi[i] * R::from_f64(shape.d1[i][0]);
        d1[1] += phi[i] * R::from_f64(shape.d1[i][1]);
        for k in 0..3 {
            dcov[k] += phi[i] * dd_cov[i][k];
        }
    }
    let grad = first.a_con(0).scale(d1[0]) + first.a_con(1).scale(d1[1]);
    let lap =
        first.con.m11 * dcov[0] + first.con.m22 * dcov[1] + (first.con.m12 * dcov[2]).scale(2.0);
    (grad, lap)
}

/// Deformation invariants against a reference configuration:
/// J = sqrt(det[A^{ab}] det[a_{ab}]), I1 = A^{ab} a_{ab}.
#[inline]
pub fn invariants<R: Real>(ref_con: &Sym2<f64>, cur_cov: &Sym2<R>) -> (R, R) {
    let det_ref_con = ref_con.det();
    let j = (cur_cov.det().scale(det_ref_con)).sqrt();
    let i1 = cur_cov.m11.scale(ref_con.m11)
        + cur_cov.m22.scale(ref_con.m22)
        + cur_cov.m12.scale(2.0 * ref_con.m12);
    (j, i1)
}

/// Orthonormal frame on an interface curve.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceFrame<R: Real> {
    /// unit interface tangent (side A edge parametrization)
    pub tau: V3<R>,
    /// in-surface edge normal on side A: nu = tau x n
    pub nu: V3<R>,
    /// in-surface edge normal on side B: nu~ = tau~ x n~ with tau~ = -tau
    pub nu_t: V3<R>,
    /// surface normals of the two sides
    pub n: V3<R>,
    pub n_t: V3<R>,
    /// line Jacobian |a_xi| of the edge curve
    pub line_jac: R,
}

impl<R: Real> InterfaceFrame<R> {
    /// Build the frame from the (unnormalized) edge tangent and the two
    /// adjacent surface normals. `tau~ = -tau` holds for conforming meshes.
    pub fn new(a_xi: V3<R>, n: V3<R>, n_t: V3<R>) -> Result<Self, GeometryError> {
        let line_jac = a_xi.norm();
        if line_jac.value() < 1e-14 {
            return Err(GeometryError::SingularInterface);
        }
        let tau = a_xi.scale(R::one() / line_jac);
        let nu = tau.cross(n);
        let nu_t = (-tau).cross(n_t);
        Ok(InterfaceFrame { tau, nu, nu_t, n, n_t, line_jac })
    }

    /// cos(alpha) = n . n~.
    #[inline]
    pub fn cos_alpha(&self) -> R {
        self.n.dot(self.n_t)
    }

    /// sin(alpha) = (n x n~) . tau.
    #[inline]
    pub fn sin_alpha(&self) -> R {
        self.n.cross(self.n_t).dot(self.tau)
    }
}

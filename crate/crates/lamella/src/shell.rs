//! Kirchhoff-Love shell constitutive evaluation and element vectors.
//!
//! Element routines are generic over [`Real`]; the consistent tangent is the
//! exact derivative of the residual obtained by evaluating the same code with
//! dual numbers.

use crate::geometry::{
    covariant_second_deriv, curvature, invariants, surface_kinematics, FirstFundamental,
    GeometryError, SecondFundamental,
};
use crate::real::{Dual, Real, Sym2, V3};
use crate::splines::{NurbsPatch, ShapeTable};
use crate::quadrature;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShellError {
    #[error("inverted element: J = {0:.3e} <= 0")]
    InvertedElement(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Membrane/bending constitutive selection.
///
/// Moduli are 2D quantities: `k_bulk`, `g_shear` in [E0], `c_bend` in
/// [E0 L0^2], `eta` in [E0 T0], thickness in [L0].
#[derive(Debug, Clone, Copy)]
pub enum MembraneBending {
    /// Neo-Hookean membrane with Koiter bending.
    KoiterNeoHookean,
    /// Thickness-integrated 3D Saint Venant-Kirchhoff shell (E, nu are the 3D
    /// modulus and Poisson ratio; membrane and bending stiffness follow from
    /// the thickness).
    SvkShell { youngs: f64, poisson: f64, thickness: f64 },
    /// Neo-Hookean membrane and thickness-integrated SVK bending with
    /// tension/compression splits driven by a degradation value (fracture).
    FractureSplit { thickness: f64 },
}

/// Shell material: baseline point moduli plus the model selector.
#[derive(Debug, Clone, Copy)]
pub struct ShellMaterial {
    pub model: MembraneBending,
    pub k_bulk: f64,
    pub g_shear: f64,
    pub c_bend: f64,
    pub eta: f64,
    /// areal density [rho0]
    pub density: f64,
}

impl ShellMaterial {
    pub fn koiter(k_bulk: f64, g_shear: f64, c_bend: f64, eta: f64) -> Self {
        ShellMaterial {
            model: MembraneBending::KoiterNeoHookean,
            k_bulk,
            g_shear,
            c_bend,
            eta,
            density: 1.0,
        }
    }

    pub fn svk(youngs: f64, poisson: f64, thickness: f64) -> Self {
        ShellMaterial {
            model: MembraneBending::SvkShell { youngs, poisson, thickness },
            k_bulk: 0.0,
            g_shear: 0.0,
            c_bend: 0.0,
            eta: 0.0,
            density: 1.0,
        }
    }

    pub fn fracture(k_bulk: f64, g_shear: f64, c_bend: f64, thickness: f64) -> Self {
        ShellMaterial {
            model: MembraneBending::FractureSplit { thickness },
            k_bulk,
            g_shear,
            c_bend,
            eta: 0.0,
            density: 1.0,
        }
    }
}

/// Point moduli after any phase-field mixture interpolation.
#[derive(Debug, Clone, Copy)]
pub struct PointModuli<R: Real> {
    pub k_bulk: R,
    pub g_shear: R,
    pub c_bend: R,
    pub eta: R,
}

impl<R: Real> PointModuli<R> {
    pub fn from_material(m: &ShellMaterial) -> Self {
        PointModuli {
            k_bulk: R::from_f64(m.k_bulk),
            g_shear: R::from_f64(m.g_shear),
            c_bend: R::from_f64(m.c_bend),
            eta: R::from_f64(m.eta),
        }
    }
}

/// Per-quadrature-point phase coupling supplied by the caller: interpolated
/// moduli, degradation of the tensile split, and any extra membrane stress
/// (Korteweg) in contravariant components.
#[derive(Debug, Clone, Copy)]
pub struct PhasePoint<R: Real> {
    pub moduli: PointModuli<R>,
    /// degradation g(phi) applied to the tensile split (1 = intact)
    pub g_deg: R,
    pub extra_stress: Option<Sym2<R>>,
}

impl<R: Real> PhasePoint<R> {
    pub fn intact(m: &ShellMaterial) -> Self {
        PhasePoint { moduli: PointModuli::from_material(m), g_deg: R::one(), extra_stress: None }
    }
}

/// Precomputed reference data at one quadrature point of a surface element.
#[derive(Debug, Clone)]
pub struct RefPoint {
    pub shape: ShapeTable,
    pub first: FirstFundamental<f64>,
    pub second: SecondFundamental<f64>,
    /// covariant second derivatives of the shapes w.r.t. the reference surface
    pub ddn_ref: Vec<[f64; 3]>,
    /// reference surface Laplacian of each shape function
    pub lap_ref: Vec<f64>,
    /// quadrature weight times parametric cell measure
    pub w_param: f64,
    /// w_param * |A1 x A2|: reference area measure
    pub da_ref: f64,
}

impl RefPoint {
    pub fn new(shape: ShapeTable, ref_xs: &[V3<f64>], w_param: f64) -> Result<Self, ShellError> {
        let first = surface_kinematics(&shape, ref_xs)?;
        let second = curvature(&shape, ref_xs, &first);
        let ddn_ref = covariant_second_deriv(&shape, &second.gamma);
        let lap_ref = crate::geometry::laplace_shapes(&ddn_ref, &first.con);
        let da_ref = w_param * first.jac;
        Ok(RefPoint { shape, first, second, ddn_ref, lap_ref, w_param, da_ref })
    }

    /// Reference quadrature data for all points of a (p+1)x(q+1) Gauss rule on
    /// one element of a patch.
    pub fn element_rule(
        patch: &NurbsPatch,
        rect: ([f64; 2], [f64; 2]),
        positions: &[[f64; 3]],
    ) -> Result<Vec<RefPoint>, ShellError> {
        let (p, q) = patch.degrees();
        let (gu, wu) = quadrature::on_unit_interval(p + 1);
        let (gv, wv) = quadrature::on_unit_interval(q + 1);
        let du = rect.0[1] - rect.0[0];
        let dv = rect.1[1] - rect.1[0];
        let mut out = Vec::with_capacity(gu.len() * gv.len());
        for (j, &v) in gv.iter().enumerate() {
            for (i, &u) in gu.iter().enumerate() {
                let xi = [rect.0[0] + u * du, rect.1[0] + v * dv];
                let shape = patch.shape_table(xi).expect("qp inside patch domain");
                let xs: Vec<V3<f64>> = shape.cps.iter().map(|&c| V3(positions[c])).collect();
                let w = wu[i] * wv[j] * du * dv;
                out.push(RefPoint::new(shape, &xs, w)?);
            }
        }
        Ok(out)
    }
}

/// Current-configuration state at a quadrature point.
pub struct PointState<R: Real> {
    pub first: FirstFundamental<R>,
    pub second: SecondFundamental<R>,
    /// surface stretch J and trace invariant I1
    pub j: R,
    pub i1: R,
}

pub fn point_state<R: Real>(
    rp: &RefPoint,
    xs: &[V3<R>],
) -> Result<PointState<R>, GeometryError> {
    let first = surface_kinematics(&rp.shape, xs)?;
    let second = curvature(&rp.shape, xs, &first);
    let (j, i1) = invariants(&rp.first.con, &first.cov);
    Ok(PointState { first, second, j, i1 })
}

/// Contravariant membrane stress parts. `a_dot_cov` is the covariant metric
/// rate for the Kelvin viscosity (zero in quasi-statics).
pub struct StressParts<R: Real> {
    pub dil: Sym2<R>,
    pub dev: Sym2<R>,
    pub visc: Sym2<R>,
}

impl<R: Real> StressParts<R> {
    pub fn total(&self) -> Sym2<R> {
        self.dil.add(self.dev).add(self.visc)
    }
}

/// Neo-Hookean membrane stress:
/// sigma_dil = K/(2J) (J^2 - 1) a^{ab},
/// sigma_dev = G/(2J^2) (2A^{ab} - I1 a^{ab}),
/// sigma_visc = -eta adot^{ab} with adot^{ab} = -a^{ac} adot_{cd} a^{db}.
pub fn membrane_stress<R: Real>(
    state: &PointState<R>,
    ref_con: &Sym2<f64>,
    moduli: &PointModuli<R>,
    a_dot_cov: Option<&Sym2<R>>,
) -> Result<StressParts<R>, ShellError> {
    let j = state.j;
    if j.value() <= 0.0 {
        return Err(ShellError::InvertedElement(j.value()));
    }
    let a_con = state.first.con;
    let half = R::from_f64(0.5);
    let dil_coef = moduli.k_bulk * half / j * (j * j - R::one());
    let dil = a_con.scale(dil_coef);

    let dev_coef = moduli.g_shear * half / (j * j);
    let dev = Sym2 {
        m11: dev_coef * (R::from_f64(2.0 * ref_con.m11) - state.i1 * a_con.m11),
        m22: dev_coef * (R::from_f64(2.0 * ref_con.m22) - state.i1 * a_con.m22),
        m12: dev_coef * (R::from_f64(2.0 * ref_con.m12) - state.i1 * a_con.m12),
    };

    let visc = match a_dot_cov {
        Some(rate) if moduli.eta.value() != 0.0 => {
            // adot^{ab} = -a^{ac} adot_{cd} a^{db}; sigma_visc = -eta adot^{ab}
            let raise = |a: usize, b: usize| {
                let mut s = R::zero();
                for c in 0..2 {
                    for d in 0..2 {
                        s += a_con.get(a, c) * rate.get(c, d) * a_con.get(d, b);
                    }
                }
                s
            };
            Sym2 {
                m11: moduli.eta * raise(0, 0),
                m22: moduli.eta * raise(1, 1),
                m12: moduli.eta * raise(0, 1),
            }
        }
        _ => Sym2::zero(),
    };
    Ok(StressParts { dil, dev, visc })
}

/// Koiter bending moment M^{ab} = c/J (b0^{ab} - B^{ab}) with
/// b0^{ab} = A^{ac} b_{cd} A^{db}.
pub fn bending_moment<R: Real>(
    state: &PointState<R>,
    ref_con: &Sym2<f64>,
    ref_b_cov: &Sym2<f64>,
    c_bend: R,
) -> Sym2<R> {
    let raise_ref = |m: &Sym2<R>, a: usize, b: usize| {
        let mut s = R::zero();
        for c in 0..2 {
            for d in 0..2 {
                s += m.get(c, d).scale(ref_con.get(a, c) * ref_con.get(d, b));
            }
        }
        s
    };
    let b = state.second.cov;
    let b_ref = Sym2 {
        m11: R::from_f64(ref_b_cov.m11),
        m22: R::from_f64(ref_b_cov.m22),
        m12: R::from_f64(ref_b_cov.m12),
    };
    let coef = c_bend / state.j;
    Sym2 {
        m11: coef * (raise_ref(&b, 0, 0) - raise_ref(&b_ref, 0, 0)),
        m22: coef * (raise_ref(&b, 1, 1) - raise_ref(&b_ref, 1, 1)),
        m12: coef * (raise_ref(&b, 0, 1) - raise_ref(&b_ref, 0, 1)),
    }
}

/// Neo-Hookean energy densities and their per-modulus shapes:
/// Psi_dil = K/4 (J^2 - 1 - 2 ln J), Psi_dev = G/2 (I1/J - 2).
pub fn membrane_energy_shapes<R: Real>(j: R, i1: R) -> (R, R) {
    let q = R::from_f64(0.25);
    let shape_dil = q * (j * j - R::one() - (j.ln()).scale(2.0));
    let shape_dev = (i1 / j - R::from_f64(2.0)).scale(0.5);
    (shape_dil, shape_dev)
}

/// Koiter bending energy shape Psi_bend / c = 1/2 (b-B) : A (b-B) A.
pub fn bending_energy_shape<R: Real>(
    state: &PointState<R>,
    ref_con: &Sym2<f64>,
    ref_b_cov: &Sym2<f64>,
) -> R {
    let rel = Sym2 {
        m11: state.second.cov.m11 - R::from_f64(ref_b_cov.m11),
        m22: state.second.cov.m22 - R::from_f64(ref_b_cov.m22),
        m12: state.second.cov.m12 - R::from_f64(ref_b_cov.m12),
    };
    // rel_{ab} A^{ac} A^{bd} rel_{cd} / 2
    let mut s = R::zero();
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    s += rel.get(a, b).scale(ref_con.get(a, c) * ref_con.get(b, d) * 0.5)
                        * rel.get(c, d);
                }
            }
        }
    }
    s
}

/// Plane-stress reduced elasticity tensor components for the SVK shell:
/// C^{abcd} = lambda_bar A^{ab} A^{cd} + mu (A^{ac} A^{bd} + A^{ad} A^{bc}).
fn svk_c_tensor(ref_con: &Sym2<f64>, youngs: f64, poisson: f64) -> impl Fn(usize, usize, usize, usize) -> f64 + '_ {
    let mu = youngs / (2.0 * (1.0 + poisson));
    let lam_bar = youngs * poisson / (1.0 - poisson * poisson);
    move |a, b, c, d| {
        lam_bar * ref_con.get(a, b) * ref_con.get(c, d)
            + mu * (ref_con.get(a, c) * ref_con.get(b, d) + ref_con.get(a, d) * ref_con.get(b, c))
    }
}

/// Membrane tension/compression split keyed on the surface stretch:
/// tensile = dev + dil for J >= 1, dev only for J < 1.
pub struct MembraneSplit<R: Real> {
    pub energy_pos: R,
    pub energy_neg: R,
    pub stress_pos: Sym2<R>,
    pub stress_neg: Sym2<R>,
}

pub fn split_membrane<R: Real>(
    state: &PointState<R>,
    ref_con: &Sym2<f64>,
    moduli: &PointModuli<R>,
) -> Result<MembraneSplit<R>, ShellError> {
    let parts = membrane_stress(state, ref_con, moduli, None)?;
    let (sh_dil, sh_dev) = membrane_energy_shapes(state.j, state.i1);
    let psi_dil = moduli.k_bulk * sh_dil;
    let psi_dev = moduli.g_shear * sh_dev;
    if state.j.value() >= 1.0 {
        Ok(MembraneSplit {
            energy_pos: psi_dev + psi_dil,
            energy_neg: R::zero(),
            stress_pos: parts.dev.add(parts.dil),
            stress_neg: Sym2::zero(),
        })
    } else {
        Ok(MembraneSplit {
            energy_pos: psi_dev,
            energy_neg: psi_dil,
            stress_pos: parts.dev,
            stress_neg: parts.dil,
        })
    }
}

/// Thickness-integrated bending split: the 3D SVK bending energy density
/// xi^2 (12/T^3) (c/2) tr(K^2) is assigned per layer to the tensile or
/// compressive part by the sign of the layer stretch J~(xi) - 1, then
/// integrated with 4-point Gauss over [-T/2, T/2].
pub struct BendingSplit<R: Real> {
    pub energy_pos: R,
    pub energy_neg: R,
    pub moment_pos: Sym2<R>,
    pub moment_neg: Sym2<R>,
}

pub fn split_bending<R: Real>(
    state: &PointState<R>,
    rp: &RefPoint,
    c_bend: R,
    thickness: f64,
) -> BendingSplit<R> {
    // layer metrics from tangents G_a = A_a + xi N_{,a}, g_a = a_a + xi n_{,a}
    // with the Weingarten relations N_{,a} = -B_a^b A_b, n_{,a} = -b_a^b a_b.
    let full_moment = bending_moment(state, &rp.first.con, &rp.second.cov, c_bend);
    let energy_shape = bending_energy_shape(state, &rp.first.con, &rp.second.cov);
    let full_energy = c_bend * energy_shape;

    let (xi, wxi) = quadrature::gauss_legendre(4);
    let mut total = 0.0;
    let mut pos_weight = R::zero();
    for (z, w) in xi.iter().zip(&wxi) {
        let zeta = 0.5 * thickness * z; // xi in [-T/2, T/2]
        let wz = 0.5 * thickness * w;
        let weight = zeta * zeta * wz * 12.0 / (thickness * thickness * thickness);
        total += weight;
        // layer covariant metrics decide the branch per quadrature layer
        let g_cov = layer_metric(&state.first, &state.second, zeta);
        let g_ref = layer_metric_f64(&rp.first, &rp.second, zeta);
        let det_ref = g_ref.det();
        let jt = (g_cov.det().scale(1.0 / det_ref)).sqrt();
        if jt.value() >= 1.0 {
            pos_weight += R::from_f64(weight);
        }
    }
    // weights integrate xi^2 12/T^3 over the thickness exactly to 1
    debug_assert!((total - 1.0).abs() < 1e-12);
    let pos = pos_weight;
    let neg = R::from_f64(total) - pos;
    BendingSplit {
        energy_pos: full_energy * pos,
        energy_neg: full_energy * neg,
        moment_pos: full_moment.scale(pos),
        moment_neg: full_moment.scale(neg),
    }
}

fn layer_metric<R: Real>(
    first: &FirstFundamental<R>,
    second: &SecondFundamental<R>,
    zeta: f64,
) -> Sym2<R> {
    // g_{ab}(xi) = a_{ab} - 2 xi b_{ab} + xi^2 b_{ac} a^{cd} b_{db}
    let z = R::from_f64(zeta);
    let z2 = z * z;
    let bab = |a: usize, b: usize| {
        let mut s = R::zero();
        for c in 0..2 {
            for d in 0..2 {
                s += second.cov.get(a, c) * first.con.get(c, d) * second.cov.get(d, b);
            }
        }
        s
    };
    Sym2 {
        m11: first.cov.m11 - (z * second.cov.m11).scale(2.0) + z2 * bab(0, 0),
        m22: first.cov.m22 - (z * second.cov.m22).scale(2.0) + z2 * bab(1, 1),
        m12: first.cov.m12 - (z * second.cov.m12).scale(2.0) + z2 * bab(0, 1),
    }
}

fn layer_metric_f64(
    first: &FirstFundamental<f64>,
    second: &SecondFundamental<f64>,
    zeta: f64,
) -> Sym2<f64> {
    layer_metric(first, second, zeta)
}

/// Internal force of one element: f_int = int [sigma^{ab} N_{,a}^T a_b +
/// M^{ab} N_{;ab}^T n] da, integrated on the reference measure with da = J dA.
///
/// `vel` supplies nodal velocities for the Kelvin viscosity; `phase` supplies
/// per-point moduli, degradation and extra stress; `history` supplies the
/// history field driving the fracture split.
pub fn element_internal_force<R: Real>(
    qps: &[RefPoint],
    mat: &ShellMaterial,
    xs: &[V3<R>],
    vel: Option<&[V3<R>]>,
    phase: Option<&[PhasePoint<R>]>,
    out: &mut [R],
) -> Result<(), ShellError> {
    let n = xs.len();
    debug_assert_eq!(out.len(), 3 * n);
    for (q, rp) in qps.iter().enumerate() {
        let state = point_state(rp, xs)?;
        let pp = phase.map(|p| p[q]);
        let moduli = pp.map(|p| p.moduli).unwrap_or_else(|| PointModuli::from_material(mat));

        // covariant metric rate for viscosity
        let a_dot = vel.map(|vs| {
            let adot = crate::geometry::tangents(&rp.shape, vs);
            Sym2 {
                m11: (state.first.a[0].dot(adot[0])).scale(2.0),
                m22: (state.first.a[1].dot(adot[1])).scale(2.0),
                m12: state.first.a[0].dot(adot[1]) + state.first.a[1].dot(adot[0]),
            }
        });

        let (mut sigma, moment) = match mat.model {
            MembraneBending::KoiterNeoHookean => {
                let parts = membrane_stress(&state, &rp.first.con, &moduli, a_dot.as_ref())?;
                let m = bending_moment(&state, &rp.first.con, &rp.second.cov, moduli.c_bend);
                (parts.total(), m)
            }
            MembraneBending::SvkShell { youngs, poisson, thickness } => {
                let (mut s, m) = svk_stress_moment(&state, rp, youngs, poisson, thickness);
                if let (Some(rate), true) = (a_dot.as_ref(), moduli.eta.value() != 0.0) {
                    s = s.add(membrane_stress(&state, &rp.first.con, &moduli, Some(rate))?.visc);
                }
                (s, m)
            }
            // the fracture model carries no viscosity
            MembraneBending::FractureSplit { thickness } => {
                let g = pp.map(|p| p.g_deg).unwrap_or_else(R::one);
                let ms = split_membrane(&state, &rp.first.con, &moduli)?;
                let bs = split_bending(&state, rp, moduli.c_bend, thickness);
                let sigma = ms.stress_pos.scale(g).add(ms.stress_neg);
                let moment = bs.moment_pos.scale(g).add(bs.moment_neg);
                (sigma, moment)
            }
        };
        if let Some(extra) = pp.and_then(|p| p.extra_stress) {
            sigma = sigma.add(extra);
        }

        let ddn = covariant_second_deriv(&rp.shape, &state.second.gamma);
        let scale = state.j.scale(rp.da_ref); // da = J dA
        for i in 0..n {
            let d1 = rp.shape.d1[i];
            // sigma^{ab} N_{i,a} a_b
            let mut f = V3::<R>::zero();
            for a in 0..2 {
                let na = R::from_f64(d1[a]);
                for b in 0..2 {
                    f += state.first.a[b].scale(sigma.get(a, b) * na);
                }
            }
            // M^{ab} N_{i;ab} n
            let mn = moment.m11 * ddn[i][0] + moment.m22 * ddn[i][1] + (moment.m12 * ddn[i][2]).scale(2.0);
            f += state.first.n.scale(mn);
            for k in 0..3 {
                out[3 * i + k] += f.0[k] * scale;
            }
        }
    }
    Ok(())
}

fn svk_stress_moment<R: Real>(
    state: &PointState<R>,
    rp: &RefPoint,
    youngs: f64,
    poisson: f64,
    thickness: f64,
) -> (Sym2<R>, Sym2<R>) {
    let c = svk_c_tensor(&rp.first.con, youngs, poisson);
    let eps = Sym2 {
        m11: (state.first.cov.m11 - R::from_f64(rp.first.cov.m11)).scale(0.5),
        m22: (state.first.cov.m22 - R::from_f64(rp.first.cov.m22)).scale(0.5),
        m12: (state.first.cov.m12 - R::from_f64(rp.first.cov.m12)).scale(0.5),
    };
    let kap = Sym2 {
        m11: state.second.cov.m11 - R::from_f64(rp.second.cov.m11),
        m22: state.second.cov.m22 - R::from_f64(rp.second.cov.m22),
        m12: state.second.cov.m12 - R::from_f64(rp.second.cov.m12),
    };
    let contract = |m: &Sym2<R>, a: usize, b: usize| {
        let mut s = R::zero();
        for cc in 0..2 {
            for d in 0..2 {
                s += m.get(cc, d).scale(c(a, b, cc, d));
            }
        }
        s
    };
    let inv_j = R::one() / state.j;
    let tm = thickness;
    let tb = thickness * thickness * thickness / 12.0;
    let sigma = Sym2 {
        m11: contract(&eps, 0, 0).scale(tm) * inv_j,
        m22: contract(&eps, 1, 1).scale(tm) * inv_j,
        m12: contract(&eps, 0, 1).scale(tm) * inv_j,
    };
    let moment = Sym2 {
        m11: contract(&kap, 0, 0).scale(tb) * inv_j,
        m22: contract(&kap, 1, 1).scale(tb) * inv_j,
        m12: contract(&kap, 0, 1).scale(tb) * inv_j,
    };
    (sigma, moment)
}

/// Elastic energy density of the shell at a point, split into tensile and
/// compressive parts when the fracture model is active. Returns
/// (psi_el or g*psi+ + psi-, psi_plus) so callers can update the history field.
pub fn elastic_energy_density<R: Real>(
    state: &PointState<R>,
    rp: &RefPoint,
    mat: &ShellMaterial,
    moduli: &PointModuli<R>,
    g_deg: R,
) -> Result<(R, R), ShellError> {
    match mat.model {
        MembraneBending::KoiterNeoHookean => {
            let (sd, sv) = membrane_energy_shapes(state.j, state.i1);
            let bend = bending_energy_shape(state, &rp.first.con, &rp.second.cov);
            let psi = moduli.k_bulk * sd + moduli.g_shear * sv + moduli.c_bend * bend;
            Ok((psi, psi))
        }
        MembraneBending::SvkShell { youngs, poisson, thickness } => {
            let c = svk_c_tensor(&rp.first.con, youngs, poisson);
            let eps = Sym2 {
                m11: (state.first.cov.m11 - R::from_f64(rp.first.cov.m11)).scale(0.5),
                m22: (state.first.cov.m22 - R::from_f64(rp.first.cov.m22)).scale(0.5),
                m12: (state.first.cov.m12 - R::from_f64(rp.first.cov.m12)).scale(0.5),
            };
            let kap = Sym2 {
                m11: state.second.cov.m11 - R::from_f64(rp.second.cov.m11),
                m22: state.second.cov.m22 - R::from_f64(rp.second.cov.m22),
                m12: state.second.cov.m12 - R::from_f64(rp.second.cov.m12),
            };
            let quad = |m: &Sym2<R>| {
                let mut s = R::zero();
                for a in 0..2 {
                    for b in 0..2 {
                        for cc in 0..2 {
                            for d in 0..2 {
                                s += m.get(a, b).scale(c(a, b, cc, d) * 0.5) * m.get(cc, d);
                            }
                        }
                    }
                }
                s
            };
            let psi = quad(&eps).scale(thickness)
                + quad(&kap).scale(thickness * thickness * thickness / 12.0);
            Ok((psi, psi))
        }
        MembraneBending::FractureSplit { thickness } => {
            let ms = split_membrane(state, &rp.first.con, moduli)?;
            let bs = split_bending(state, rp, moduli.c_bend, thickness);
            let plus = ms.energy_pos + bs.energy_pos;
            let minus = ms.energy_neg + bs.energy_neg;
            Ok((g_deg * plus + minus, plus))
        }
    }
}

/// External force from follower pressure and a constant tangential body
/// force with contravariant components `f_alpha`:
/// f_ext = int N^T p n da + int N^T f^a a_a da.
pub fn element_external_force<R: Real>(
    qps: &[RefPoint],
    pressure: f64,
    f_tangent: [f64; 2],
    xs: &[V3<R>],
    out: &mut [R],
) -> Result<(), ShellError> {
    if pressure == 0.0 && f_tangent == [0.0, 0.0] {
        return Ok(());
    }
    let n = xs.len();
    for rp in qps {
        let first = surface_kinematics(&rp.shape, xs)?;
        let da = first.jac.scale(rp.w_param);
        let mut load = first.n.scale(R::from_f64(pressure));
        load += first.a[0].scale(R::from_f64(f_tangent[0]));
        load += first.a[1].scale(R::from_f64(f_tangent[1]));
        for i in 0..n {
            let w = R::from_f64(rp.shape.value[i]) * da;
            for k in 0..3 {
                out[3 * i + k] -= load.0[k] * w; // external force enters with minus
            }
        }
    }
    Ok(())
}

/// Inertia residual m_e xdd. Mass is conserved along the motion
/// (rho da = rho0 dA), so the mass form is evaluated once on the reference
/// measure; this keeps the semi-discrete dynamics conservative.
pub fn element_inertia<R: Real>(
    qps: &[RefPoint],
    density: f64,
    xs: &[V3<R>],
    acc: &[V3<R>],
    out: &mut [R],
) -> Result<(), ShellError> {
    let n = xs.len();
    let _ = xs;
    for rp in qps {
        let da = rp.da_ref * density;
        let mut a_here = V3::<R>::zero();
        for i in 0..n {
            a_here += acc[i].scale_f64(rp.shape.value[i]);
        }
        for i in 0..n {
            let w = rp.shape.value[i] * da;
            for k in 0..3 {
                out[3 * i + k] += a_here.0[k].scale(w);
            }
        }
    }
    Ok(())
}

/// Consistent mass matrix of one element (current configuration measure).
pub fn element_mass(
    qps: &[RefPoint],
    density: f64,
    xs: &[V3<f64>],
) -> Result<Vec<f64>, ShellError> {
    let n = xs.len();
    let mut m = vec![0.0; (3 * n) * (3 * n)];
    for rp in qps {
        let first = surface_kinematics(&rp.shape, xs)?;
        let da = first.jac * rp.w_param * density;
        for i in 0..n {
            for j in 0..n {
                let v = rp.shape.value[i] * rp.shape.value[j] * da;
                for k in 0..3 {
                    m[(3 * i + k) * 3 * n + (3 * j + k)] += v;
                }
            }
        }
    }
    Ok(m)
}

/// Elastic and viscous surface tension: gamma = 1/2 sigma^{ab} a_{ab}.
pub fn surface_tension<R: Real>(sigma_el: &Sym2<R>, sigma_visc: &Sym2<R>, a_cov: &Sym2<R>) -> (R, R) {
    ((sigma_el.ddot(*a_cov)).scale(0.5), (sigma_visc.ddot(*a_cov)).scale(0.5))
}

/// Dense element tangent d f / d x_e of the quasi-static internal + external
/// residual, by forward-mode dual sweeps. Row-major (3n x 3n).
pub fn element_tangent(
    qps: &[RefPoint],
    mat: &ShellMaterial,
    pressure: f64,
    xs: &[V3<f64>],
) -> Result<Vec<f64>, ShellError> {
    const LANES: usize = 4;
    let n = xs.len();
    let nd = 3 * n;
    let mut k = vec![0.0; nd * nd];
    let mut col = 0;
    while col < nd {
        let lanes = LANES.min(nd - col);
        let xd: Vec<V3<Dual<LANES>>> = (0..n)
            .map(|i| {
                V3([0, 1, 2].map(|c| {
                    let dof = 3 * i + c;
                    if dof >= col && dof < col + lanes {
                        Dual::variable(xs[i].0[c], dof - col)
                    } else {
                        Dual::constant(xs[i].0[c])
                    }
                }))
            })
            .collect();
        let mut out = vec![Dual::<LANES>::constant(0.0); nd];
        element_internal_force(qps, mat, &xd, None, None, &mut out)?;
        element_external_force(qps, pressure, [0.0, 0.0], &xd, &mut out)?;
        for (row, v) in out.iter().enumerate() {
            for l in 0..lanes {
                k[row * nd + col + l] = v.d[l];
            }
        }
        col += lanes;
    }
    Ok(k)
}

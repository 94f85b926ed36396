//! G1 (surface normal) and C1 (phase-field gradient) continuity constraints
//! across patch interfaces: constraint values, penalty and Lagrange-multiplier
//! force vectors, their consistent tangent blocks, penalty-parameter rules and
//! interface moment recovery.
//!
//! Conventions: scalar-valued products (metrics, cos/sin of the kink angle,
//! the gradient constraint) are dot products; the frame vectors come from
//! cross products. The reference angle enters through c0 = cos(alpha0),
//! s0 = sin(alpha0) frozen pointwise from the reference geometry.

use crate::geometry::{surface_kinematics, FirstFundamental, InterfaceFrame};
use crate::real::{Sym2, V3};
use crate::splines::{MultiPatchSurface, ShapeTable};
use crate::quadrature;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("inconsistent quadrature/interpolation pairing: {0}")]
    Pairing(String),
    #[error("degenerate penalty-rule input: {0}")]
    DegenerateInput(String),
    #[error("initial kink angle {alpha:.4} rad too far from reference {alpha0:.4} (limit {limit:.4})")]
    OutsideBasin { alpha: f64, alpha0: f64, limit: f64 },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Constraint enforcement method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMethod {
    Penalty,
    LmmConstant,
    LmmLinear,
}

/// Line quadrature rule along interface elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineRule {
    /// 1-point Gauss (midpoint rule)
    Gauss1,
    /// 2-point Gauss
    Gauss2,
    /// 2-point closed trapezoidal rule
    Trapezoidal2,
    /// 3-point Gauss
    Gauss3,
}

impl LineRule {
    pub fn points(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            LineRule::Gauss1 => quadrature::on_unit_interval(1),
            LineRule::Gauss2 => quadrature::on_unit_interval(2),
            LineRule::Gauss3 => quadrature::on_unit_interval(3),
            LineRule::Trapezoidal2 => quadrature::trapezoidal_unit(),
        }
    }
}

/// Rule for the phase-field penalty parameter.
#[derive(Debug, Clone, Copy)]
pub enum EpsPhiRule {
    Fixed(f64),
    /// eps_phi = eps0 2^{d (p-1)} for phase separation
    CahnHilliard { eps0: f64, depth: u32, degree: usize },
    /// eps_phi = eps0 (dt_max/dt) (1/dx_min) (dx_max/dx) for fracture
    Fracture { eps0: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct ConstraintConfig {
    pub method: ConstraintMethod,
    /// G1 penalty parameter [E0 L0]
    pub eps_n: f64,
    pub eps_phi: EpsPhiRule,
    pub rule: LineRule,
}

impl ConstraintConfig {
    /// The Lagrange multiplier method only converges when integrated
    /// consistently: constant interpolation excludes the trapezoidal rule and
    /// linear interpolation excludes the midpoint rule.
    pub fn validate(&self) -> Result<(), ConstraintError> {
        match (self.method, self.rule) {
            (ConstraintMethod::LmmConstant, LineRule::Trapezoidal2) => {
                Err(ConstraintError::Pairing(
                    "constant multiplier interpolation with the trapezoidal rule".into(),
                ))
            }
            (ConstraintMethod::LmmLinear, LineRule::Gauss1) => Err(ConstraintError::Pairing(
                "linear multiplier interpolation with the midpoint rule".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn multipliers_per_element(&self) -> usize {
        match self.method {
            ConstraintMethod::Penalty => 0,
            ConstraintMethod::LmmConstant => 1,
            ConstraintMethod::LmmLinear => 2,
        }
    }
}

/// Cahn-Hilliard penalty-parameter rule: eps_phi = eps0 2^{d (p-1)}.
pub fn penalty_parameter_ch(eps0: f64, depth: u32, degree: usize) -> f64 {
    eps0 * 2f64.powi((depth * (degree as u32 - 1)) as i32)
}

/// Fracture penalty-parameter rule:
/// eps_phi = eps0 (dt_max/dt) (1/dx_min) (dx_max/dx).
pub fn penalty_parameter_fracture(
    eps0: f64,
    dt: f64,
    dt_max: f64,
    dx: f64,
    dx_min: f64,
    dx_max: f64,
) -> Result<f64, ConstraintError> {
    if dt <= 0.0 || dx <= 0.0 || dx_min <= 0.0 {
        return Err(ConstraintError::DegenerateInput(format!(
            "dt = {dt}, dx = {dx}, dx_min = {dx_min}"
        )));
    }
    Ok(eps0 * (dt_max / dt) * (1.0 / dx_min) * (dx_max / dx))
}

/// Reference data of one line quadrature point.
#[derive(Debug, Clone)]
pub struct LinePoint {
    pub shape_a: ShapeTable,
    pub shape_b: Option<ShapeTable>,
    /// rational edge basis and derivative (w.r.t. side A edge parameter)
    pub edge_n: Vec<f64>,
    pub edge_dn: Vec<f64>,
    /// quadrature weight times reference line measure dS
    pub w_ds: f64,
    /// frozen reference angle data
    pub c0: f64,
    pub s0: f64,
    /// element-local coordinate in [0, 1] for multiplier interpolation
    pub s_unit: f64,
    /// reference (A^alpha . nu0) per side, for the fracture-config constraint
    pub ref_anu_a: [f64; 2],
    pub ref_anu_b: [f64; 2],
    pub mirror: Option<[f64; 3]>,
}

/// One interface line element prepared for assembly.
#[derive(Debug, Clone)]
pub struct BuiltLine {
    pub iface: usize,
    pub lel: usize,
    pub surf_a: usize,
    pub surf_b: Option<usize>,
    /// global control points of the active edge row (x_hat)
    pub edge_cps: Vec<usize>,
    /// reference length of this line element
    pub dx_ref: f64,
    pub alpha0: f64,
    pub points: Vec<LinePoint>,
}

/// Precompute line quadrature data for every interface line element.
pub fn build_line_contexts(
    mp: &MultiPatchSurface,
    rule: LineRule,
) -> Result<Vec<BuiltLine>, ConstraintError> {
    let (ss, ws) = rule.points();
    let mut out = Vec::new();
    for (iface_id, iface) in mp.interfaces.iter().enumerate() {
        let (pa, ea) = iface.a;
        let patch_a = &mp.patches[pa];
        let edge_pos_a: Vec<[f64; 3]> =
            iface.edge_local_a.iter().map(|&l| patch_a.cps[l].x).collect();
        for (lel_id, lel) in iface.line_elements.iter().enumerate() {
            let dt_a = lel.t_a.1 - lel.t_a.0;
            let mut points = Vec::with_capacity(ss.len());
            let mut dx_ref = 0.0;
            let mut edge_cps: Option<Vec<usize>> = None;
            for (k, &s) in ss.iter().enumerate() {
                let ta = lel.t_a.0 + s * dt_a;
                let xi_a = patch_a.edge_to_xi(ea, ta);
                let shape_a = patch_a
                    .shape_table(xi_a)
                    .expect("line qp inside patch domain");
                let cs = patch_a
                    .edge_curve_sample(ea, ta, &edge_pos_a)
                    .expect("edge sample");
                // reference line measure: |dX/dt| * dt
                let jac_ref = (cs.dx.iter().map(|x| x * x).sum::<f64>()).sqrt();
                let w_ds = jac_ref * dt_a.abs() * ws[k];
                dx_ref += w_ds;
                if edge_cps.is_none() {
                    edge_cps = Some(
                        (0..cs.n_funcs)
                            .map(|i| iface.edge_cps_global[cs.first + i])
                            .collect(),
                    );
                }
                let tau0 = V3([cs.dx[0] / jac_ref, cs.dx[1] / jac_ref, cs.dx[2] / jac_ref]);

                // reference normals and frames of both sides
                let ref_xa: Vec<V3<f64>> =
                    shape_a.cps.iter().map(|&c| V3(patch_a.cps[c].x)).collect();
                let fa0 = surface_kinematics(&shape_a, &ref_xa)?;
                let (shape_b, fb0_n, ref_anu_b) = match (lel.surf_b, lel.t_b) {
                    (Some(_), Some(tb_range)) => {
                        let (pb, eb) = iface.b.unwrap();
                        let patch_b = &mp.patches[pb];
                        let tb = tb_range.0 + s * (tb_range.1 - tb_range.0);
                        let xi_b = patch_b.edge_to_xi(eb, tb);
                        let shape_b =
                            patch_b.shape_table(xi_b).expect("line qp inside patch domain");
                        let ref_xb: Vec<V3<f64>> =
                            shape_b.cps.iter().map(|&c| V3(patch_b.cps[c].x)).collect();
                        let fb0 = surface_kinematics(&shape_b, &ref_xb)?;
                        let frame0 = InterfaceFrame::new(tau0, fa0.n, fb0.n)?;
                        let anu_b = [
                            fb0.a_con(0).dot(frame0.nu_t),
                            fb0.a_con(1).dot(frame0.nu_t),
                        ];
                        (Some(shape_b), Some(fb0.n), anu_b)
                    }
                    _ => (None, None, [0.0, 0.0]),
                };
                let n_b0 = match (fb0_n, iface.mirror_normal) {
                    (Some(n), _) => n,
                    (None, Some(m)) => V3(m),
                    _ => unreachable!("line element without side B or mirror"),
                };
                let frame0 = InterfaceFrame::new(tau0, fa0.n, n_b0)?;
                let c0 = frame0.cos_alpha();
                let s0 = frame0.sin_alpha();
                let ref_anu_a =
                    [fa0.a_con(0).dot(frame0.nu), fa0.a_con(1).dot(frame0.nu)];
                points.push(LinePoint {
                    shape_a,
                    shape_b,
                    edge_n: cs.n[..cs.n_funcs].to_vec(),
                    edge_dn: cs.dn[..cs.n_funcs].iter().map(|d| d / dt_a).collect(),
                    w_ds,
                    c0,
                    s0,
                    s_unit: s,
                    ref_anu_a,
                    ref_anu_b,
                    mirror: iface.mirror_normal,
                });
            }
            out.push(BuiltLine {
                iface: iface_id,
                lel: lel_id,
                surf_a: lel.surf_a,
                surf_b: lel.surf_b,
                edge_cps: edge_cps.unwrap(),
                dx_ref,
                alpha0: iface.alpha0,
                points,
            });
        }
    }
    Ok(out)
}

/// Current-configuration state of one line quadrature point.
pub struct QpState<'a> {
    pub p: &'a LinePoint,
    pub fa: FirstFundamental<f64>,
    pub fb: Option<FirstFundamental<f64>>,
    pub frame: InterfaceFrame<f64>,
    /// |a_xi| of the current edge curve
    pub line_jac: f64,
}

impl<'a> QpState<'a> {
    /// Evaluate the current frames from nodal positions. `x_hat` holds the
    /// positions of the active edge-row control points.
    pub fn new(
        p: &'a LinePoint,
        xa: &[V3<f64>],
        xb: Option<&[V3<f64>]>,
        x_hat: &[V3<f64>],
    ) -> Result<Self, ConstraintError> {
        let fa = surface_kinematics(&p.shape_a, xa)?;
        let fb = match (&p.shape_b, xb) {
            (Some(sb), Some(xb)) => Some(surface_kinematics(sb, xb)?),
            _ => None,
        };
        let mut a_xi = V3::zero();
        for (k, &dn) in p.edge_dn.iter().enumerate() {
            a_xi += x_hat[k].scale(dn);
        }
        let n_b = fb.map(|f| f.n).unwrap_or_else(|| V3(p.mirror.expect("mirror side")));
        let frame = InterfaceFrame::new(a_xi, fa.n, n_b)?;
        let line_jac = frame.line_jac;
        Ok(QpState { p, fa, fb, frame, line_jac })
    }

    /// cos/sin of the current kink angle.
    pub fn angle(&self) -> (f64, f64) {
        (self.frame.cos_alpha(), self.frame.sin_alpha())
    }
}

/// G1 constraint values at a point.
#[derive(Debug, Clone, Copy)]
pub struct G1Values {
    pub g_c: f64,
    pub g_s: f64,
    pub gbar_c: f64,
    pub gbar_s: f64,
    pub cos_a: f64,
    pub sin_a: f64,
}

/// g_c = cos(a0) - cos(a), g_s = sin(a0) - sin(a),
/// gbar_c = 1 - cos(a - a0), gbar_s = sin(a - a0).
pub fn g1_values(qp: &QpState) -> G1Values {
    let (cos_a, sin_a) = qp.angle();
    let (c0, s0) = (qp.p.c0, qp.p.s0);
    G1Values {
        g_c: c0 - cos_a,
        g_s: s0 - sin_a,
        gbar_c: 1.0 - (c0 * cos_a + s0 * sin_a),
        gbar_s: c0 * sin_a - s0 * cos_a,
        cos_a,
        sin_a,
    }
}

/// Planar-interface shortcut g_n = n - n~ (valid for alpha0 = 0).
pub fn g1_planar_gap(qp: &QpState) -> V3<f64> {
    qp.frame.n - qp.frame.n_t
}

/// C1 constraint value g_grad = grad_s(phi) . nu + grad_s(phi~) . nu~,
/// evaluated in the current configuration (`reference = false`) or with
/// frozen reference quantities (`reference = true`, fracture).
pub fn c1_value(
    qp: &QpState,
    dphi_a: [f64; 2],
    dphi_b: [f64; 2],
    reference: bool,
) -> f64 {
    if reference {
        dphi_a[0] * qp.p.ref_anu_a[0]
            + dphi_a[1] * qp.p.ref_anu_a[1]
            + dphi_b[0] * qp.p.ref_anu_b[0]
            + dphi_b[1] * qp.p.ref_anu_b[1]
    } else {
        let mut v = qp.fa.a_con(0).dot(qp.frame.nu) * dphi_a[0]
            + qp.fa.a_con(1).dot(qp.frame.nu) * dphi_a[1];
        if let Some(fb) = &qp.fb {
            v += fb.a_con(0).dot(qp.frame.nu_t) * dphi_b[0]
                + fb.a_con(1).dot(qp.frame.nu_t) * dphi_b[1];
        }
        v
    }
}

/// Recovered interface bending moment per unit length: eps_n sin(a - a0) for
/// the penalty method, the multiplier value for the Lagrange method.
pub fn recover_interface_moment(
    qp: &QpState,
    method: ConstraintMethod,
    eps_n: f64,
    qvals: &[f64],
) -> f64 {
    match method {
        ConstraintMethod::Penalty => {
            let v = g1_values(qp);
            eps_n * v.gbar_s
        }
        ConstraintMethod::LmmConstant => qvals[0],
        ConstraintMethod::LmmLinear => (1.0 - qp.p.s_unit) * qvals[0] + qp.p.s_unit * qvals[1],
    }
}

// ---------------------------------------------------------------------------
// helper operators of the linearization (3 x 3 blocks per node)
// ---------------------------------------------------------------------------

#[inline]
fn outer(a: V3<f64>, b: V3<f64>) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a.0[i] * b.0[j];
        }
    }
    m
}

#[inline]
fn mat_scale_add(dst: &mut [[f64; 3]; 3], src: &[[f64; 3]; 3], s: f64) {
    for i in 0..3 {
        for j in 0..3 {
            dst[i][j] += s * src[i][j];
        }
    }
}

/// d n / d x_j = -sum_c N_{j,c} a^c (x) n.
fn dn_dx(first: &FirstFundamental<f64>, shape: &ShapeTable, j: usize) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for c in 0..2 {
        let o = outer(first.a_con(c), first.n);
        mat_scale_add(&mut m, &o, -shape.d1[j][c]);
    }
    m
}

/// d a^alpha / d x_j = sum_b N_{j,b} [a^{ab} n (x) n - a^b (x) a^alpha].
fn dacon_dx(
    first: &FirstFundamental<f64>,
    shape: &ShapeTable,
    alpha: usize,
    j: usize,
) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    let nn = outer(first.n, first.n);
    for b in 0..2 {
        mat_scale_add(&mut m, &nn, shape.d1[j][b] * first.con.get(alpha, b));
        let o = outer(first.a_con(b), first.a_con(alpha));
        mat_scale_add(&mut m, &o, -shape.d1[j][b]);
    }
    m
}

/// d nu / d x_j = sum_a nu^a N_{j,a} n (x) n (the tangential-normal part).
fn dnu_dx(
    first: &FirstFundamental<f64>,
    nu: V3<f64>,
    shape: &ShapeTable,
    j: usize,
) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    let nn = outer(first.n, first.n);
    for a in 0..2 {
        let nu_a = nu.dot(first.a_con(a));
        mat_scale_add(&mut m, &nn, nu_a * shape.d1[j][a]);
    }
    m
}

/// d nu_side / d xhat_k = -(edge_dn_k / |a_xi|) tau (x) nu_side.
fn dnu_dxhat(frame: &InterfaceFrame<f64>, nu_side: V3<f64>, edge_dn_k: f64) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    let o = outer(frame.tau, nu_side);
    mat_scale_add(&mut m, &o, -edge_dn_k / frame.line_jac);
    m
}

#[inline]
fn matvec_t(m: &[[f64; 3]; 3], v: V3<f64>) -> V3<f64> {
    // m^T v
    V3([
        m[0][0] * v.0[0] + m[1][0] * v.0[1] + m[2][0] * v.0[2],
        m[0][1] * v.0[0] + m[1][1] * v.0[1] + m[2][1] * v.0[2],
        m[0][2] * v.0[0] + m[1][2] * v.0[1] + m[2][2] * v.0[2],
    ])
}

// ---------------------------------------------------------------------------
// G1 forces and tangents
// ---------------------------------------------------------------------------

/// Dense output of one line element's G1 contribution.
#[derive(Debug, Clone, Default)]
pub struct G1Out {
    pub f_a: Vec<f64>,
    pub f_b: Vec<f64>,
    pub f_q: Vec<f64>,
    /// row-major blocks; empty when not assembled
    pub k_aa: Vec<f64>,
    pub k_ab: Vec<f64>,
    pub k_ah: Vec<f64>,
    pub k_aq: Vec<f64>,
    pub k_ba: Vec<f64>,
    pub k_bb: Vec<f64>,
    pub k_bh: Vec<f64>,
    pub k_bq: Vec<f64>,
    pub k_qa: Vec<f64>,
    pub k_qb: Vec<f64>,
}

/// Multiplier shape functions on the line element.
#[inline]
pub fn multiplier_shapes(method: ConstraintMethod, s: f64) -> Vec<f64> {
    match method {
        ConstraintMethod::Penalty => vec![],
        ConstraintMethod::LmmConstant => vec![1.0],
        ConstraintMethod::LmmLinear => vec![1.0 - s, s],
    }
}

/// Assemble the G1 constraint of one line element. For the penalty method
/// `eps_n` scales the forces; for the Lagrange methods `qvals` holds the
/// multiplier values of this element and multiplier rows are produced.
#[allow(clippy::too_many_arguments)]
pub fn g1_element(
    line: &BuiltLine,
    xa: &[V3<f64>],
    xb: Option<&[V3<f64>]>,
    x_hat: &[V3<f64>],
    method: ConstraintMethod,
    eps_n: f64,
    qvals: &[f64],
    with_tangent: bool,
) -> Result<G1Out, ConstraintError> {
    let n_a = xa.len();
    let n_b = xb.map(|x| x.len()).unwrap_or(0);
    let n_h = x_hat.len();
    let n_q = method.multiplier_count();
    let mut out = G1Out {
        f_a: vec![0.0; 3 * n_a],
        f_b: vec![0.0; 3 * n_b],
        f_q: vec![0.0; n_q],
        ..Default::default()
    };
    if with_tangent {
        out.k_aa = vec![0.0; 9 * n_a * n_a];
        out.k_ab = vec![0.0; 9 * n_a * n_b];
        out.k_ah = vec![0.0; 9 * n_a * n_h];
        out.k_aq = vec![0.0; 3 * n_a * n_q];
        out.k_ba = vec![0.0; 9 * n_b * n_a];
        out.k_bb = vec![0.0; 9 * n_b * n_b];
        out.k_bh = vec![0.0; 9 * n_b * n_h];
        out.k_bq = vec![0.0; 3 * n_b * n_q];
        out.k_qa = vec![0.0; 3 * n_q * n_a];
        out.k_qb = vec![0.0; 3 * n_q * n_b];
    }

    for p in &line.points {
        let qp = QpState::new(p, xa, xb, x_hat)?;
        let (c0, s0) = (p.c0, p.s0);
        let vals = g1_values(&qp);
        let nsh = multiplier_shapes(method, p.s_unit);
        // scalar multiplier value at this point (penalty: eps_n acts in place)
        let (scale, d_coef, dt_coef) = match method {
            ConstraintMethod::Penalty => (eps_n, (c0, s0), (c0, s0)),
            _ => {
                let q: f64 = nsh.iter().zip(qvals).map(|(n, q)| n * q).sum();
                // d = (s0+c0) n + (s0-c0) nu and likewise for the tilde side
                (q, (s0 + c0, s0 - c0), (s0 + c0, s0 - c0))
            }
        };
        let d_vec = qp.frame.n.scale(d_coef.0) + qp.frame.nu.scale(d_coef.1);
        let dt_vec = qp.frame.n_t.scale(dt_coef.0) + qp.frame.nu_t.scale(dt_coef.1);
        let w = p.w_ds;

        // forces: f_a[i] += scale (d~ . a^alpha) N_{i,alpha} n
        let da = [dt_vec.dot(qp.fa.a_con(0)), dt_vec.dot(qp.fa.a_con(1))];
        for i in 0..n_a {
            let coef = scale * (p.shape_a.d1[i][0] * da[0] + p.shape_a.d1[i][1] * da[1]) * w;
            for k in 0..3 {
                out.f_a[3 * i + k] += coef * qp.frame.n.0[k];
            }
        }
        if let (Some(fb), Some(sb)) = (&qp.fb, &p.shape_b) {
            let db = [d_vec.dot(fb.a_con(0)), d_vec.dot(fb.a_con(1))];
            for i in 0..n_b {
                let coef = scale * (sb.d1[i][0] * db[0] + sb.d1[i][1] * db[1]) * w;
                for k in 0..3 {
                    out.f_b[3 * i + k] += coef * qp.frame.n_t.0[k];
                }
            }
        }
        // multiplier residual rows
        for (kq, nk) in nsh.iter().enumerate() {
            out.f_q[kq] += nk * (vals.gbar_c + vals.gbar_s) * w;
        }

        if !with_tangent {
            continue;
        }
        g1_tangent_at_point(&mut out, &qp, method, eps_n, qvals, &nsh, scale, d_vec, dt_vec, w);
    }
    Ok(out)
}

impl ConstraintMethod {
    pub fn multiplier_count(self) -> usize {
        match self {
            ConstraintMethod::Penalty => 0,
            ConstraintMethod::LmmConstant => 1,
            ConstraintMethod::LmmLinear => 2,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn g1_tangent_at_point(
    out: &mut G1Out,
    qp: &QpState,
    method: ConstraintMethod,
    _eps_n: f64,
    _qvals: &[f64],
    nsh: &[f64],
    scale: f64,
    d_vec: V3<f64>,
    dt_vec: V3<f64>,
    w: f64,
) {
    let p = qp.p;
    let (c0, s0) = (p.c0, p.s0);
    let sa = &p.shape_a;
    let n_a = sa.value.len();
    let (n_b, sb) = match &p.shape_b {
        Some(sb) => (sb.value.len(), Some(sb)),
        None => (0, None),
    };
    let n_h = p.edge_n.len();
    let fa = &qp.fa;
    let fb = qp.fb.as_ref();
    let frame = &qp.frame;

    // coefficients of d and d~ in the n/nu basis
    let (cn, cnu) = match method {
        ConstraintMethod::Penalty => (c0, s0),
        _ => (s0 + c0, s0 - c0),
    };

    let da = [dt_vec.dot(fa.a_con(0)), dt_vec.dot(fa.a_con(1))];

    // --- rows f_a ---
    for i in 0..n_a {
        let ni = [sa.d1[i][0], sa.d1[i][1]];
        // K_aa: scale * N_{i,a} [ n (d~^T dA^a_j) + (d~ . a^a) dn_j ]
        for j in 0..n_a {
            let rj = dn_dx(fa, sa, j);
            let mut block = [[0.0; 3]; 3];
            for alpha in 0..2 {
                let aj = dacon_dx(fa, sa, alpha, j);
                let o = outer(frame.n, matvec_t(&aj, dt_vec));
                mat_scale_add(&mut block, &o, scale * ni[alpha] * w);
                mat_scale_add(&mut block, &rj, scale * ni[alpha] * da[alpha] * w);
            }
            add_block3(&mut out.k_aa, n_a, i, j, &block);
        }
        // K_ab: scale * N_{i,a} n (a^a)^T (cn dn~_j + cnu dnu~_j)
        if let (Some(fb), Some(sb)) = (fb, sb) {
            for j in 0..n_b {
                let rbj = dn_dx(fb, sb, j);
                let vbj = dnu_dx(fb, frame.nu_t, sb, j);
                let mut dd = [[0.0; 3]; 3];
                mat_scale_add(&mut dd, &rbj, cn);
                mat_scale_add(&mut dd, &vbj, cnu);
                let mut block = [[0.0; 3]; 3];
                for alpha in 0..2 {
                    let o = outer(frame.n, matvec_t(&dd, fa.a_con(alpha)));
                    mat_scale_add(&mut block, &o, scale * ni[alpha] * w);
                }
                add_block3(&mut out.k_ab, n_b, i, j, &block);
            }
        }
        // K_ah: scale * N_{i,a} cnu n (a^a)^T dnu~_dxhat_k
        for k in 0..n_h {
            let v2 = dnu_dxhat(frame, frame.nu_t, p.edge_dn[k]);
            let mut block = [[0.0; 3]; 3];
            for alpha in 0..2 {
                let o = outer(frame.n, matvec_t(&v2, fa.a_con(alpha)));
                mat_scale_add(&mut block, &o, scale * ni[alpha] * cnu * w);
            }
            add_block3(&mut out.k_ah, n_h, i, k, &block);
        }
        // K_aq: N_{i,a} (d~ . a^a) n Nq_k
        for (kq, nk) in nsh.iter().enumerate() {
            let coef = (ni[0] * da[0] + ni[1] * da[1]) * nk * w;
            for kk in 0..3 {
                out.k_aq[(3 * i + kk) * nsh.len() + kq] += coef * frame.n.0[kk];
            }
        }
    }

    // --- rows f_b ---
    if let (Some(fb), Some(sb)) = (fb, sb) {
        let db = [d_vec.dot(fb.a_con(0)), d_vec.dot(fb.a_con(1))];
        for i in 0..n_b {
            let ni = [sb.d1[i][0], sb.d1[i][1]];
            for j in 0..n_b {
                let rbj = dn_dx(fb, sb, j);
                let mut block = [[0.0; 3]; 3];
                for alpha in 0..2 {
                    let abj = dacon_dx(fb, sb, alpha, j);
                    let o = outer(frame.n_t, matvec_t(&abj, d_vec));
                    mat_scale_add(&mut block, &o, scale * ni[alpha] * w);
                    mat_scale_add(&mut block, &rbj, scale * ni[alpha] * db[alpha] * w);
                }
                add_block3(&mut out.k_bb, n_b, i, j, &block);
            }
            for j in 0..n_a {
                let raj = dn_dx(fa, sa, j);
                let vaj = dnu_dx(fa, frame.nu, sa, j);
                let mut dd = [[0.0; 3]; 3];
                mat_scale_add(&mut dd, &raj, cn);
                mat_scale_add(&mut dd, &vaj, cnu);
                let mut block = [[0.0; 3]; 3];
                for alpha in 0..2 {
                    let o = outer(frame.n_t, matvec_t(&dd, fb.a_con(alpha)));
                    mat_scale_add(&mut block, &o, scale * ni[alpha] * w);
                }
                add_block3(&mut out.k_ba, n_a, i, j, &block);
            }
            for k in 0..n_h {
                let v2 = dnu_dxhat(frame, frame.nu, p.edge_dn[k]);
                let mut block = [[0.0; 3]; 3];
                for alpha in 0..2 {
                    let o = outer(frame.n_t, matvec_t(&v2, fb.a_con(alpha)));
                    mat_scale_add(&mut block, &o, scale * ni[alpha] * cnu * w);
                }
                add_block3(&mut out.k_bh, n_h, i, k, &block);
            }
            for (kq, nk) in nsh.iter().enumerate() {
                let coef = (ni[0] * db[0] + ni[1] * db[1]) * nk * w;
                for kk in 0..3 {
                    out.k_bq[(3 * i + kk) * nsh.len() + kq] += coef * frame.n_t.0[kk];
                }
            }
        }
    }

    // --- multiplier rows: d(gbar_c + gbar_s)/dx = w_x . dn, etc. ---
    if !nsh.is_empty() {
        // from the variations of cos(a-a0) and sin(a-a0):
        // x-part coefficient on dn: -(c0+s0) n~ + (c0-s0) nu~
        let wx = frame.n_t.scale(-(c0 + s0)) + frame.nu_t.scale(c0 - s0);
        let wxt = frame.n.scale(-(c0 + s0)) + frame.nu.scale(c0 - s0);
        for (kq, nk) in nsh.iter().enumerate() {
            for j in 0..n_a {
                let rj = dn_dx(fa, sa, j);
                let row = matvec_t(&rj, wx);
                for kk in 0..3 {
                    out.k_qa[kq * 3 * n_a + 3 * j + kk] += nk * w * row.0[kk];
                }
            }
            if let (Some(fb), Some(sb)) = (fb, sb) {
                for j in 0..n_b {
                    let rj = dn_dx(fb, sb, j);
                    let row = matvec_t(&rj, wxt);
                    for kk in 0..3 {
                        out.k_qb[kq * 3 * n_b + 3 * j + kk] += nk * w * row.0[kk];
                    }
                }
            }
        }
    }
}

fn add_block3(dst: &mut [f64], ncols_nodes: usize, i: usize, j: usize, block: &[[f64; 3]; 3]) {
    let ncols = 3 * ncols_nodes;
    for r in 0..3 {
        for c in 0..3 {
            dst[(3 * i + r) * ncols + 3 * j + c] += block[r][c];
        }
    }
}

// ---------------------------------------------------------------------------
// C1 forces and tangents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct C1Out {
    pub f_pa: Vec<f64>,
    pub f_pb: Vec<f64>,
    pub f_lam: Vec<f64>,
    pub k_papa: Vec<f64>,
    pub k_papb: Vec<f64>,
    pub k_pbpa: Vec<f64>,
    pub k_pbpb: Vec<f64>,
    pub k_pala: Vec<f64>,
    pub k_pbla: Vec<f64>,
    pub k_lapa: Vec<f64>,
    pub k_lapb: Vec<f64>,
    /// x-coupling blocks (current-configuration constraint only)
    pub k_paxa: Vec<f64>,
    pub k_paxb: Vec<f64>,
    pub k_paxh: Vec<f64>,
    pub k_pbxa: Vec<f64>,
    pub k_pbxb: Vec<f64>,
    pub k_pbxh: Vec<f64>,
    pub k_laxa: Vec<f64>,
    pub k_laxb: Vec<f64>,
    pub k_laxh: Vec<f64>,
}

/// Assemble the C1 constraint of one line element.
///
/// `reference = true` freezes the interface geometry in the reference
/// configuration (fracture); all x-blocks then vanish. Penalty: `eps_phi`
/// scales forces; LMM: `lvals` holds multiplier values.
#[allow(clippy::too_many_arguments)]
pub fn c1_element(
    line: &BuiltLine,
    xa: &[V3<f64>],
    xb: Option<&[V3<f64>]>,
    x_hat: &[V3<f64>],
    phia: &[f64],
    phib: &[f64],
    method: ConstraintMethod,
    eps_phi: f64,
    lvals: &[f64],
    reference: bool,
    with_tangent: bool,
) -> Result<C1Out, ConstraintError> {
    let n_a = phia.len();
    let n_b = phib.len();
    let n_h = x_hat.len();
    let n_l = method.multiplier_count();
    let mut out = C1Out {
        f_pa: vec![0.0; n_a],
        f_pb: vec![0.0; n_b],
        f_lam: vec![0.0; n_l],
        ..Default::default()
    };
    if with_tangent {
        out.k_papa = vec![0.0; n_a * n_a];
        out.k_papb = vec![0.0; n_a * n_b];
        out.k_pbpa = vec![0.0; n_b * n_a];
        out.k_pbpb = vec![0.0; n_b * n_b];
        out.k_pala = vec![0.0; n_a * n_l];
        out.k_pbla = vec![0.0; n_b * n_l];
        out.k_lapa = vec![0.0; n_l * n_a];
        out.k_lapb = vec![0.0; n_l * n_b];
        if !reference {
            out.k_paxa = vec![0.0; n_a * 3 * n_a];
            out.k_paxb = vec![0.0; n_a * 3 * n_b];
            out.k_paxh = vec![0.0; n_a * 3 * n_h];
            out.k_pbxa = vec![0.0; n_b * 3 * n_a];
            out.k_pbxb = vec![0.0; n_b * 3 * n_b];
            out.k_pbxh = vec![0.0; n_b * 3 * n_h];
            out.k_laxa = vec![0.0; n_l * 3 * n_a];
            out.k_laxb = vec![0.0; n_l * 3 * n_b];
            out.k_laxh = vec![0.0; n_l * 3 * n_h];
        }
    }

    for p in &line.points {
        let qp = QpState::new(p, xa, xb, x_hat)?;
        let sa = &p.shape_a;
        let sb = p.shape_b.as_ref();
        let mut dphi_a = [0.0; 2];
        for i in 0..n_a {
            dphi_a[0] += phia[i] * sa.d1[i][0];
            dphi_a[1] += phia[i] * sa.d1[i][1];
        }
        let mut dphi_b = [0.0; 2];
        if let Some(sb) = sb {
            for i in 0..n_b {
                dphi_b[0] += phib[i] * sb.d1[i][0];
                dphi_b[1] += phib[i] * sb.d1[i][1];
            }
        }
        let gval = c1_value(&qp, dphi_a, dphi_b, reference);
        // direction scalars (a^alpha . nu) per side
        let anu_a = if reference {
            p.ref_anu_a
        } else {
            [qp.fa.a_con(0).dot(qp.frame.nu), qp.fa.a_con(1).dot(qp.frame.nu)]
        };
        let anu_b = if reference {
            p.ref_anu_b
        } else if let Some(fb) = &qp.fb {
            [fb.a_con(0).dot(qp.frame.nu_t), fb.a_con(1).dot(qp.frame.nu_t)]
        } else {
            [0.0, 0.0]
        };
        let nsh = multiplier_shapes(method, p.s_unit);
        let scale = match method {
            ConstraintMethod::Penalty => eps_phi * gval,
            _ => nsh.iter().zip(lvals).map(|(n, l)| n * l).sum(),
        };
        let w = p.w_ds;

        // forces
        for i in 0..n_a {
            out.f_pa[i] += scale * (sa.d1[i][0] * anu_a[0] + sa.d1[i][1] * anu_a[1]) * w;
        }
        if let Some(sb) = sb {
            for i in 0..n_b {
                out.f_pb[i] += scale * (sb.d1[i][0] * anu_b[0] + sb.d1[i][1] * anu_b[1]) * w;
            }
        }
        for (kl, nk) in nsh.iter().enumerate() {
            out.f_lam[kl] += nk * gval * w;
        }

        if !with_tangent {
            continue;
        }

        // scalar shape rows: B_a[i] = N_{i,alpha} (a^alpha . nu)
        let ba: Vec<f64> =
            (0..n_a).map(|i| sa.d1[i][0] * anu_a[0] + sa.d1[i][1] * anu_a[1]).collect();
        let bb: Vec<f64> = match sb {
            Some(sb) => {
                (0..n_b).map(|i| sb.d1[i][0] * anu_b[0] + sb.d1[i][1] * anu_b[1]).collect()
            }
            None => vec![],
        };

        match method {
            ConstraintMethod::Penalty => {
                for i in 0..n_a {
                    for j in 0..n_a {
                        out.k_papa[i * n_a + j] += eps_phi * ba[i] * ba[j] * w;
                    }
                    for j in 0..n_b {
                        out.k_papb[i * n_b + j] += eps_phi * ba[i] * bb[j] * w;
                    }
                }
                for i in 0..n_b {
                    for j in 0..n_a {
                        out.k_pbpa[i * n_a + j] += eps_phi * bb[i] * ba[j] * w;
                    }
                    for j in 0..n_b {
                        out.k_pbpb[i * n_b + j] += eps_phi * bb[i] * bb[j] * w;
                    }
                }
            }
            _ => {
                for (kl, nk) in nsh.iter().enumerate() {
                    for i in 0..n_a {
                        out.k_pala[i * n_l + kl] += ba[i] * nk * w;
                        out.k_lapa[kl * n_a + i] += nk * ba[i] * w;
                    }
                    for i in 0..n_b {
                        out.k_pbla[i * n_l + kl] += bb[i] * nk * w;
                        out.k_lapb[kl * n_b + i] += nk * bb[i] * w;
                    }
                }
            }
        }

        if reference {
            continue;
        }

        // x-coupling blocks of the current-configuration constraint
        // dW^alpha_j rows: d(a^alpha . nu)/dx_j = -sum_b N_{j,b} nu^b (a^alpha)^T
        let w_rows_a = |alpha: usize, j: usize| -> V3<f64> {
            let mut r = V3::zero();
            for b in 0..2 {
                let nu_b = qp.frame.nu.dot(qp.fa.a_con(b));
                r += qp.fa.a_con(alpha).scale(-sa.d1[j][b] * nu_b);
            }
            r
        };
        let w_rows_b = |alpha: usize, j: usize| -> V3<f64> {
            let fb = qp.fb.as_ref().unwrap();
            let sb = sb.unwrap();
            let mut r = V3::zero();
            for b in 0..2 {
                let nu_b = qp.frame.nu_t.dot(fb.a_con(b));
                r += fb.a_con(alpha).scale(-sb.d1[j][b] * nu_b);
            }
            r
        };
        // d(a^alpha . nu)/dxhat_k = (a^alpha)^T V2_k = -(edge_dn_k/|a|)(a^alpha . tau) nu
        let h_rows_a = |alpha: usize, k: usize| -> V3<f64> {
            let coef = -p.edge_dn[k] / qp.frame.line_jac * qp.fa.a_con(alpha).dot(qp.frame.tau);
            qp.frame.nu.scale(coef)
        };
        let h_rows_b = |alpha: usize, k: usize| -> V3<f64> {
            let fb = qp.fb.as_ref().unwrap();
            let coef =
                -p.edge_dn[k] / qp.frame.line_jac * fb.a_con(alpha).dot(qp.frame.tau);
            qp.frame.nu_t.scale(coef)
        };
        // dg/dx rows
        let dg_dxa = |j: usize| -> V3<f64> {
            w_rows_a(0, j).scale(dphi_a[0]) + w_rows_a(1, j).scale(dphi_a[1])
        };
        let dg_dxb = |j: usize| -> V3<f64> {
            if qp.fb.is_some() {
                w_rows_b(0, j).scale(dphi_b[0]) + w_rows_b(1, j).scale(dphi_b[1])
            } else {
                V3::zero()
            }
        };
        let dg_dxh = |k: usize| -> V3<f64> {
            let mut r = h_rows_a(0, k).scale(dphi_a[0]) + h_rows_a(1, k).scale(dphi_a[1]);
            if qp.fb.is_some() {
                r += h_rows_b(0, k).scale(dphi_b[0]) + h_rows_b(1, k).scale(dphi_b[1]);
            }
            r
        };

        let lam_scale = scale; // eps_phi * g (penalty) or lambda (lmm)
        for i in 0..n_a {
            let ni = [sa.d1[i][0], sa.d1[i][1]];
            for j in 0..n_a {
                let mut row = dg_dxa(j).scale(if method == ConstraintMethod::Penalty {
                    eps_phi * ba[i]
                } else {
                    0.0
                });
                // lam d(B_a[i])/dx_j
                row += (w_rows_a(0, j).scale(ni[0]) + w_rows_a(1, j).scale(ni[1]))
                    .scale(lam_scale);
                for kk in 0..3 {
                    out.k_paxa[i * 3 * n_a + 3 * j + kk] += row.0[kk] * w;
                }
            }
            for j in 0..n_b {
                let row = dg_dxb(j).scale(if method == ConstraintMethod::Penalty {
                    eps_phi * ba[i]
                } else {
                    0.0
                });
                for kk in 0..3 {
                    out.k_paxb[i * 3 * n_b + 3 * j + kk] += row.0[kk] * w;
                }
            }
            for k in 0..n_h {
                let mut row = dg_dxh(k).scale(if method == ConstraintMethod::Penalty {
                    eps_phi * ba[i]
                } else {
                    0.0
                });
                row += (h_rows_a(0, k).scale(ni[0]) + h_rows_a(1, k).scale(ni[1]))
                    .scale(lam_scale);
                for kk in 0..3 {
                    out.k_paxh[i * 3 * n_h + 3 * k + kk] += row.0[kk] * w;
                }
            }
        }
        if let Some(sb2) = sb {
            for i in 0..n_b {
                let ni = [sb2.d1[i][0], sb2.d1[i][1]];
                for j in 0..n_a {
                    let row = dg_dxa(j).scale(if method == ConstraintMethod::Penalty {
                        eps_phi * bb[i]
                    } else {
                        0.0
                    });
                    for kk in 0..3 {
                        out.k_pbxa[i * 3 * n_a + 3 * j + kk] += row.0[kk] * w;
                    }
                }
                for j in 0..n_b {
                    let mut row = dg_dxb(j).scale(if method == ConstraintMethod::Penalty {
                        eps_phi * bb[i]
                    } else {
                        0.0
                    });
                    row += (w_rows_b(0, j).scale(ni[0]) + w_rows_b(1, j).scale(ni[1]))
                        .scale(lam_scale);
                    for kk in 0..3 {
                        out.k_pbxb[i * 3 * n_b + 3 * j + kk] += row.0[kk] * w;
                    }
                }
                for k in 0..n_h {
                    let mut row = dg_dxh(k).scale(if method == ConstraintMethod::Penalty {
                        eps_phi * bb[i]
                    } else {
                        0.0
                    });
                    row += (h_rows_b(0, k).scale(ni[0]) + h_rows_b(1, k).scale(ni[1]))
                        .scale(lam_scale);
                    for kk in 0..3 {
                        out.k_pbxh[i * 3 * n_h + 3 * k + kk] += row.0[kk] * w;
                    }
                }
            }
        }
        for (kl, nk) in nsh.iter().enumerate() {
            for j in 0..n_a {
                let row = dg_dxa(j).scale(*nk);
                for kk in 0..3 {
                    out.k_laxa[kl * 3 * n_a + 3 * j + kk] += row.0[kk] * w;
                }
            }
            for j in 0..n_b {
                let row = dg_dxb(j).scale(*nk);
                for kk in 0..3 {
                    out.k_laxb[kl * 3 * n_b + 3 * j + kk] += row.0[kk] * w;
                }
            }
            for k in 0..n_h {
                let row = dg_dxh(k).scale(*nk);
                for kk in 0..3 {
                    out.k_laxh[kl * 3 * n_h + 3 * k + kk] += row.0[kk] * w;
                }
            }
        }
    }
    Ok(out)
}

/// Newton basin pre-check: the initial kink angle must satisfy
/// |alpha_i - alpha0| < pi/4 (Lagrange multipliers) or < pi (penalty).
pub fn check_initial_basin(
    lines: &[BuiltLine],
    positions: &[V3<f64>],
    elem_cps: impl Fn(usize) -> Vec<usize>,
    method: ConstraintMethod,
) -> Result<(), ConstraintError> {
    let limit = match method {
        ConstraintMethod::Penalty => std::f64::consts::PI,
        _ => std::f64::consts::FRAC_PI_4,
    };
    for line in lines {
        let cps_a = elem_cps(line.surf_a);
        let xa: Vec<V3<f64>> = cps_a.iter().map(|&c| positions[c]).collect();
        let xb: Option<Vec<V3<f64>>> = line
            .surf_b
            .map(|sb| elem_cps(sb).iter().map(|&c| positions[c]).collect());
        let xh: Vec<V3<f64>> = line.edge_cps.iter().map(|&c| positions[c]).collect();
        for p in &line.points {
            let qp = QpState::new(p, &xa, xb.as_deref(), &xh)?;
            let (cos_a, sin_a) = qp.angle();
            let alpha = sin_a.atan2(cos_a);
            let alpha0 = p.s0.atan2(p.c0);
            let mut diff = alpha - alpha0;
            while diff > std::f64::consts::PI {
                diff -= 2.0 * std::f64::consts::PI;
            }
            while diff < -std::f64::consts::PI {
                diff += 2.0 * std::f64::consts::PI;
            }
            if diff.abs() >= limit {
                return Err(ConstraintError::OutsideBasin { alpha, alpha0, limit });
            }
        }
    }
    Ok(())
}

/// Korteweg-style record of interface constraint magnitudes for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct ConstraintDiagnostics {
    pub max_gbar_c: f64,
    pub max_gbar_s: f64,
    pub max_g_grad: f64,
}

pub use crate::real::Sym2 as _Sym2Reexport;
// (internal convenience; Sym2 itself is re-exported from `real`)

#[allow(dead_code)]
fn _unused(_: Sym2<f64>) {}

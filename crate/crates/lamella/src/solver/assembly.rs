//! Monolithic residual and tangent assembly over surface elements, boundary
//! moment lines, interface constraints and point loads.
//!
//! Element residuals are evaluated generically; the tangent columns come from
//! forward-mode dual sweeps over the element unknowns, so every element block
//! is the exact derivative of the code that produced the residual. Constraint
//! blocks are assembled from their closed-form linearizations.

use super::linear::Triplets;
use super::{Model, PhaseConfig, SolveError, StageMap};
use crate::constraints::{
    c1_element, g1_element, penalty_parameter_ch, penalty_parameter_fracture,
    EpsPhiRule,
};
use crate::phasefield::{
    ch_element_residual, degradation, fracture_element_residual, korteweg_stress, mixture_moduli,
    ChCoupling,
};
use crate::real::{Dual, Real, V3};
use crate::shell::{
    self, PhasePoint, PointModuli, RefPoint, ShellError, ShellMaterial,
};
use crate::splines::{MultiPatchSurface, ShapeTable};
use crate::quadrature;

#[derive(Debug, Clone, Copy)]
pub struct AssembleOpts {
    pub tangent: bool,
    pub load_factor: f64,
    /// (dt, dt_max) for the fracture penalty rule
    pub time: Option<(f64, f64)>,
}

impl Default for AssembleOpts {
    fn default() -> Self {
        AssembleOpts { tangent: false, load_factor: 1.0, time: None }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ConstraintReport {
    pub max_gbar_c: f64,
    pub max_gbar_s: f64,
    pub max_g_grad: f64,
}

pub struct Assembled {
    pub residual: Vec<f64>,
    pub triplets: Option<Triplets>,
    pub clamps: usize,
    pub constraint_report: ConstraintReport,
}

const LANES: usize = 6;

/// Assemble the full-length residual (and tangent) at the primary unknown `u`.
pub fn assemble(
    model: &Model,
    history: &[Vec<f64>],
    u: &[f64],
    stage: &StageMap,
    opts: AssembleOpts,
) -> Result<Assembled, SolveError> {
    let n_total = model.dofs.n_total;
    let mut residual = vec![0.0; n_total];
    let mut triplets = opts.tangent.then(|| Triplets::new(n_total));
    let mut clamps = 0usize;

    // surface elements
    for (e, elem) in model.surface.elements.iter().enumerate() {
        let cps = &elem.cps_global;
        let n = cps.len();
        let n_loc = local_dof_count(model, n);
        let mut u_loc = vec![0.0f64; n_loc];
        gather_local(model, cps, u, &mut u_loc);

        let mut out = vec![0.0f64; n_loc];
        clamps += eval_element(model, e, history, &u_loc, stage, &mut out)?;
        scatter_residual(model, cps, &out, &mut residual);

        if let Some(trip) = triplets.as_mut() {
            let dofs = local_dof_ids(model, cps);
            let mut col = 0;
            while col < n_loc {
                let lanes = LANES.min(n_loc - col);
                let ud: Vec<Dual<LANES>> = u_loc
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        if i >= col && i < col + lanes {
                            Dual::variable(v, i - col)
                        } else {
                            Dual::constant(v)
                        }
                    })
                    .collect();
                let mut outd = vec![Dual::<LANES>::constant(0.0); n_loc];
                eval_element(model, e, history, &ud, stage, &mut outd)?;
                for (row, v) in outd.iter().enumerate() {
                    for l in 0..lanes {
                        if v.d[l] != 0.0 {
                            trip.push(dofs[row], dofs[col + l], v.d[l]);
                        }
                    }
                }
                col += lanes;
            }
        }
    }

    // point loads (dead)
    if model.dofs.mech {
        for pl in &model.point_loads {
            for k in 0..3 {
                residual[model.dofs.x_dof(pl.cp, k)] -= opts.load_factor * pl.force[k];
            }
        }
    }

    // follower edge moments
    for ml in &model.moment_lines {
        assemble_moment_line(model, ml, u, stage, opts, &mut residual, triplets.as_mut())?;
    }

    // interface constraints
    let mut report = ConstraintReport::default();
    if model.constraints.is_some() {
        assemble_constraints(
            model,
            u,
            stage,
            opts,
            &mut residual,
            triplets.as_mut(),
            &mut report,
        )?;
    }

    Ok(Assembled { residual, triplets, clamps, constraint_report: report })
}

fn local_dof_count(model: &Model, n: usize) -> usize {
    let mut c = 0;
    if model.dofs.mech {
        c += 3 * n;
    }
    if model.dofs.phase {
        c += n;
    }
    c
}

fn gather_local(model: &Model, cps: &[usize], u: &[f64], out: &mut [f64]) {
    let n = cps.len();
    let mut o = 0;
    if model.dofs.mech {
        for (i, &cp) in cps.iter().enumerate() {
            for k in 0..3 {
                out[3 * i + k] = u[model.dofs.x_dof(cp, k)];
            }
        }
        o = 3 * n;
    }
    if model.dofs.phase {
        for (i, &cp) in cps.iter().enumerate() {
            out[o + i] = u[model.dofs.phi_dof(cp)];
        }
    }
}

fn local_dof_ids(model: &Model, cps: &[usize]) -> Vec<usize> {
    let n = cps.len();
    let mut ids = Vec::with_capacity(local_dof_count(model, n));
    if model.dofs.mech {
        for &cp in cps {
            for k in 0..3 {
                ids.push(model.dofs.x_dof(cp, k));
            }
        }
    }
    if model.dofs.phase {
        for &cp in cps {
            ids.push(model.dofs.phi_dof(cp));
        }
    }
    ids
}

fn scatter_residual(model: &Model, cps: &[usize], out: &[f64], residual: &mut [f64]) {
    let n = cps.len();
    let mut o = 0;
    if model.dofs.mech {
        for (i, &cp) in cps.iter().enumerate() {
            for k in 0..3 {
                residual[model.dofs.x_dof(cp, k)] += out[3 * i + k];
            }
        }
        o = 3 * n;
    }
    if model.dofs.phase {
        for (i, &cp) in cps.iter().enumerate() {
            residual[model.dofs.phi_dof(cp)] += out[o + i];
        }
    }
}

/// Generic element evaluation: builds the stage kinematics from the local
/// unknowns and accumulates mechanical and phase residual rows.
fn eval_element<R: Real>(
    model: &Model,
    e: usize,
    history: &[Vec<f64>],
    u_loc: &[R],
    stage: &StageMap,
    out: &mut [R],
) -> Result<usize, ShellError> {
    let elem = &model.surface.elements[e];
    let cps = &elem.cps_global;
    let n = cps.len();
    let qps = &model.ref_points[e];
    let mut clamps = 0usize;

    // stage kinematics
    let (xs, vel, acc): (Vec<V3<R>>, Option<Vec<V3<R>>>, Option<Vec<V3<R>>>) = if model.dofs.mech {
        let xs: Vec<V3<R>> = (0..n)
            .map(|i| {
                let cp = cps[i];
                V3([0, 1, 2].map(|k| {
                    u_loc[3 * i + k].scale(stage.cx) + R::from_f64(stage.x_rest[cp].0[k])
                }))
            })
            .collect();
        if stage.dynamic {
            let vel = (0..n)
                .map(|i| {
                    let cp = cps[i];
                    V3([0, 1, 2].map(|k| {
                        u_loc[3 * i + k].scale(stage.cv) + R::from_f64(stage.v_rest[cp].0[k])
                    }))
                })
                .collect();
            let acc = (0..n)
                .map(|i| {
                    let cp = cps[i];
                    V3([0, 1, 2].map(|k| {
                        u_loc[3 * i + k].scale(stage.ca) + R::from_f64(stage.a_rest[cp].0[k])
                    }))
                })
                .collect();
            (xs, Some(vel), Some(acc))
        } else {
            (xs, None, None)
        }
    } else {
        // mechanics off: reference geometry as constants
        let patch_positions = &model.surface.positions;
        (
            cps.iter().map(|&cp| V3::from_f64(patch_positions[cp])).collect(),
            None,
            None,
        )
    };
    let phi_off = if model.dofs.mech { 3 * n } else { 0 };
    let (phi, phi_dot): (Option<Vec<R>>, Option<Vec<R>>) = if model.dofs.phase {
        let phi: Vec<R> = (0..n)
            .map(|i| {
                u_loc[phi_off + i].scale(stage.cphi) + R::from_f64(stage.phi_rest[cps[i]])
            })
            .collect();
        let phi_dot: Vec<R> = (0..n)
            .map(|i| {
                u_loc[phi_off + i].scale(stage.cphidot)
                    + R::from_f64(stage.phidot_rest[cps[i]])
            })
            .collect();
        (Some(phi), Some(phi_dot))
    } else {
        (None, None)
    };

    // mechanical rows
    if let Some(mech) = &model.mechanics {
        let phase_pts = build_phase_points(model, qps, &xs, phi.as_deref(), &mech.material)?;
        let (out_x, _) = out.split_at_mut(3 * n);
        shell::element_internal_force(
            qps,
            &mech.material,
            &xs,
            vel.as_deref(),
            phase_pts.as_deref(),
            out_x,
        )?;
        if mech.pressure != 0.0 {
            shell::element_external_force(qps, mech.pressure, [0.0, 0.0], &xs, out_x)?;
        }
        if stage.dynamic {
            if let Some(acc) = &acc {
                shell::element_inertia(qps, mech.material.density, &xs, acc, out_x)?;
            }
        }
    }

    // phase rows
    if let (Some(phase_cfg), Some(phi)) = (&model.phase, phi.as_ref()) {
        let out_phi = &mut out[phi_off..phi_off + n];
        match phase_cfg {
            PhaseConfig::CahnHilliard { spec, rho, mixture } => {
                let coupling = match (&model.mechanics, mixture) {
                    (Some(m), Some(mix)) => {
                        Some(ChCoupling { material: &m.material, mixture: mix })
                    }
                    _ => None,
                };
                clamps += ch_element_residual(
                    qps,
                    spec,
                    *rho,
                    coupling.as_ref(),
                    &xs,
                    phi,
                    phi_dot.as_ref().unwrap(),
                    out_phi,
                )?;
            }
            PhaseConfig::Fracture(spec) => {
                fracture_element_residual(qps, spec, &history[e], phi, out_phi);
            }
        }
    }

    Ok(clamps)
}

/// Per-quadrature-point phase coupling for the mechanical rows.
fn build_phase_points<R: Real>(
    model: &Model,
    qps: &[RefPoint],
    xs: &[V3<R>],
    phi: Option<&[R]>,
    material: &ShellMaterial,
) -> Result<Option<Vec<PhasePoint<R>>>, ShellError> {
    let (Some(phase_cfg), Some(phi)) = (&model.phase, phi) else {
        return Ok(None);
    };
    let mut pts = Vec::with_capacity(qps.len());
    for rp in qps {
        let mut phi_here = R::zero();
        let mut dphi = [R::zero(); 2];
        for i in 0..phi.len() {
            phi_here += phi[i].scale(rp.shape.value[i]);
            dphi[0] += phi[i].scale(rp.shape.d1[i][0]);
            dphi[1] += phi[i].scale(rp.shape.d1[i][1]);
        }
        let pp = match phase_cfg {
            PhaseConfig::CahnHilliard { spec, mixture, .. } => {
                let moduli = match mixture {
                    Some(mix) => mixture_moduli(phi_here, mix).0,
                    None => PointModuli::from_material(material),
                };
                let first = crate::geometry::surface_kinematics(&rp.shape, xs)?;
                let extra = korteweg_stress(dphi, &first.con, spec);
                PhasePoint { moduli, g_deg: R::one(), extra_stress: Some(extra) }
            }
            PhaseConfig::Fracture(spec) => {
                let (g, _, _) = degradation(phi_here, spec.s_residual);
                PhasePoint {
                    moduli: PointModuli::from_material(material),
                    g_deg: g,
                    extra_stress: None,
                }
            }
        };
        pts.push(pp);
    }
    Ok(Some(pts))
}

// ---------------------------------------------------------------------------
// boundary edge moments
// ---------------------------------------------------------------------------

/// One boundary line element carrying a distributed follower moment.
#[derive(Debug, Clone)]
pub struct MomentLineCtx {
    pub elem: usize,
    pub m_tau: f64,
    pub qps: Vec<MomentQp>,
}

#[derive(Debug, Clone)]
pub struct MomentQp {
    pub shape: ShapeTable,
    /// derivative of the rational edge basis w.r.t. the edge parameter
    pub edge_dn: Vec<f64>,
    /// element-local indices of the active edge-row control points
    pub edge_local: Vec<usize>,
    pub w_ds: f64,
    /// +-1 so that tau x n points outward in the reference configuration
    pub orient: f64,
}

pub fn build_moment_lines(
    mp: &MultiPatchSurface,
    moments: &[super::EdgeMoment],
) -> Result<Vec<MomentLineCtx>, SolveError> {
    let mut out = Vec::new();
    for m in moments {
        let patch = &mp.patches[m.patch];
        let kv = patch.edge_knots(m.edge);
        let bps = kv.breakpoints();
        let edge_cps_local = patch.edge_cp_indices(m.edge);
        let edge_pos: Vec<[f64; 3]> = edge_cps_local.iter().map(|&l| patch.cps[l].x).collect();
        let n_spans_u = patch.ku.nonzero_spans().len();
        let n_spans_v = patch.kv.nonzero_spans().len();
        let (gs, ws) = quadrature::on_unit_interval(kv.degree() + 1);
        for k in 0..bps.len() - 1 {
            let elem = match m.edge {
                0 => mp.element_at(m.patch, k, 0),
                1 => mp.element_at(m.patch, n_spans_u - 1, k),
                2 => mp.element_at(m.patch, k, n_spans_v - 1),
                3 => mp.element_at(m.patch, 0, k),
                _ => unreachable!(),
            };
            let elem_cps = &mp.elements[elem].cps_local;
            let dt = bps[k + 1] - bps[k];
            let mut qps = Vec::with_capacity(gs.len());
            for (g, w) in gs.iter().zip(&ws) {
                let t = bps[k] + g * dt;
                let xi = patch.edge_to_xi(m.edge, t);
                let shape = patch.shape_table(xi).expect("edge qp inside domain");
                let cs = patch.edge_curve_sample(m.edge, t, &edge_pos).expect("edge sample");
                let jac_ref = cs.dx.iter().map(|x| x * x).sum::<f64>().sqrt();
                // reference outward direction in the parameter plane
                let ref_xs: Vec<V3<f64>> =
                    shape.cps.iter().map(|&c| V3(patch.cps[c].x)).collect();
                let f0 = crate::geometry::surface_kinematics(&shape, &ref_xs)
                    .map_err(ShellError::from)?;
                let outward = match m.edge {
                    0 => -f0.a[1],
                    1 => f0.a[0],
                    2 => f0.a[1],
                    3 => -f0.a[0],
                    _ => unreachable!(),
                };
                let tau0 = V3([cs.dx[0] / jac_ref, cs.dx[1] / jac_ref, cs.dx[2] / jac_ref]);
                let nu0 = tau0.cross(f0.n);
                let orient = if nu0.dot(outward) >= 0.0 { 1.0 } else { -1.0 };
                let edge_local: Vec<usize> = (0..cs.n_funcs)
                    .map(|i| {
                        let patch_local = edge_cps_local[cs.first + i];
                        elem_cps
                            .iter()
                            .position(|&c| c == patch_local)
                            .expect("edge cp belongs to the adjacent element")
                    })
                    .collect();
                qps.push(MomentQp {
                    shape,
                    edge_dn: cs.dn[..cs.n_funcs].iter().map(|d| d / dt).collect(),
                    edge_local,
                    w_ds: jac_ref * dt * w,
                    orient,
                });
            }
            out.push(MomentLineCtx { elem, m_tau: m.m_tau, qps });
        }
    }
    Ok(out)
}

fn assemble_moment_line(
    model: &Model,
    ml: &MomentLineCtx,
    u: &[f64],
    stage: &StageMap,
    opts: AssembleOpts,
    residual: &mut [f64],
    triplets: Option<&mut Triplets>,
) -> Result<(), SolveError> {
    let cps = &model.surface.elements[ml.elem].cps_global;
    let n = cps.len();
    let m_val = ml.m_tau * opts.load_factor;

    let gather = |u: &[f64]| -> Vec<f64> {
        let mut ux = vec![0.0; 3 * n];
        for (i, &cp) in cps.iter().enumerate() {
            for k in 0..3 {
                ux[3 * i + k] = u[model.dofs.x_dof(cp, k)];
            }
        }
        ux
    };
    let ux = gather(u);

    let eval = |uloc: &[f64], out: &mut [f64]| -> Result<(), ShellError> {
        eval_moment::<f64>(ml, cps, uloc, stage, m_val, out)
    };
    let mut out = vec![0.0; 3 * n];
    eval(&ux, &mut out)?;
    for (i, &cp) in cps.iter().enumerate() {
        for k in 0..3 {
            residual[model.dofs.x_dof(cp, k)] += out[3 * i + k];
        }
    }
    if let Some(trip) = triplets {
        let mut col = 0;
        let nd = 3 * n;
        while col < nd {
            let lanes = LANES.min(nd - col);
            let ud: Vec<Dual<LANES>> = ux
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if i >= col && i < col + lanes {
                        Dual::variable(v, i - col)
                    } else {
                        Dual::constant(v)
                    }
                })
                .collect();
            let mut outd = vec![Dual::<LANES>::constant(0.0); nd];
            eval_moment::<Dual<LANES>>(ml, cps, &ud, stage, m_val, &mut outd)?;
            for (row, v) in outd.iter().enumerate() {
                let ri = model.dofs.x_dof(cps[row / 3], row % 3);
                for l in 0..lanes {
                    if v.d[l] != 0.0 {
                        let ci = model.dofs.x_dof(cps[(col + l) / 3], (col + l) % 3);
                        trip.push(ri, ci, v.d[l]);
                    }
                }
            }
            col += lanes;
        }
    }
    Ok(())
}

/// Follower edge moment residual: + int m_tau (a^c . nu) N_{i,c} n dS with
/// nu = tau x n oriented outward.
fn eval_moment<R: Real>(
    ml: &MomentLineCtx,
    cps: &[usize],
    u_loc: &[R],
    stage: &StageMap,
    m_val: f64,
    out: &mut [R],
) -> Result<(), ShellError> {
    let n = cps.len();
    for qp in &ml.qps {
        let xs: Vec<V3<R>> = (0..n)
            .map(|i| {
                V3([0, 1, 2].map(|k| {
                    u_loc[3 * i + k].scale(stage.cx)
                        + R::from_f64(stage.x_rest[cps[i]].0[k])
                }))
            })
            .collect();
        let first = crate::geometry::surface_kinematics(&qp.shape, &xs)?;
        let mut a_xi = V3::<R>::zero();
        for (k, &loc) in qp.edge_local.iter().enumerate() {
            a_xi += xs[loc].scale_f64(qp.edge_dn[k]);
        }
        let tau = a_xi.scale((R::one() / a_xi.norm()).scale(qp.orient));
        let nu = tau.cross(first.n);
        let anu = [first.a_con(0).dot(nu), first.a_con(1).dot(nu)];
        for i in 0..n {
            let coef = (anu[0].scale(qp.shape.d1[i][0]) + anu[1].scale(qp.shape.d1[i][1]))
                .scale(m_val * qp.w_ds);
            for k in 0..3 {
                out[3 * i + k] += coef * first.n.0[k];
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// interface constraints
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn assemble_constraints(
    model: &Model,
    u: &[f64],
    stage: &StageMap,
    opts: AssembleOpts,
    residual: &mut [f64],
    mut triplets: Option<&mut Triplets>,
    report: &mut ConstraintReport,
) -> Result<(), SolveError> {
    let setup = model.constraints.as_ref().unwrap();
    let dofs = &model.dofs;
    let mp = &model.surface;

    // stage positions and phase of all control points
    let n_cps = mp.n_global_cps;
    let x_int: Vec<V3<f64>> = (0..n_cps)
        .map(|cp| {
            if dofs.mech {
                V3([0, 1, 2].map(|k| u[dofs.x_dof(cp, k)] * stage.cx + stage.x_rest[cp].0[k]))
            } else {
                V3(mp.positions[cp])
            }
        })
        .collect();
    let phi_int: Vec<f64> = (0..n_cps)
        .map(|cp| {
            if dofs.phase {
                u[dofs.phi_dof(cp)] * stage.cphi + stage.phi_rest[cp]
            } else {
                0.0
            }
        })
        .collect();

    let fracture = matches!(model.phase, Some(PhaseConfig::Fracture(_)));
    let (dx_min, dx_max) = line_dx_stats(&model.lines);

    for (li, line) in model.lines.iter().enumerate() {
        let cps_a = &mp.elements[line.surf_a].cps_global;
        let cps_b = line.surf_b.map(|sb| &mp.elements[sb].cps_global);
        let xa: Vec<V3<f64>> = cps_a.iter().map(|&c| x_int[c]).collect();
        let xb: Option<Vec<V3<f64>>> =
            cps_b.map(|cb| cb.iter().map(|&c| x_int[c]).collect());
        let xh: Vec<V3<f64>> = line.edge_cps.iter().map(|&c| x_int[c]).collect();

        // --- G1 ---
        if setup.enforce_g1 && dofs.mech {
            let qvals: Vec<f64> = dofs.q_dofs[li].iter().map(|&d| u[d]).collect();
            let g1 = g1_element(
                line,
                &xa,
                xb.as_deref(),
                &xh,
                setup.config.method,
                setup.config.eps_n,
                &qvals,
                opts.tangent,
            )?;
            // residual rows
            for (i, &cp) in cps_a.iter().enumerate() {
                for k in 0..3 {
                    residual[dofs.x_dof(cp, k)] += g1.f_a[3 * i + k];
                }
            }
            if let Some(cb) = cps_b {
                for (i, &cp) in cb.iter().enumerate() {
                    for k in 0..3 {
                        residual[dofs.x_dof(cp, k)] += g1.f_b[3 * i + k];
                    }
                }
            }
            for (k, &d) in dofs.q_dofs[li].iter().enumerate() {
                residual[d] += g1.f_q[k];
            }
            if let Some(trip) = triplets.as_deref_mut() {
                let xa_ids = x_ids(dofs, cps_a);
                let xb_ids = cps_b.map(|cb| x_ids(dofs, cb)).unwrap_or_default();
                let xh_ids = x_ids(dofs, &line.edge_cps);
                let q_ids = &dofs.q_dofs[li];
                scatter_dense(trip, &xa_ids, &xa_ids, &g1.k_aa, stage.cx);
                scatter_dense(trip, &xa_ids, &xb_ids, &g1.k_ab, stage.cx);
                scatter_dense(trip, &xa_ids, &xh_ids, &g1.k_ah, stage.cx);
                scatter_dense(trip, &xa_ids, q_ids, &g1.k_aq, 1.0);
                scatter_dense(trip, &xb_ids, &xa_ids, &g1.k_ba, stage.cx);
                scatter_dense(trip, &xb_ids, &xb_ids, &g1.k_bb, stage.cx);
                scatter_dense(trip, &xb_ids, &xh_ids, &g1.k_bh, stage.cx);
                scatter_dense(trip, &xb_ids, q_ids, &g1.k_bq, 1.0);
                scatter_dense(trip, q_ids, &xa_ids, &g1.k_qa, stage.cx);
                scatter_dense(trip, q_ids, &xb_ids, &g1.k_qb, stage.cx);
            }
            // diagnostics
            for p in &line.points {
                let qp = crate::constraints::QpState::new(p, &xa, xb.as_deref(), &xh)?;
                let v = crate::constraints::g1_values(&qp);
                report.max_gbar_c = report.max_gbar_c.max(v.gbar_c.abs());
                report.max_gbar_s = report.max_gbar_s.max(v.gbar_s.abs());
            }
        }

        // --- C1 ---
        if setup.enforce_c1 && dofs.phase && line.surf_b.is_some() {
            let phia: Vec<f64> = cps_a.iter().map(|&c| phi_int[c]).collect();
            let phib: Vec<f64> =
                cps_b.map(|cb| cb.iter().map(|&c| phi_int[c]).collect()).unwrap_or_default();
            let lvals: Vec<f64> = dofs.lam_dofs[li].iter().map(|&d| u[d]).collect();
            let eps_phi = match setup.config.eps_phi {
                EpsPhiRule::Fixed(v) => v,
                EpsPhiRule::CahnHilliard { eps0, depth, degree } => {
                    penalty_parameter_ch(eps0, depth, degree)
                }
                EpsPhiRule::Fracture { eps0 } => {
                    let (dt, dt_max) = opts.time.unwrap_or((1.0, 1.0));
                    penalty_parameter_fracture(eps0, dt, dt_max, line.dx_ref, dx_min, dx_max)?
                }
            };
            let c1 = c1_element(
                line,
                &xa,
                xb.as_deref(),
                &xh,
                &phia,
                &phib,
                setup.config.method,
                eps_phi,
                &lvals,
                fracture,
                opts.tangent,
            )?;
            for (i, &cp) in cps_a.iter().enumerate() {
                residual[dofs.phi_dof(cp)] += c1.f_pa[i];
            }
            if let Some(cb) = cps_b {
                for (i, &cp) in cb.iter().enumerate() {
                    residual[dofs.phi_dof(cp)] += c1.f_pb[i];
                }
            }
            for (k, &d) in dofs.lam_dofs[li].iter().enumerate() {
                residual[d] += c1.f_lam[k];
            }
            if let Some(trip) = triplets.as_deref_mut() {
                let pa_ids: Vec<usize> = cps_a.iter().map(|&c| dofs.phi_dof(c)).collect();
                let pb_ids: Vec<usize> = cps_b
                    .map(|cb| cb.iter().map(|&c| dofs.phi_dof(c)).collect())
                    .unwrap_or_default();
                let l_ids = &dofs.lam_dofs[li];
                scatter_dense(trip, &pa_ids, &pa_ids, &c1.k_papa, stage.cphi);
                scatter_dense(trip, &pa_ids, &pb_ids, &c1.k_papb, stage.cphi);
                scatter_dense(trip, &pb_ids, &pa_ids, &c1.k_pbpa, stage.cphi);
                scatter_dense(trip, &pb_ids, &pb_ids, &c1.k_pbpb, stage.cphi);
                scatter_dense(trip, &pa_ids, l_ids, &c1.k_pala, 1.0);
                scatter_dense(trip, &pb_ids, l_ids, &c1.k_pbla, 1.0);
                scatter_dense(trip, l_ids, &pa_ids, &c1.k_lapa, stage.cphi);
                scatter_dense(trip, l_ids, &pb_ids, &c1.k_lapb, stage.cphi);
                if !fracture && dofs.mech {
                    let xa_ids = x_ids(dofs, cps_a);
                    let xb_ids = cps_b.map(|cb| x_ids(dofs, cb)).unwrap_or_default();
                    let xh_ids = x_ids(dofs, &line.edge_cps);
                    scatter_dense(trip, &pa_ids, &xa_ids, &c1.k_paxa, stage.cx);
                    scatter_dense(trip, &pa_ids, &xb_ids, &c1.k_paxb, stage.cx);
                    scatter_dense(trip, &pa_ids, &xh_ids, &c1.k_paxh, stage.cx);
                    scatter_dense(trip, &pb_ids, &xa_ids, &c1.k_pbxa, stage.cx);
                    scatter_dense(trip, &pb_ids, &xb_ids, &c1.k_pbxb, stage.cx);
                    scatter_dense(trip, &pb_ids, &xh_ids, &c1.k_pbxh, stage.cx);
                    scatter_dense(trip, l_ids, &xa_ids, &c1.k_laxa, stage.cx);
                    scatter_dense(trip, l_ids, &xb_ids, &c1.k_laxb, stage.cx);
                    scatter_dense(trip, l_ids, &xh_ids, &c1.k_laxh, stage.cx);
                }
            }
            // diagnostics: |g_grad| at quadrature points
            for p in &line.points {
                let qp = crate::constraints::QpState::new(p, &xa, xb.as_deref(), &xh)?;
                let sa = &p.shape_a;
                let mut da = [0.0; 2];
                for i in 0..phia.len() {
                    da[0] += phia[i] * sa.d1[i][0];
                    da[1] += phia[i] * sa.d1[i][1];
                }
                let mut db = [0.0; 2];
                if let Some(sb) = &p.shape_b {
                    for i in 0..phib.len() {
                        db[0] += phib[i] * sb.d1[i][0];
                        db[1] += phib[i] * sb.d1[i][1];
                    }
                }
                let g = crate::constraints::c1_value(&qp, da, db, fracture);
                report.max_g_grad = report.max_g_grad.max(g.abs());
            }
        }
    }
    Ok(())
}

fn x_ids(dofs: &super::DofMap, cps: &[usize]) -> Vec<usize> {
    let mut ids = Vec::with_capacity(3 * cps.len());
    for &cp in cps {
        for k in 0..3 {
            ids.push(dofs.x_dof(cp, k));
        }
    }
    ids
}

fn scatter_dense(trip: &mut Triplets, rows: &[usize], cols: &[usize], block: &[f64], fac: f64) {
    if block.is_empty() || rows.is_empty() || cols.is_empty() {
        return;
    }
    debug_assert_eq!(block.len(), rows.len() * cols.len());
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let v = block[i * cols.len() + j] * fac;
            if v != 0.0 {
                trip.push(r, c, v);
            }
        }
    }
}

pub fn line_dx_stats(lines: &[crate::constraints::BuiltLine]) -> (f64, f64) {
    let mut dx_min = f64::INFINITY;
    let mut dx_max: f64 = 0.0;
    for l in lines {
        dx_min = dx_min.min(l.dx_ref);
        dx_max = dx_max.max(l.dx_ref);
    }
    if lines.is_empty() {
        (1.0, 1.0)
    } else {
        (dx_min, dx_max)
    }
}

// ---------------------------------------------------------------------------
// global scalar monitors
// ---------------------------------------------------------------------------

/// Total integral of rho phi over the current surface.
pub fn total_ch_mass(model: &Model, u: &[f64]) -> f64 {
    let rho = match &model.phase {
        Some(PhaseConfig::CahnHilliard { rho, .. }) => *rho,
        _ => 1.0,
    };
    let mut mass = 0.0;
    for (e, elem) in model.surface.elements.iter().enumerate() {
        let (xs, phi) = gather_x_phi(model, elem, u);
        mass += crate::phasefield::ch_mass(&model.ref_points[e], rho, &xs, &phi);
    }
    mass
}

/// Total Cahn-Hilliard free energy.
pub fn total_ch_energy(model: &Model, u: &[f64]) -> f64 {
    let spec = match &model.phase {
        Some(PhaseConfig::CahnHilliard { spec, .. }) => *spec,
        _ => panic!("not a Cahn-Hilliard model"),
    };
    let mut e_tot = 0.0;
    for (e, elem) in model.surface.elements.iter().enumerate() {
        let (xs, phi) = gather_x_phi(model, elem, u);
        e_tot += crate::phasefield::ch_energy(&model.ref_points[e], &spec, &xs, &phi);
    }
    e_tot
}

/// Total fracture surface energy.
pub fn total_fracture_energy(model: &Model, u: &[f64]) -> f64 {
    let spec = match &model.phase {
        Some(PhaseConfig::Fracture(spec)) => *spec,
        _ => panic!("not a fracture model"),
    };
    let mut e_tot = 0.0;
    for (e, _) in model.surface.elements.iter().enumerate() {
        let elem = &model.surface.elements[e];
        let (_, phi) = gather_x_phi(model, elem, u);
        e_tot += crate::phasefield::fracture_energy(&model.ref_points[e], &spec, &phi);
    }
    e_tot
}

fn gather_x_phi(
    model: &Model,
    elem: &crate::splines::SurfaceElement,
    u: &[f64],
) -> (Vec<V3<f64>>, Vec<f64>) {
    let xs: Vec<V3<f64>> = elem
        .cps_global
        .iter()
        .map(|&cp| {
            if model.dofs.mech {
                V3([0, 1, 2].map(|k| u[model.dofs.x_dof(cp, k)]))
            } else {
                V3(model.surface.positions[cp])
            }
        })
        .collect();
    let phi: Vec<f64> = elem
        .cps_global
        .iter()
        .map(|&cp| if model.dofs.phase { u[model.dofs.phi_dof(cp)] } else { 1.0 })
        .collect();
    (xs, phi)
}

/// Update the fracture history field from the converged state at t_{n+1}.
pub fn update_history(model: &Model, u: &[f64], history: &mut [Vec<f64>]) -> Result<(), SolveError> {
    let Some(mech) = &model.mechanics else {
        return Ok(());
    };
    if !matches!(model.phase, Some(PhaseConfig::Fracture(_))) {
        return Ok(());
    }
    for (e, elem) in model.surface.elements.iter().enumerate() {
        let (xs, _) = gather_x_phi(model, elem, u);
        for (q, rp) in model.ref_points[e].iter().enumerate() {
            let state = shell::point_state(rp, &xs).map_err(ShellError::from)?;
            let moduli = PointModuli::from_material(&mech.material);
            let (_, psi_plus) =
                shell::elastic_energy_density(&state, rp, &mech.material, &moduli, 1.0)?;
            history[e][q] = crate::phasefield::history_update(history[e][q], psi_plus);
        }
    }
    Ok(())
}

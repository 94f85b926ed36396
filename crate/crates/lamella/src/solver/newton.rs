//! Newton-Raphson on the reduced (free-dof) system with a banded direct
//! solve, iteration trace and optional condition instrumentation.

use super::assembly::{assemble, AssembleOpts};
use super::linear::{reverse_cuthill_mckee, BandLu, Triplets};
use super::{Model, SolveError, StageMap};
use crate::real::V3;

#[derive(Debug, Clone, Copy)]
pub struct NewtonParams {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    /// estimate the 1-norm condition number each factorization
    pub record_condition: bool,
    /// declare ill-conditioning when the estimate exceeds this
    pub cond_guard: Option<f64>,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            tol_abs: 1e-10,
            tol_rel: 1e-8,
            max_iter: 25,
            record_condition: false,
            cond_guard: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct NewtonTrace {
    pub norms: Vec<f64>,
    pub iterations: usize,
    pub condition: Option<f64>,
    pub clamps: usize,
    pub max_g_grad: f64,
    pub max_gbar: f64,
}

/// Solve the stage residual to tolerance, updating `u` in place. Dirichlet
/// values must already be set in `u`.
pub fn newton_solve(
    model: &Model,
    history: &[Vec<f64>],
    u: &mut [f64],
    stage: &StageMap,
    opts: AssembleOpts,
    params: &NewtonParams,
) -> Result<NewtonTrace, SolveError> {
    // constraint basin pre-check on the initial guess
    if let Some(setup) = &model.constraints {
        if setup.enforce_g1 && model.dofs.mech {
            let pos: Vec<V3<f64>> = (0..model.surface.n_global_cps)
                .map(|cp| V3([0, 1, 2].map(|k| u[model.dofs.x_dof(cp, k)])))
                .collect();
            crate::constraints::check_initial_basin(
                &model.lines,
                &pos,
                |e| model.surface.elements[e].cps_global.clone(),
                setup.config.method,
            )?;
        }
    }

    let mut trace = NewtonTrace::default();
    let mut perm: Option<Vec<usize>> = None;
    let mut r0 = 0.0;

    for it in 0..params.max_iter {
        let opts_t = AssembleOpts { tangent: true, ..opts };
        let asm = assemble(model, history, u, stage, opts_t)?;
        trace.clamps += asm.clamps;
        trace.max_g_grad = trace.max_g_grad.max(asm.constraint_report.max_g_grad);
        trace.max_gbar = trace
            .max_gbar
            .max(asm.constraint_report.max_gbar_c.max(asm.constraint_report.max_gbar_s));

        // reduce to free dofs
        let dofs = &model.dofs;
        let n_free = dofs.n_free();
        let mut r_free = vec![0.0; n_free];
        for (fi, &dof) in dofs.free_dofs.iter().enumerate() {
            r_free[fi] = asm.residual[dof];
        }
        let rnorm = r_free.iter().map(|v| v * v).sum::<f64>().sqrt();
        trace.norms.push(rnorm);
        // the largest residual seen sets the force scale of this solve, so
        // the tolerances are meaningful across problems with very different
        // stiffness magnitudes
        r0 = r0.max(rnorm);
        if rnorm < params.tol_abs.max(params.tol_rel * r0) {
            trace.iterations = it;
            return Ok(trace);
        }

        let trip = asm.triplets.expect("tangent requested");
        let (rows, cols, vals) = (trip.rows, trip.cols, trip.vals);
        // free-only triplets
        let mut fr = Vec::with_capacity(vals.len());
        let mut fc = Vec::with_capacity(vals.len());
        let mut fv = Vec::with_capacity(vals.len());
        for k in 0..vals.len() {
            let fi = dofs.free_index[rows[k]];
            let fj = dofs.free_index[cols[k]];
            if fi != usize::MAX && fj != usize::MAX {
                fr.push(fi);
                fc.push(fj);
                fv.push(vals[k]);
            }
        }
        // bandwidth-reducing permutation, computed once per solve
        let p = perm.get_or_insert_with(|| {
            let mut adj = vec![Vec::new(); n_free];
            for k in 0..fv.len() {
                if fr[k] != fc[k] {
                    adj[fr[k]].push(fc[k]);
                    adj[fc[k]].push(fr[k]);
                }
            }
            for a in adj.iter_mut() {
                a.sort_unstable();
                a.dedup();
            }
            reverse_cuthill_mckee(&adj)
        });
        let mut inv = vec![0usize; n_free];
        for (new, &old) in p.iter().enumerate() {
            inv[old] = new;
        }
        let mut t = Triplets::new(n_free);
        for k in 0..fv.len() {
            t.push(inv[fr[k]], inv[fc[k]], fv[k]);
        }
        let lu = BandLu::factor(&t, |row| {
            let old = p[row];
            model.dofs.describe(model.dofs.free_dofs[old])
        })?;
        if params.record_condition || params.cond_guard.is_some() {
            let cond = lu.condition_estimate();
            trace.condition = Some(trace.condition.unwrap_or(0.0).max(cond));
            if let Some(guard) = params.cond_guard {
                if cond > guard {
                    return Err(SolveError::IllConditioned(format!(
                        "condition estimate {cond:.3e} exceeds guard {guard:.3e}"
                    )));
                }
            }
        }
        let mut b = vec![0.0; n_free];
        for (fi, &v) in r_free.iter().enumerate() {
            b[inv[fi]] = v;
        }
        lu.solve(&mut b);
        // iterative refinement, then verify the linear solve quality
        let mut rel = f64::INFINITY;
        for _ in 0..3 {
            let mut resid = vec![0.0; n_free]; // A x - r in reordered indexing
            for k in 0..fv.len() {
                resid[inv[fr[k]]] += fv[k] * b[inv[fc[k]]];
            }
            let mut res2 = 0.0;
            let mut rhs2 = 0.0;
            for fi in 0..n_free {
                resid[inv[fi]] -= r_free[fi];
                res2 += resid[inv[fi]] * resid[inv[fi]];
                rhs2 += r_free[fi] * r_free[fi];
            }
            rel = if rhs2 > 0.0 { (res2 / rhs2).sqrt() } else { 0.0 };
            if rel < 1e-12 {
                break;
            }
            lu.solve(&mut resid);
            for fi in 0..n_free {
                b[fi] -= resid[fi];
            }
        }
        if rel > 1e-9 {
            return Err(SolveError::IllConditioned(format!(
                "linear solve residual {rel:.3e}"
            )));
        }

        for (fi, &dof) in dofs.free_dofs.iter().enumerate() {
            u[dof] -= b[inv[fi]];
        }
    }

    if std::env::var("LAMELLA_NEWTON_DEBUG").is_ok() {
        eprintln!("newton norms: {:?}", trace.norms.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>());
    }
    Err(SolveError::NonConvergence {
        iters: params.max_iter,
        residual: *trace.norms.last().unwrap_or(&f64::NAN),
    })
}

/// Apply the Dirichlet values at the given load factor (position dofs are
/// reference + load * increment, phase dofs are absolute).
pub fn apply_dirichlet(model: &Model, load: f64, u: &mut [f64]) {
    for bc in &model.bcs {
        if bc.component < 3 {
            let dof = model.dofs.x_dof(bc.cp, bc.component as usize);
            u[dof] = model.surface.positions[bc.cp][bc.component as usize] + load * bc.value;
        } else {
            let dof = model.dofs.phi_dof(bc.cp);
            u[dof] = bc.value;
        }
    }
}

/// Quasi-static continuation of the load factor from 0 to 1 with step
/// halving on non-convergence (minimum step 1e-4 of the full load).
pub fn quasistatic_continuation(
    model: &Model,
    history: &[Vec<f64>],
    u: &mut [f64],
    n_steps: usize,
    params: &NewtonParams,
) -> Result<Vec<(f64, NewtonTrace)>, SolveError> {
    let stage = StageMap::quasistatic(model.surface.n_global_cps);
    let mut out = Vec::new();
    let mut load = 0.0;
    let mut step = 1.0 / n_steps as f64;
    while load < 1.0 - 1e-12 {
        let target = (load + step).min(1.0);
        let mut trial = u.to_vec();
        apply_dirichlet(model, target, &mut trial);
        let opts = AssembleOpts { tangent: false, load_factor: target, time: None };
        match newton_solve(model, history, &mut trial, &stage, opts, params) {
            Ok(trace) => {
                u.copy_from_slice(&trial);
                load = target;
                out.push((load, trace));
                step = (step * 1.5).min(1.0 - load).max(1e-12);
            }
            // divergence can leave transient iterates with a singular or
            // ill-conditioned tangent; both call for a smaller load step
            Err(
                SolveError::NonConvergence { .. }
                | SolveError::Linear(_)
                | SolveError::IllConditioned(_),
            ) => {
                step *= 0.5;
                if step < 1e-4 {
                    return Err(SolveError::StepUnderflow(load));
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

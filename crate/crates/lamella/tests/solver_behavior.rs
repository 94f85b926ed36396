//! Solver-level behavior: Newton convergence properties, saddle-point solves,
//! time-integrator conservation and determinism.

mod common;

use common::Lcg;
use lamella::bench::cases;
use lamella::bench::runs::{self, BenchMethod};
use lamella::constraints::{ConstraintConfig, ConstraintMethod, EpsPhiRule, LineRule};
use lamella::real::V3;
use lamella::shell::ShellMaterial;
use lamella::solver::{
    assembly, newton_solve, quasistatic_continuation, Bc, ConstraintSetup, GeneralizedAlpha,
    MechanicsConfig, Model, NewtonParams, PointLoad, SolveError, StageMap, TimeParams,
};

fn tight() -> NewtonParams {
    NewtonParams { tol_abs: 1e-11, tol_rel: 1e-10, max_iter: 25, ..Default::default() }
}

#[test]
fn near_linear_problem_converges_in_one_iteration() {
    // a tiny point load on a supported plate: the first Newton correction
    // solves the linearized problem, so iteration 2 sees a residual at
    // second-order in the load
    let patch = cases::flat_rectangle(0.0, 0.0, 1.0, 1.0, 2, 3, 3);
    let mp = lamella::splines::build_multipatch(vec![patch], &[], &[]).unwrap();
    let mech = MechanicsConfig {
        material: ShellMaterial::koiter(10.0, 10.0, 0.1, 0.0),
        pressure: 0.0,
        dynamic: false,
    };
    let mut model = Model::new(mp, Some(mech), None, None).unwrap();
    let mut bcs = Vec::new();
    let mut center = None;
    for (cp, p) in model.surface.positions.clone().iter().enumerate() {
        let on_edge = p[0].abs() < 1e-12
            || (p[0] - 1.0).abs() < 1e-12
            || p[1].abs() < 1e-12
            || (p[1] - 1.0).abs() < 1e-12;
        if on_edge {
            for k in 0..3 {
                bcs.push(Bc { cp, component: k, value: 0.0 });
            }
        }
        if (p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9 {
            center = Some(cp);
        }
    }
    model.bcs = bcs;
    model.point_loads =
        vec![PointLoad { cp: center.expect("center cp"), force: [0.0, 0.0, 1e-8] }];
    model.finalize().unwrap();
    let history = model.initial_history();
    let mut u = model.initial_state(1.0);
    let stage = StageMap::quasistatic(model.surface.n_global_cps);
    let opts = assembly::AssembleOpts { tangent: false, load_factor: 1.0, time: None };
    let trace = newton_solve(&model, &history, &mut u, &stage, opts, &tight()).unwrap();
    assert_eq!(trace.iterations, 1, "norms: {:?}", trace.norms);
}

#[test]
fn bending_step_converges_quadratically() {
    // asymptotic ratio |r_{k+1}| / |r_k|^2 stays bounded over the last iterations
    let model = bending_strip_model(BenchMethod::LmmConstant);
    let history = model.initial_history();
    let mut u = model.initial_state(1.0);
    let stage = StageMap::quasistatic(model.surface.n_global_cps);
    let opts = assembly::AssembleOpts { tangent: false, load_factor: 1.0, time: None };
    let params = NewtonParams { tol_abs: 1e-12, tol_rel: 1e-14, max_iter: 30, ..Default::default() };
    let trace = newton_solve(&model, &history, &mut u, &stage, opts, &params).unwrap();
    let n = trace.norms.len();
    assert!(n >= 3, "expected a few iterations, got {:?}", trace.norms);
    // quadratic contraction ratio on the final step pair
    let r_pre = trace.norms[n - 2];
    let r_post = trace.norms[n - 1];
    let ratio = r_post / (r_pre * r_pre);
    assert!(
        ratio < 1e4,
        "quadratic ratio too large: {ratio} (norms {:?})",
        trace.norms
    );
    // the last reduction is much stronger than linear
    assert!(r_post < 1e-4 * r_pre, "norms {:?}", trace.norms);
}

fn bending_strip_model(method: BenchMethod) -> Model {
    // small 2-patch bending strip under the follower end moments
    let mp = cases::strip(1.0, 0.2, 2, 3, 1);
    let mech = MechanicsConfig {
        material: ShellMaterial::koiter(10.0, 10.0, 1.0, 0.0),
        pressure: 0.0,
        dynamic: false,
    };
    let cm = match method {
        BenchMethod::Penalty => Some(ConstraintMethod::Penalty),
        BenchMethod::LmmConstant => Some(ConstraintMethod::LmmConstant),
        BenchMethod::LmmLinear => Some(ConstraintMethod::LmmLinear),
        BenchMethod::Unconstrained => None,
    };
    let constraints = cm.map(|m| ConstraintSetup {
        config: ConstraintConfig {
            method: m,
            eps_n: 1000.0,
            eps_phi: EpsPhiRule::Fixed(0.0),
            rule: LineRule::Gauss3,
        },
        enforce_g1: true,
        enforce_c1: false,
    });
    let mut model = Model::new(mp, Some(mech), None, constraints).unwrap();
    let mut bcs = Vec::new();
    for (cp, p) in model.surface.positions.clone().iter().enumerate() {
        if p[0].abs() < 1e-10 || (p[0] - 1.0).abs() < 1e-10 {
            bcs.push(Bc { cp, component: 2, value: 0.0 });
        }
        if p[1].abs() < 1e-10 {
            bcs.push(Bc { cp, component: 1, value: 0.0 });
        }
        if (p[0] - 0.5).abs() < 1e-9 {
            bcs.push(Bc { cp, component: 0, value: 0.0 });
        }
    }
    model.bcs = bcs;
    model.edge_moments = vec![
        lamella::solver::EdgeMoment { patch: 0, edge: 3, m_tau: 0.35 },
        lamella::solver::EdgeMoment { patch: 1, edge: 1, m_tau: 0.35 },
    ];
    model.finalize().unwrap();
    model
}

#[test]
fn lmm_reproduces_large_penalty_solution() {
    // the multiplier solution is the eps -> infinity limit of the penalty one
    let solve = |method: BenchMethod, eps: f64| -> Vec<f64> {
        let mut model = bending_strip_model(method);
        if let Some(setup) = model.constraints.as_mut() {
            setup.config.eps_n = eps;
        }
        let history = model.initial_history();
        let mut u = model.initial_state(1.0);
        quasistatic_continuation(&model, &history, &mut u, 2, &tight()).unwrap();
        u
    };
    let u_lmm = solve(BenchMethod::LmmConstant, 0.0);
    let gap = |u_pen: &[f64]| {
        let model = bending_strip_model(BenchMethod::Unconstrained);
        let mut max_diff = 0.0f64;
        for cp in 0..model.surface.n_global_cps {
            for k in 0..3 {
                let dof = model.dofs.x_dof(cp, k);
                max_diff = max_diff.max((u_lmm[dof] - u_pen[dof]).abs());
            }
        }
        max_diff
    };
    let d1 = gap(&solve(BenchMethod::Penalty, 1e4));
    let d2 = gap(&solve(BenchMethod::Penalty, 1e5));
    assert!(d2 < 1e-6, "penalty(1e5) vs LMM displacement gap {d2}");
    assert!(d2 < 0.3 * d1, "first-order penalty convergence toward LMM: {d1} -> {d2}");
}

#[test]
fn free_rigid_body_conserves_momentum() {
    // translating plate with no loads: f_int vanishes along the motion, so
    // velocity stays constant over 100 steps
    let patch = cases::flat_rectangle(0.0, 0.0, 1.0, 1.0, 2, 2, 2);
    let mp = lamella::splines::build_multipatch(vec![patch], &[], &[]).unwrap();
    let mech = MechanicsConfig {
        material: ShellMaterial::koiter(5.0, 5.0, 0.05, 0.0),
        pressure: 0.0,
        dynamic: true,
    };
    let mut model = Model::new(mp, Some(mech), None, None).unwrap();
    model.finalize().unwrap();
    let history = model.initial_history();
    let mut u = model.initial_state(1.0);
    let v0 = [0.3, -0.1, 0.2];
    let mut ga = GeneralizedAlpha::new(
        &model,
        TimeParams { rho_inf: 0.5, dt0: 0.01, dt_min: 0.01, dt_max: 0.01 },
    );
    for v in ga.vel.iter_mut() {
        *v = V3(v0);
    }
    for _ in 0..100 {
        ga.step(&model, &history, &mut u, &|_| 1.0, &tight()).unwrap();
    }
    for v in &ga.vel {
        for k in 0..3 {
            assert!((v.0[k] - v0[k]).abs() < 1e-9, "velocity drift {:?}", v.0);
        }
    }
    // positions translated by v0 * T
    let t = ga.time;
    for (cp, p) in model.surface.positions.iter().enumerate() {
        for k in 0..3 {
            let x = u[model.dofs.x_dof(cp, k)];
            assert!((x - (p[k] + v0[k] * t)).abs() < 1e-9);
        }
    }
}

#[test]
fn trapezoidal_limit_is_second_order_in_energy() {
    // rho_inf = 1: halving dt reduces the energy drift by ~4 on a free
    // vibrating plate
    let drift = |dt: f64| -> f64 {
        let patch = cases::flat_rectangle(0.0, 0.0, 1.0, 1.0, 2, 2, 2);
        let mp = lamella::splines::build_multipatch(vec![patch], &[], &[]).unwrap();
        let mech = MechanicsConfig {
            material: ShellMaterial::koiter(5.0, 5.0, 0.05, 0.0),
            pressure: 0.0,
            dynamic: true,
        };
        let mut model = Model::new(mp, Some(mech), None, None).unwrap();
        model.finalize().unwrap();
        let history = model.initial_history();
        let mut u = model.initial_state(1.0);
        let mut ga = GeneralizedAlpha::new(
            &model,
            TimeParams { rho_inf: 1.0, dt0: dt, dt_min: dt, dt_max: dt },
        );
        // smooth initial velocity bump (z-direction)
        for (cp, p) in model.surface.positions.iter().enumerate() {
            let w = (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin();
            ga.vel[cp] = V3([0.0, 0.0, 0.12 * w]);
        }
        let energy = |model: &Model, u: &[f64], ga: &GeneralizedAlpha| -> f64 {
            // kinetic via the consistent mass + elastic energy
            let mut e = 0.0;
            for (e_id, elem) in model.surface.elements.iter().enumerate() {
                let xs: Vec<V3<f64>> = elem
                    .cps_global
                    .iter()
                    .map(|&c| V3([0, 1, 2].map(|k| u[model.dofs.x_dof(c, k)])))
                    .collect();
                let vs: Vec<V3<f64>> = elem.cps_global.iter().map(|&c| ga.vel[c]).collect();
                let qps = &model.ref_points[e_id];
                let xs_ref: Vec<V3<f64>> = elem
                    .cps_global
                    .iter()
                    .map(|&c| V3(model.surface.positions[c]))
                    .collect();
                let m = lamella::shell::element_mass(qps, 1.0, &xs_ref).unwrap();
                let n = xs.len();
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..3 {
                            e += 0.5
                                * vs[i].0[k]
                                * m[(3 * i + k) * 3 * n + (3 * j + k)]
                                * vs[j].0[k];
                        }
                    }
                }
                for rp in qps {
                    let st = lamella::shell::point_state(rp, &xs).unwrap();
                    let moduli = lamella::shell::PointModuli::from_material(
                        &model.mechanics.as_ref().unwrap().material,
                    );
                    let (psi, _) = lamella::shell::elastic_energy_density(
                        &st,
                        rp,
                        &model.mechanics.as_ref().unwrap().material,
                        &moduli,
                        1.0,
                    )
                    .unwrap();
                    e += psi * rp.da_ref;
                }
            }
            e
        };
        let e0 = energy(&model, &u, &ga);
        let t_end = 0.4;
        let steps = (t_end / dt).round() as usize;
        for _ in 0..steps {
            ga.step(&model, &history, &mut u, &|_| 1.0, &tight()).unwrap();
        }
        (energy(&model, &u, &ga) - e0).abs() / e0
    };
    let d1 = drift(0.02);
    let d2 = drift(0.01);
    // (time steps chosen inside the resolved regime of the discrete modes)
    let order = (d1 / d2).log2();
    assert!(
        order > 1.5 && order < 2.8,
        "energy drift order {order} (drifts {d1:.3e} / {d2:.3e})"
    );
}

#[test]
fn ch_plate_conserves_mass_and_is_deterministic() {
    let r1 = runs::run_ch_plate(8, 42, 6, 0.05, BenchMethod::LmmConstant, true).unwrap();
    assert!(r1.max_mass_drift < 1e-8, "mass drift {}", r1.max_mass_drift);
    // identical seeds give bit-identical residual traces
    let r2 = runs::run_ch_plate(8, 42, 6, 0.05, BenchMethod::LmmConstant, true).unwrap();
    assert_eq!(r1.residual_trace, r2.residual_trace);
    // a different seed changes the trace
    let r3 = runs::run_ch_plate(8, 43, 6, 0.05, BenchMethod::LmmConstant, true).unwrap();
    assert_ne!(r1.residual_trace, r3.residual_trace);
}

#[test]
fn uniform_initial_state_is_stationary() {
    let r = runs::run_ch_plate(8, 1, 4, 0.05, BenchMethod::LmmConstant, false).unwrap();
    let (_, e0) = r.energy_history[0];
    for &(_, e) in &r.energy_history {
        assert!((e - e0).abs() < 1e-10 * e0.abs().max(1.0), "energy history moved: {e} vs {e0}");
    }
}

#[test]
fn pinwheel_junction_linear_lmm_is_stable() {
    // valence-5 junction with repeated linear multipliers: quadratic Newton
    // convergence and no rank report
    let mp = cases::pinwheel_5(2);
    let mech = MechanicsConfig {
        material: ShellMaterial::koiter(10.0, 10.0, 0.5, 0.0),
        pressure: 0.05,
        dynamic: false,
    };
    let constraints = Some(ConstraintSetup {
        config: ConstraintConfig {
            method: ConstraintMethod::LmmLinear,
            eps_n: 0.0,
            eps_phi: EpsPhiRule::Fixed(0.0),
            rule: LineRule::Gauss2,
        },
        enforce_g1: true,
        enforce_c1: false,
    });
    let mut model = Model::new(mp, Some(mech), None, constraints).unwrap();
    // clamp the outer boundary
    let mut bcs = Vec::new();
    for (cp, p) in model.surface.positions.clone().iter().enumerate() {
        let r2 = p[0] * p[0] + p[1] * p[1];
        if r2 > 0.9 {
            for k in 0..3 {
                bcs.push(Bc { cp, component: k, value: 0.0 });
            }
        }
    }
    model.bcs = bcs;
    model.finalize().unwrap();
    let history = model.initial_history();
    let mut u = model.initial_state(1.0);
    let stage = StageMap::quasistatic(model.surface.n_global_cps);
    let opts = assembly::AssembleOpts { tangent: false, load_factor: 1.0, time: None };
    let trace = newton_solve(&model, &history, &mut u, &stage, opts, &tight()).unwrap();
    assert!(trace.iterations <= 6, "iterations {:?}", trace.norms);
    // the junction multipliers are repeated per interface: count allocated dofs
    let nq: usize = model.dofs.q_dofs.iter().map(|d| d.len()).sum();
    // 5 interfaces x (2 elements + 1) nodes each
    assert_eq!(
        model.dofs.q_dofs.iter().filter(|d| !d.is_empty()).count(),
        5 * 2
    );
    assert_eq!(nq, 5 * 2 * 2);
}

#[test]
fn basin_check_rejects_wild_initial_meshes() {
    // fold the second patch of a flat pair far beyond the multiplier basin
    let mp = common::folded_pair(0.0, 1);
    let mech = MechanicsConfig {
        material: ShellMaterial::koiter(10.0, 10.0, 0.5, 0.0),
        pressure: 0.0,
        dynamic: false,
    };
    let constraints = Some(ConstraintSetup {
        config: ConstraintConfig {
            method: ConstraintMethod::LmmConstant,
            eps_n: 0.0,
            eps_phi: EpsPhiRule::Fixed(0.0),
            rule: LineRule::Gauss2,
        },
        enforce_g1: true,
        enforce_c1: false,
    });
    let mut model = Model::new(mp, Some(mech), None, constraints).unwrap();
    model.finalize().unwrap();
    let history = model.initial_history();
    let mut u = model.initial_state(1.0);
    // rotate patch B by 100 degrees out of plane around the interface
    let angle = 100f64.to_radians();
    for (cp, p) in model.surface.positions.clone().iter().enumerate() {
        if p[0] > 1.0 + 1e-12 {
            let dx = p[0] - 1.0;
            u[model.dofs.x_dof(cp, 0)] = 1.0 + angle.cos() * dx;
            u[model.dofs.x_dof(cp, 2)] = angle.sin() * dx;
        }
    }
    let stage = StageMap::quasistatic(model.surface.n_global_cps);
    let opts = assembly::AssembleOpts { tangent: false, load_factor: 1.0, time: None };
    let err = newton_solve(&model, &history, &mut u, &stage, opts, &tight()).unwrap_err();
    assert!(matches!(err, SolveError::Constraint(_)), "got {err}");
}

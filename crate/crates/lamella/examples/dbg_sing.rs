use lamella::solver::*;
use lamella::solver::assembly::AssembleOpts;

fn main() {
    // hemisphere pinch, small mesh: inspect first Newton attempt
    let (model, _load_a) = lamella::bench::runs::debug_hemisphere_model(8, lamella::bench::runs::BenchMethod::LmmConstant);
    println!("n_cps {} n_elems {} n_total {} free {}", model.surface.n_global_cps,
        model.surface.n_elements(), model.dofs.n_total, model.dofs.n_free());
    let history = model.initial_history();
    let mut u = model.initial_state(1.0);
    apply_dirichlet(&model, 0.5, &mut u);
    let stage = StageMap::quasistatic(model.surface.n_global_cps);
    let opts = AssembleOpts { tangent: false, load_factor: 0.5, time: None };
    let params = NewtonParams { tol_abs: 1e-11, tol_rel: 1e-10, max_iter: 20, ..Default::default() };
    match newton_solve(&model, &history, &mut u, &stage, opts, &params) {
        Ok(t) => println!("ok iters {} norms {:?}", t.iterations, t.norms.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()),
        Err(e) => println!("ERR {e}"),
    }
}

use lamella::bench::runs::*;

fn main() {
    let arg: String = std::env::args().nth(1).unwrap_or_default();
    match arg.as_str() {
        "bend" => {
            for (label, n_patch, levels) in [
                ("1-patch", 1usize, vec![5usize, 15, 25, 35]),
                ("5-patch lmm-c", 5, vec![5, 15, 25, 35]),
            ] {
                let method = if n_patch == 1 { BenchMethod::Unconstrained } else { BenchMethod::LmmConstant };
                match run_pure_bending(n_patch, &levels, method) {
                    Ok(r) => {
                        println!("== {label}: slope {:.3}", r.slope);
                        for l in &r.levels {
                            println!("  n_sel {:>4} l2 {:.4e} max {:.4e} H {:.3e} m {:?} its {:?}",
                                l.n_elements, l.l2_error, l.max_error, l.curvature_error, l.moment_rel_error, l.newton_iterations);
                        }
                    }
                    Err(e) => println!("== {label}: ERR {e}"),
                }
            }
        }
        "hemi" => {
            for n in [8usize, 16] {
                match run_hemisphere_pinch(n, BenchMethod::LmmConstant) {
                    Ok(r) => println!("hemi n {n}: n_sel {} normalized {:.5} its {:?} gbar {:.2e}",
                        r.n_elements, r.normalized_displacement, r.newton_iterations, r.max_gbar),
                    Err(e) => println!("hemi n {n}: ERR {e}"),
                }
            }
        }
        "c1" => {
            let sweep = [1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2];
            match run_c1_verification(32, &sweep, 1e4, 1e12) {
                Ok(r) => {
                    println!("E_ref {:.8e}", r.reference_energy);
                    println!("LMM rel err {:.3e}, max|g| {:.3e}", r.lmm_rel_error, r.lmm_max_g_grad);
                    for (e, err) in &r.penalty_sweep {
                        println!("  eps {:>9.1e} err {:.4e}", e, err);
                    }
                    println!("slope {:.3}", r.penalty_slope);
                    println!("overload: {:?}", r.overload_outcome);
                }
                Err(e) => println!("c1 ERR {e}"),
            }
        }
        other => println!("unknown {other}"),
    }
}

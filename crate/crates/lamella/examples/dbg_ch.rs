use lamella::bench::runs::{run_ch_plate, BenchMethod};
fn main() {
    // scan energy drift order for the vibrating plate
    for dt in [0.04, 0.02, 0.01, 0.005, 0.0025] {
        let d = vibration_drift(dt);
        println!("dt {dt:<8} drift {d:.6e}");
    }
    match run_ch_plate(8, 42, 6, 0.05, BenchMethod::LmmConstant, true) {
        Ok(r) => println!("ch plate OK drift {:.3e} steps {}", r.max_mass_drift, r.energy_history.len()-1),
        Err(e) => println!("ch plate ERR {e}"),
    }
}

use lamella::bench::cases;
use lamella::real::V3;
use lamella::shell::ShellMaterial;
use lamella::solver::*;

fn vibration_drift(dt: f64) -> f64 {
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
    let mut ga = GeneralizedAlpha::new(&model, TimeParams { rho_inf: 1.0, dt0: dt, dt_min: dt, dt_max: dt });
    for (cp, p) in model.surface.positions.iter().enumerate() {
        let w = (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin();
        ga.vel[cp] = V3([0.0, 0.0, 0.12 * w]);
    }
    let energy = |model: &Model, u: &[f64], ga: &GeneralizedAlpha| -> f64 {
        let mut e = 0.0;
        for (e_id, elem) in model.surface.elements.iter().enumerate() {
            let xs: Vec<V3<f64>> = elem.cps_global.iter().map(|&c| V3([0,1,2].map(|k| u[model.dofs.x_dof(c,k)]))).collect();
            let vs: Vec<V3<f64>> = elem.cps_global.iter().map(|&c| ga.vel[c]).collect();
            let qps = &model.ref_points[e_id];
            let xs_ref: Vec<V3<f64>> = elem.cps_global.iter().map(|&c| V3(model.surface.positions[c])).collect();
            let m = lamella::shell::element_mass(qps, 1.0, &xs_ref).unwrap();
            let n = xs.len();
            for i in 0..n { for j in 0..n { for k in 0..3 {
                e += 0.5 * vs[i].0[k] * m[(3*i+k)*3*n + (3*j+k)] * vs[j].0[k];
            }}}
            for rp in qps {
                let st = lamella::shell::point_state(rp, &xs).unwrap();
                let moduli = lamella::shell::PointModuli::from_material(&model.mechanics.as_ref().unwrap().material);
                let (psi, _) = lamella::shell::elastic_energy_density(&st, rp, &model.mechanics.as_ref().unwrap().material, &moduli, 1.0).unwrap();
                e += psi * rp.da_ref;
            }
        }
        e
    };
    let params = NewtonParams { tol_abs: 1e-12, tol_rel: 1e-12, max_iter: 25, ..Default::default() };
    let e0 = energy(&model, &u, &ga);
    let steps = (0.4 / dt).round() as usize;
    for _ in 0..steps {
        if let Err(e) = ga.step(&model, &history, &mut u, &|_| 1.0, &params) { println!("step err dt {dt}: {e}"); return f64::NAN; }
    }
    (energy(&model, &u, &ga) - e0).abs() / e0
}

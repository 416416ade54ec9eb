//! Close near returns into periodic orbits: first on the Hopf cylinder from
//! a perturbed start, then from the best Lorenz near return, with the
//! shadowing check and Floquet exponents.

use std::f64::consts::PI;

use lpflow::field::{VectorFieldSpec, WorkingBox};
use lpflow::flow::{advance, integrate_flow, integrate_sampled};
use lpflow::orbits::{
    close_orbit, fit_reparametrization, periodic_spectrum, validate_shadowing, ClosingConfig,
    ReparamOptions,
};
use lpflow::pesin::{near_return_detect_with, ReturnOptions};
use lpflow::poincare::PoincareConfig;
use nalgebra::DVector;

fn main() -> lpflow::Result<()> {
    let hopf = VectorFieldSpec::hopf_cylinder();
    let ccfg = ClosingConfig::new(WorkingBox::cube(3, 10.0));
    let seg = integrate_flow(
        &hopf,
        &DVector::from_vec(vec![1.1, 0.0, 0.05]),
        (0.0, 2.0 * PI),
        &ccfg.integrator,
    )?;
    let orbit = close_orbit(&hopf, &seg, &ccfg)?;
    let pcfg = PoincareConfig::new(&hopf, ccfg.integrator.clone());
    println!(
        "Hopf: period {:.9} after {} Newton steps",
        orbit.period, orbit.iterations
    );
    println!(
        "Hopf: Floquet exponents {:.6?}",
        periodic_spectrum(&hopf, &orbit, &pcfg)?.exponents
    );

    let lorenz = VectorFieldSpec::lorenz_classic();
    let ccfg = ClosingConfig::new(WorkingBox::cube(3, 100.0));
    let x0 = advance(
        &lorenz,
        &DVector::from_vec(vec![1.0, 1.0, 20.0]),
        50.0,
        &ccfg.integrator,
    )?;
    let traj = integrate_sampled(&lorenz, &x0, 0.0, 0.1, 20_000, &ccfg.integrator)?;
    let all: Vec<usize> = (0..traj.len()).collect();
    let opts = ReturnOptions {
        min_separation: 15,
        max_separation: Some(80),
        max_candidates: 20,
    };
    let pcfg = PoincareConfig::new(&lorenz, ccfg.integrator.clone());
    let mut seen: Vec<usize> = Vec::new();
    for cand in near_return_detect_with(&traj, &all, 0.05, &opts) {
        // neighbouring samples return together
        if seen.iter().any(|&i| i.abs_diff(cand.i) <= 3) {
            continue;
        }
        seen.push(cand.i);
        let dur = (cand.j - cand.i) as f64 * 0.1;
        let seg = integrate_flow(
            &lorenz,
            &traj.states()[cand.i],
            (0.0, dur),
            &ccfg.integrator,
        )?;
        let orbit = match close_orbit(&lorenz, &seg, &ccfg) {
            Ok(o) => o,
            Err(e) => {
                println!("return {} -> {}: {e}", cand.i, cand.j);
                continue;
            }
        };
        let theta = fit_reparametrization(&lorenz, &seg, &orbit, &ReparamOptions::default())?;
        let report = validate_shadowing(&lorenz, &seg, &orbit, &theta, 0.1);
        let spectrum = periodic_spectrum(&lorenz, &orbit, &pcfg)?;
        println!(
            "return {} -> {}: period {:.5}, shadowing distance {:.4} |X|, slopes [{:.3}, {:.3}], pass {}, exponents {:.4?}",
            cand.i, cand.j, orbit.period, report.max_rel_distance, report.min_slope, report.max_slope, report.pass, spectrum.exponents
        );
    }
    Ok(())
}

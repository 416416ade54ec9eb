//! Empirical and periodic measures, the truncated weak* distance and a
//! spectrum comparison report.

use std::f64::consts::PI;

use lpflow::field::{VectorFieldSpec, WorkingBox};
use lpflow::flow::{integrate_flow, IntegratorConfig};
use lpflow::measures::{
    birkhoff_average, compare_spectra, periodic_measure, weak_star_distance, EmpiricalMeasure,
    TestFunctionFamily,
};
use lpflow::orbits::PeriodicOrbit;
use lpflow::spectra::LyapunovSpectrum;
use nalgebra::DVector;

fn main() -> lpflow::Result<()> {
    let spec = VectorFieldSpec::hopf_cylinder();
    let cfg = IntegratorConfig::new(WorkingBox::cube(3, 5.0)).with_tolerances(1e-12, 1e-12);
    let cycle = PeriodicOrbit::from_point(
        &spec,
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        2.0 * PI,
        &cfg,
    )?;
    let mu_p = periodic_measure(&cycle);

    // an orbit spiralling onto the cycle: its time averages approach mu_p
    let traj = integrate_flow(
        &spec,
        &DVector::from_vec(vec![2.0, 0.0, 1.0]),
        (0.0, 200.0),
        &cfg,
    )?;
    let family = TestFunctionFamily::new(WorkingBox::cube(3, 2.5), 20)?;
    for end in [10.0, 50.0, 200.0] {
        let k = traj.times().partition_point(|&t| t <= end) - 1;
        let mu = EmpiricalMeasure::from_trajectory(&traj.slice(0, k)?);
        println!(
            "T = {end:5}: d(mu_T, mu_p) = {:.5}",
            weak_star_distance(&mu, &mu_p, &family)
        );
    }
    println!(
        "Birkhoff average of z over [0, 200]: {:.5}",
        birkhoff_average(|x| x[2], &traj)
    );

    let a = LyapunovSpectrum::from_exponents(vec![-14.5, 0.9])?;
    let b = LyapunovSpectrum::from_exponents(vec![-14.2, 0.8])?;
    let report = compare_spectra(&a, &b, 0.5)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

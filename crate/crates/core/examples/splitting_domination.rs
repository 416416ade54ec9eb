//! Oseledec splitting of the Lorenz linear Poincare flow, the domination
//! test for `E^s < E^u` and a search for an invariant cone field.

use lpflow::field::{VectorFieldSpec, WorkingBox};
use lpflow::flow::{advance, IntegratorConfig};
use lpflow::poincare::PoincareConfig;
use lpflow::spectra::{
    benettin_spectrum, build_cocycle, check_domination, find_invariant_cone,
    oseledec_filtration_with,
};
use nalgebra::DVector;

fn main() -> lpflow::Result<()> {
    let spec = VectorFieldSpec::lorenz_classic();
    let cfg = PoincareConfig::new(&spec, IntegratorConfig::new(WorkingBox::cube(3, 100.0)));
    let x0 = advance(
        &spec,
        &DVector::from_vec(vec![1.0, 1.0, 20.0]),
        50.0,
        &cfg.integrator,
    )?;
    let cocycle = build_cocycle(&spec, &x0, 0.1, 10_000, &cfg)?;
    let spectrum = benettin_spectrum(&cocycle)?;
    let split = oseledec_filtration_with(&cocycle, &spectrum)?;
    println!(
        "splitting dims {:?}, burn-in {} blocks, equivariance residual {:.2e}",
        split.dimensions(),
        split.burn_in,
        split.residual
    );
    let e = split.basis(5000, 0);
    let f = split.basis(5000, 1);
    println!(
        "angle between E^s and E^u at block 5000: {:.4} rad",
        e.dot(f).abs().acos()
    );

    let report = check_domination(&cocycle, &split, 1);
    println!(
        "dominated: {} (lambda {:.3}, C {:.3})",
        report.satisfied, report.lambda, report.c_fit
    );
    for (t, l) in report.windows.iter().step_by(6) {
        println!("  t = {t:6.2}  worst log |P|E| |P^-1|F| = {l:9.3}");
    }
    match find_invariant_cone(&cocycle, &split, 50, 11) {
        Some(c) => println!("invariant cone: rho = {:.3}, gamma = {:.2}", c.rho, c.gamma),
        None => println!("no invariant cone in the search grid"),
    }
    Ok(())
}

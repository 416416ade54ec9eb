//! Lyapunov spectrum of the scaled linear Poincare flow along a Lorenz
//! orbit, with the spectrum of the second exterior power, time reversal and
//! the perturbation margin of a cocycle block.
//!
//! cargo run --release --example lyapunov_spectrum -- [blocks]

use lpflow::field::{VectorFieldSpec, WorkingBox};
use lpflow::flow::{advance, IntegratorConfig};
use lpflow::poincare::PoincareConfig;
use lpflow::spectra::{
    benettin_spectrum, build_cocycle, exterior_spectrum, index_of, perturbation_margin,
    time_reversal_spectrum,
};
use nalgebra::DVector;

fn main() -> lpflow::Result<()> {
    let blocks: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let spec = VectorFieldSpec::lorenz_classic();
    let cfg = PoincareConfig::new(&spec, IntegratorConfig::new(WorkingBox::cube(3, 100.0)));
    let x0 = advance(
        &spec,
        &DVector::from_vec(vec![1.0, 1.0, 20.0]),
        50.0,
        &cfg.integrator,
    )?;

    let cocycle = build_cocycle(&spec, &x0, 0.1, blocks, &cfg)?;
    let s = benettin_spectrum(&cocycle)?;
    println!("exponents     {:.4?}", s.exponents);
    println!("std errors    {:.4?}", s.std_errors);
    println!("sum           {:.4}", s.sum());
    println!("index         {}", index_of(&s));
    println!("time reversed {:.4?}", time_reversal_spectrum(&s).exponents);

    let wedge = exterior_spectrum(&cocycle, 2)?;
    println!(
        "wedge^2       {:.4?} (sum of the two exponents)",
        wedge.exponents
    );

    let a = &cocycle.blocks[0];
    let eps1 = 0.05;
    println!(
        "blocks B with |B - I| <= {:.3e} keep |ABv| >= e^-{eps1} |Av|",
        perturbation_margin(a, eps1)?
    );
    Ok(())
}

//! Integrate the Lorenz system, print summary statistics and write the
//! orbit as CSV.
//!
//! cargo run --release --example lorenz_trajectory -- [duration] [out.csv]

use lpflow::field::{VectorFieldSpec, WorkingBox};
use lpflow::flow::{advance, integrate_sampled, IntegratorConfig};
use nalgebra::DVector;

fn main() -> lpflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let duration: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50.0);
    let spec = VectorFieldSpec::lorenz_classic();
    let cfg = IntegratorConfig::new(WorkingBox::cube(3, 100.0));

    let x0 = advance(&spec, &DVector::from_vec(vec![1.0, 1.0, 20.0]), 20.0, &cfg)?;
    let dt = 0.01;
    let traj = integrate_sampled(&spec, &x0, 0.0, dt, (duration / dt) as usize, &cfg)?;

    let zs: Vec<f64> = traj.states().iter().map(|x| x[2]).collect();
    let mean_z = zs.iter().sum::<f64>() / zs.len() as f64;
    let speeds = traj.field_norms();
    println!("samples      {}", traj.len());
    println!("mean z       {mean_z:.4}");
    println!(
        "speed range  [{:.3}, {:.3}]",
        speeds.iter().cloned().fold(f64::INFINITY, f64::min),
        speeds.iter().cloned().fold(0.0, f64::max)
    );
    println!("end state    {:.6?}", traj.last().as_slice());

    if let Some(path) = args.get(2) {
        traj.write_csv(std::fs::File::create(path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}

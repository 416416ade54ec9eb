//! The linear Poincare flow `psi_t` and its scaled version on the Hopf
//! cylinder, where the unit circle is a cycle with Floquet exponents
//! -2 (radial) and -1 (axial), and a section return time on Lorenz.

use std::f64::consts::PI;

use lpflow::field::{VectorFieldSpec, WorkingBox};
use lpflow::flow::{advance, IntegratorConfig};
use lpflow::poincare::{poincare_step, return_time, NormalFrame, PoincareConfig};
use nalgebra::DVector;

fn main() -> lpflow::Result<()> {
    let hopf = VectorFieldSpec::hopf_cylinder();
    let cfg = PoincareConfig::new(
        &hopf,
        IntegratorConfig::new(WorkingBox::cube(3, 10.0)).with_tolerances(1e-12, 1e-12),
    );
    let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let frame = NormalFrame::at(&hopf, &x, &cfg)?;
    let step = poincare_step(&hopf, &frame, 2.0 * PI, &cfg)?;
    let change = step.frame_out.basis.transpose() * &frame.basis;
    let monodromy = change.transpose() * step.scaled();
    let eig = monodromy.complex_eigenvalues();
    println!("Hopf cycle: psi*_(2pi) in the start frame =\n{monodromy:.6}");
    println!(
        "Floquet exponents: {:?}",
        eig.iter()
            .map(|m| m.norm().ln() / (2.0 * PI))
            .collect::<Vec<_>>()
    );

    let lorenz = VectorFieldSpec::lorenz_classic();
    let cfg = PoincareConfig::new(&lorenz, IntegratorConfig::new(WorkingBox::cube(3, 100.0)));
    let x = advance(
        &lorenz,
        &DVector::from_vec(vec![1.0, 1.0, 20.0]),
        20.0,
        &cfg.integrator,
    )?;
    let offset = lorenz.eval(&x).norm() * 0.01;
    let y = &x + DVector::from_vec(vec![offset, 0.0, 0.0]);
    let crossing = return_time(&lorenz, &x, &y, &cfg)?;
    println!(
        "Lorenz: perturbed point reaches the section at phi_1(x) after {:.6}",
        crossing.time
    );
    Ok(())
}

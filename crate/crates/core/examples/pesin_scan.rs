//! Pesin block membership, quasi-hyperbolic strings and near returns along
//! a Lorenz orbit, with every result re-checked independently.

use lpflow::field::{VectorFieldSpec, WorkingBox};
use lpflow::flow::{advance, IntegratorConfig};
use lpflow::pesin::{
    block_members, near_return_detect_with, pesin_block_test, quasi_hyperbolic_scan,
    PesinBlockParams, ReturnOptions,
};
use lpflow::poincare::PoincareConfig;
use lpflow::spectra::{build_cocycle, oseledec_filtration};
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
    let cocycle = build_cocycle(&spec, &x0, 0.1, 20_000, &cfg)?;
    let split = oseledec_filtration(&cocycle)?;

    let params = PesinBlockParams::new(1.0, 0.5, 10.0)?;
    let members = block_members(&cocycle, &split, &params)?;
    println!(
        "Pesin block members: {} of {} samples",
        members.len(),
        cocycle.len()
    );
    if let Some(&m) = members.get(members.len() / 2) {
        let r = pesin_block_test(&cocycle, &split, &params, m)?;
        println!(
            "sample {m}: worst stable slack {:.3}, worst unstable slack {:.3}",
            r.worst_stable(),
            r.worst_unstable()
        );
    }

    let strings = quasi_hyperbolic_scan(&cocycle, &split, 0.5, 1.0)?;
    for s in &strings {
        println!(
            "string [{}, {}] with {} gaps, re-check {}",
            s.start,
            s.end(),
            s.gaps(),
            s.verify(&cocycle, &split)
        );
    }

    let traj = cocycle.base_trajectory()?;
    let opts = ReturnOptions {
        min_separation: 10,
        max_separation: Some(100),
        max_candidates: 10,
    };
    for c in near_return_detect_with(&traj, &members, 0.05, &opts) {
        println!(
            "return {} -> {} after {:.1}: |x_j - x_i| = {:.4} |X|, re-check {}",
            c.i,
            c.j,
            (c.j - c.i) as f64 * cocycle.step,
            c.rel_gap,
            c.verify(&traj, &members, 0.05, &opts)
        );
    }
    Ok(())
}

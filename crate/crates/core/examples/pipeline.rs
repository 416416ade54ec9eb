//! The whole chain on Lorenz in one process: spectrum, scan, closing and
//! comparison, driven by a run configuration.
//!
//! cargo run --release --example pipeline -- [blocks]

use lpflow::cli::stages;
use lpflow::cli::RunConfig;
use lpflow::field::{VectorFieldSpec, WorkingBox};

fn main() -> lpflow::Result<()> {
    let blocks: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(30_000);
    let mut cfg = RunConfig::new(
        VectorFieldSpec::lorenz_classic(),
        WorkingBox::cube(3, 100.0),
    );
    cfg.initial_state = Some(vec![1.0, 1.0, 20.0]);
    cfg.cocycle.blocks = blocks;
    cfg.closing.max_orbits = 8;

    let setup = stages::setup(&cfg)?;
    let analysis = stages::analyse(&setup)?;
    println!("measure exponents {:.4?}", analysis.spectrum.exponents);
    let scan = stages::scan(&setup, &analysis)?;
    println!(
        "{} Pesin members, {} strings, {} candidates",
        scan.output.members,
        scan.output.certificates.len(),
        scan.output.candidates.len()
    );
    let closed = stages::close(&setup, &scan.output, None)?;
    for o in &closed.orbits {
        println!(
            "candidate {:3}: period {:.4}, shadowing {:.4}, exponents {:.4?}",
            o.candidate, o.orbit.period, o.shadowing.max_rel_distance, o.spectrum.exponents
        );
    }
    let records: Vec<stages::OrbitRecord> = closed.orbits.iter().map(Into::into).collect();
    let cmp = stages::compare(&setup, &analysis.spectrum, &records)?;
    for t in &cmp.tiers {
        println!(
            "period <= {:4}: {} orbits, min weak* distance {:?}",
            t.max_period, t.orbits, t.min_weak_star
        );
    }
    if let Some(best) = &cmp.best {
        println!("best gaps {:.4?}", best.gaps);
    }
    Ok(())
}

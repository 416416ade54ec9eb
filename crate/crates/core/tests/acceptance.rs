//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use itertools::Itertools;
use lpflow::cli::stages::{self, Analysis, CloseOutput, CompareOutput, ScanRun, Setup};
use lpflow::field::{VectorFieldSpec, WorkingBox};
use lpflow::flow::{integrate_flow, integrate_sampled, tangent_flow_with_state, IntegratorConfig};
use lpflow::linalg::spectral_norm;
use lpflow::orbits::{close_orbit, monodromy, periodic_spectrum, ClosingConfig, PeriodicOrbit};
use lpflow::pesin::quasi_hyperbolic_scan;
use lpflow::poincare::{poincare_step, NormalFrame, PoincareConfig};
use lpflow::spectra::{
    benettin_spectrum, build_cocycle, check_cone_invariance, check_domination, exterior_spectrum,
    find_invariant_cone, oseledec_filtration, perturbation_margin, time_reversal_spectrum,
    CocycleKind, CocycleSequence,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn hopf() -> (VectorFieldSpec, PoincareConfig, PeriodicOrbit) {
    let spec = VectorFieldSpec::hopf_cylinder();
    let ic = IntegratorConfig::new(WorkingBox::cube(3, 10.0)).with_tolerances(1e-12, 1e-12);
    let cfg = PoincareConfig::new(&spec, ic.clone());
    let orbit =
        PeriodicOrbit::from_point(&spec, DVector::from_vec(vec![1.0, 0.0, 0.0]), 2.0 * PI, &ic)
            .unwrap();
    (spec, cfg, orbit)
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn floquet_oracle() -> Outcome {
    let (spec, cfg, orbit) = hopf();
    let s = periodic_spectrum(&spec, &orbit, &cfg).unwrap();
    let spec_err = max_gap(&s.exponents, &[-2.0, -1.0]);
    let ccfg = ClosingConfig::new(WorkingBox::cube(3, 10.0));
    let seg = integrate_flow(
        &spec,
        &DVector::from_vec(vec![1.08, 0.0, 0.03]),
        (0.0, 2.0 * PI),
        &ccfg.integrator,
    )
    .unwrap();
    let closed = close_orbit(&spec, &seg, &ccfg).unwrap();
    let period_err = (closed.period - 2.0 * PI).abs();
    outcome(
        spec_err < 1e-3 && period_err < 1e-6,
        format!(
            "exponents {:.6?} (err {spec_err:.1e}), period err {period_err:.1e}",
            s.exponents
        ),
    )
}

fn constant_spectra() -> Outcome {
    let n = 10_000;
    let t: f64 = 0.5;
    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![
        (-t).exp(),
        (0.5 * t).exp(),
        (2.0 * t).exp(),
    ]));
    let tri = DMatrix::from_row_slice(
        3,
        3,
        &[
            (0.5 * t).exp(),
            1.0,
            0.3,
            0.0,
            (1.5 * t).exp(),
            -0.5,
            0.0,
            0.0,
            (3.0 * t).exp(),
        ],
    );
    let (c, s) = ((0.3f64).cos(), (0.3f64).sin());
    let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) * (0.7 * t).exp();
    let cases: [(&str, DMatrix<f64>, Vec<f64>); 3] = [
        ("diag", diag, vec![-1.0, 0.5, 2.0]),
        ("triangular", tri, vec![0.5, 1.5, 3.0]),
        ("rotation", rot, vec![0.7, 0.7]),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, a, expected) in cases {
        let got = benettin_spectrum(&CocycleSequence::constant(a, t, n).unwrap()).unwrap();
        let err = max_gap(&got.exponents, &expected);
        worst = worst.max(err);
        parts.push(format!("{name} {err:.1e}"));
    }
    outcome(worst < 1e-6, parts.join(", "))
}

fn exterior_sums() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mats: Vec<DMatrix<f64>> = (0..20)
        .map(|_| {
            let lambdas = common::separated_exponents(&mut rng, 4, 0.3);
            common::conjugated(&mut rng, &lambdas, 1.0)
        })
        .collect();
    let worst = mats
        .into_par_iter()
        .map(|a| {
            let c = CocycleSequence::constant(a, 1.0, 100_000).unwrap();
            let base = benettin_spectrum(&c).unwrap().exponents;
            [2, 3]
                .into_iter()
                .map(|n| {
                    let mut sums: Vec<f64> = base
                        .iter()
                        .combinations(n)
                        .map(|v| v.into_iter().sum())
                        .collect();
                    sums.sort_by(f64::total_cmp);
                    max_gap(&exterior_spectrum(&c, n).unwrap().exponents, &sums)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    outcome(
        worst < 1e-6,
        format!("20 cocycles, n = 2, 3, worst deviation {worst:.1e}"),
    )
}

fn time_reversal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_const: f64 = 0.0;
    for _ in 0..10 {
        let lambdas = common::separated_exponents(&mut rng, 3, 0.3);
        let c = CocycleSequence::constant(common::conjugated(&mut rng, &lambdas, 1.0), 1.0, 10_000)
            .unwrap();
        let forward = time_reversal_spectrum(&benettin_spectrum(&c).unwrap());
        let backward = benettin_spectrum(&c.time_reversed().unwrap()).unwrap();
        worst_const = worst_const.max(max_gap(&forward.exponents, &backward.exponents));
    }
    let (spec, cfg, orbit) = hopf();
    let c = build_cocycle(&spec, &orbit.point, 0.5, 2_000, &cfg).unwrap();
    let forward = time_reversal_spectrum(&benettin_spectrum(&c).unwrap());
    let backward = benettin_spectrum(&c.time_reversed().unwrap()).unwrap();
    let hopf_err = max_gap(&forward.exponents, &backward.exponents);
    outcome(
        worst_const < 1e-6 && hopf_err < 1e-3,
        format!(
            "constant worst {worst_const:.1e}, Hopf cycle {hopf_err:.1e} ({:.4?})",
            backward.exponents
        ),
    )
}

fn perturbation_claim() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut cases = 0;
    while cases < 1000 {
        let m = rng.gen_range(2..5);
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let eps1 = rng.gen_range(0.01..1.0);
        let Ok(sigma) = perturbation_margin(&a, eps1) else {
            continue;
        };
        cases += 1;
        let e = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let e = &e * (sigma * rng.gen_range(0.0..=1.0) / spectral_norm(&e));
        let b = DMatrix::identity(m, m) + e;
        let v = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        if (&a * &b * &v).norm() < (-eps1).exp() * (&a * &v).norm() {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("{cases} cases, {violations} violations"),
    )
}

fn flow_invariants(closed: &[PeriodicOrbit]) -> Outcome {
    let spec = VectorFieldSpec::lorenz_classic();
    let ic = IntegratorConfig::new(WorkingBox::cube(3, 100.0)).with_tolerances(1e-12, 1e-12);
    let cfg = PoincareConfig::new(&spec, ic.clone());
    let traj = integrate_sampled(
        &spec,
        &DVector::from_vec(vec![1.0, 1.0, 20.0]),
        0.0,
        0.7,
        130,
        &ic,
    )
    .unwrap();
    let (mut equi, mut law): (f64, f64) = (0.0, 0.0);
    for x in traj.states().iter().skip(30) {
        let (y, phi) = tangent_flow_with_state(&spec, x, 0.5, &ic).unwrap();
        let fy = spec.eval(&y);
        equi = equi.max((&phi * spec.eval(x) - &fy).norm() / fy.norm());

        let f0 = NormalFrame::at(&spec, x, &cfg).unwrap();
        let a = poincare_step(&spec, &f0, 0.3, &cfg).unwrap();
        let b = poincare_step(&spec, &a.frame_out, 0.4, &cfg).unwrap();
        let whole = poincare_step(&spec, &f0, 0.7, &cfg).unwrap();
        let change = whole.frame_out.basis.transpose() * &b.frame_out.basis;
        let composed = change * &b.lpf * &a.lpf;
        law = law.max((&whole.lpf - composed).norm() / whole.lpf.norm());
    }
    let mut mono: f64 = 0.0;
    let (hspec, hcfg, horbit) = hopf();
    let mut orbits = vec![(hspec, hcfg, horbit)];
    // polish each orbit so the closure gap sits below the comparison tolerance
    let mut polish = ClosingConfig::new(WorkingBox::cube(3, 100.0)).with_nodes(8);
    polish.integrator = polish.integrator.with_tolerances(1e-13, 1e-13);
    polish.tolerance = 1e-13;
    polish.max_period_drift = 1e-3;
    let mut unpolished = 0;
    for o in closed {
        let tight = close_orbit(&spec, &o.samples, &polish).unwrap_or_else(|_| {
            unpolished += 1;
            o.clone()
        });
        orbits.push((spec.clone(), cfg.clone(), tight));
    }
    for (s, c, o) in &orbits {
        let scaled = monodromy(s, o, c, CocycleKind::Scaled).unwrap().matrix;
        let plain = monodromy(s, o, c, CocycleKind::Unscaled).unwrap().matrix;
        mono = mono.max((&scaled - &plain).norm() / plain.norm());
    }
    outcome(
        equi < 1e-5 && law < 1e-5 && mono < 1e-10,
        format!(
            "equivariance {equi:.1e}, cocycle law {law:.1e} (100 samples), psi/psi* monodromy {mono:.1e} ({} orbits, {unpolished} unpolished)",
            orbits.len()
        ),
    )
}

fn domination_cones() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut disagreements = 0;
    let mut dominated = 0;
    for k in 0..20 {
        let lambdas = common::separated_exponents(&mut rng, 3, 0.5);
        let c = CocycleSequence::constant(common::conjugated(&mut rng, &lambdas, 1.0), 1.0, 2_000)
            .unwrap();
        let split = oseledec_filtration(&c).unwrap();
        let report = check_domination(&c, &split, split.groups() - 1);
        let cone = find_invariant_cone(&c, &split, 200, k);
        if report.satisfied {
            dominated += 1;
        }
        let consistent = match (&cone, report.satisfied) {
            (Some(p), true) => p.gamma * p.rho > 1.0 && check_cone_invariance(&c, p),
            (None, false) => true,
            _ => false,
        };
        if !consistent {
            disagreements += 1;
        }
    }
    outcome(
        disagreements == 0,
        format!("{dominated}/20 dominated, {disagreements} disagreements"),
    )
}

struct LorenzRun {
    setup: Setup,
    analysis: Analysis,
    scan: ScanRun,
    close: CloseOutput,
    compare: CompareOutput,
    elapsed: Duration,
}

fn lorenz_run() -> LorenzRun {
    let start = Instant::now();
    let setup = stages::setup(&common::lorenz_config()).unwrap();
    let analysis = stages::analyse(&setup).unwrap();
    let scan = stages::scan(&setup, &analysis).unwrap();
    let close = stages::close(&setup, &scan.output, None).unwrap();
    let records: Vec<stages::OrbitRecord> = close.orbits.iter().map(Into::into).collect();
    let compare = stages::compare(&setup, &analysis.spectrum, &records).unwrap();
    LorenzRun {
        setup,
        analysis,
        scan,
        close,
        compare,
        elapsed: start.elapsed(),
    }
}

fn orbit_exponents(run: &LorenzRun) -> Outcome {
    let shadowing = run.close.orbits.iter().filter(|o| o.shadowing.pass).count();
    let mu = &run.analysis.spectrum.exponents;
    let Some(best) = &run.compare.best else {
        return outcome(false, "no orbit closed".into());
    };
    let within = best
        .gaps
        .iter()
        .zip(mu)
        .all(|(g, l)| *g < 0.2 * (1.0 + l.abs()));
    outcome(
        shadowing >= 1 && within,
        format!(
            "{shadowing} shadowing orbits; mu {:.4?}, best orbit {:.4?}, gaps {:.4?}",
            mu, best.orbit_exponents, best.gaps
        ),
    )
}

fn measure_trend(run: &LorenzRun) -> Outcome {
    let tiers = &run.compare.tiers;
    let mins: Vec<Option<f64>> = tiers.iter().map(|t| t.min_weak_star).collect();
    let all = mins.iter().all(Option::is_some);
    let non_increasing = mins
        .windows(2)
        .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b <= a));
    let text = tiers
        .iter()
        .map(|t| {
            format!(
                "P<={}: {} orbits, {:.4}",
                t.max_period,
                t.orbits,
                t.min_weak_star.unwrap_or(f64::NAN)
            )
        })
        .join("; ");
    outcome(tiers.len() == 3 && all && non_increasing, text)
}

fn scanner_soundness(run: &LorenzRun) -> Outcome {
    let split = run.analysis.splitting().unwrap();
    let c = &run.analysis.cocycle;
    let mut checked = 0;
    let mut failures = 0;
    for cert in &run.scan.output.certificates {
        checked += 1;
        if !cert.verify(c, split) {
            failures += 1;
        }
    }
    for cand in &run.scan.output.candidates {
        checked += 1;
        let ok = cand.pair.verify(
            &run.scan.trajectory,
            &run.scan.member_indices,
            run.scan.output.d_rel,
            &run.scan.options,
        ) && cand.start_state.as_slice()
            == run.scan.trajectory.states()[cand.pair.i].as_slice()
            && cand.certificate.is_some_and(|k| {
                let s = &run.scan.output.certificates[k];
                s.start <= cand.pair.i && cand.pair.j <= s.end()
            });
        if !ok {
            failures += 1;
        }
    }
    // a uniformly hyperbolic constant cocycle and a random conjugate
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..5 {
        let lambdas = [
            -1.0 - rng.gen_range(0.0..1.0),
            1.0 + rng.gen_range(0.0..1.0),
        ];
        let cc =
            CocycleSequence::constant(common::conjugated(&mut rng, &lambdas, 0.25), 0.25, 4_000)
                .unwrap();
        let sp = oseledec_filtration(&cc).unwrap();
        for cert in quasi_hyperbolic_scan(&cc, &sp, 0.5, 1.0).unwrap() {
            checked += 1;
            if !cert.verify(&cc, &sp) {
                failures += 1;
            }
        }
    }
    outcome(
        checked > 0 && failures == 0,
        format!("{checked} re-checked, {failures} failures"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration, Duration)> = Vec::new();
    let mut timed = |k: usize, name: &'static str, limit: Duration, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((k, name, o, t.elapsed(), limit));
    };
    timed(
        1,
        "Floquet oracle",
        Duration::from_secs(10),
        &floquet_oracle,
    );
    timed(
        2,
        "constant-cocycle spectra",
        Duration::from_secs(5),
        &constant_spectra,
    );
    timed(
        3,
        "exterior powers",
        Duration::from_secs(30),
        &exterior_sums,
    );
    timed(4, "time reversal", Duration::from_secs(60), &time_reversal);
    timed(
        5,
        "perturbation margin",
        Duration::from_secs(60),
        &perturbation_claim,
    );

    let run = lorenz_run();
    let closed: Vec<PeriodicOrbit> = run
        .close
        .orbits
        .iter()
        .take(3)
        .map(|o| o.orbit.clone())
        .collect();
    timed(
        6,
        "flow and cocycle invariants",
        Duration::from_secs(120),
        &|| flow_invariants(&closed),
    );
    timed(
        7,
        "domination and cones",
        Duration::from_secs(120),
        &domination_cones,
    );
    let limit = Duration::from_secs(600);
    let pipeline = run.elapsed;
    let t8 = Instant::now();
    let o8 = orbit_exponents(&run);
    results.push((
        8,
        "periodic orbits approximate exponents",
        o8,
        pipeline + t8.elapsed(),
        limit,
    ));
    let t9 = Instant::now();
    let o9 = measure_trend(&run);
    results.push((
        9,
        "periodic measures approach mu",
        o9,
        pipeline + t9.elapsed(),
        limit,
    ));
    let t10 = Instant::now();
    let o10 = scanner_soundness(&run);
    results.push((10, "scanner soundness", o10, t10.elapsed(), limit));
    let _ = &run.setup;

    let mut failed = 0;
    for (k, name, o, elapsed, limit) in &results {
        let pass = o.pass && elapsed <= limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {k:2} {name:<40} {} [{:.1}s / {}s] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

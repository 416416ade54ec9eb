//! In-memory pipeline stages. Each returns a serializable document; the
//! commands in the parent module handle files.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::field::VectorFieldSpec;
use crate::flow::{advance, integrate_flow, integrate_sampled, Trajectory};
use crate::measures::{
    compare_spectra, periodic_measure_with, ComparisonReport, EmpiricalMeasure, TestFunctionFamily,
};
use crate::orbits::{
    close_orbit, fit_reparametrization, periodic_spectrum, validate_shadowing, ClosingConfig,
    PeriodicOrbit, ReparamOptions, ShadowingReport,
};
use crate::pesin::{
    block_members, near_return_detect_with, quasi_hyperbolic_scan_with, PesinBlockParams,
    ReturnCandidate, ReturnOptions, ScanOptions, StringCertificate,
};
use crate::poincare::{NormalFrame, PoincareConfig};
use crate::spectra::{
    benettin_spectrum, build_cocycle_with, check_domination, exterior_spectrum,
    find_invariant_cone, index_of, oseledec_filtration_with, time_reversal_spectrum, CocycleKind,
    CocycleSequence, DominationReport, LyapunovSpectrum, SplittingEstimate,
};

/// Field, settings and the post-transient start point.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: RunConfig,
    pub spec: VectorFieldSpec,
    pub poincare: PoincareConfig,
    pub start: DVector<f64>,
}

pub fn setup(config: &RunConfig) -> Result<Setup> {
    config.validate()?;
    let spec = config.field.clone();
    let integrator = config.integrator_config();
    let poincare = PoincareConfig::new(&spec, integrator.clone());
    let start = advance(&spec, &config.start_point(), config.transient, &integrator)?;
    Ok(Setup {
        config: config.clone(),
        spec,
        poincare,
        start,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub schema_version: u32,
    pub field: String,
    pub start_state: Vec<f64>,
    pub final_state: Vec<f64>,
    pub duration: f64,
    pub sample_dt: f64,
    pub samples: usize,
    pub min_speed: f64,
    pub max_speed: f64,
}

pub fn simulate(s: &Setup) -> Result<(SimulateOutput, Trajectory)> {
    let sim = &s.config.simulate;
    let n = (sim.duration / sim.sample_dt).round().max(1.0) as usize;
    let traj = integrate_sampled(
        &s.spec,
        &s.start,
        0.0,
        sim.sample_dt,
        n,
        &s.poincare.integrator,
    )?;
    let speeds = traj.field_norms();
    let out = SimulateOutput {
        schema_version: SCHEMA_VERSION,
        field: s.spec.family_name().into(),
        start_state: s.start.as_slice().to_vec(),
        final_state: traj.last().as_slice().to_vec(),
        duration: traj.duration(),
        sample_dt: sim.sample_dt,
        samples: traj.len(),
        min_speed: speeds.iter().cloned().fold(f64::INFINITY, f64::min),
        max_speed: speeds.iter().cloned().fold(0.0, f64::max),
    };
    Ok((out, traj))
}

/// Cocycle along the start orbit with its spectrum and, when the spectrum
/// allows it, its splitting.
pub struct Analysis {
    pub cocycle: CocycleSequence,
    pub spectrum: LyapunovSpectrum,
    pub splitting: Result<SplittingEstimate>,
}

impl Analysis {
    pub fn splitting(&self) -> Result<&SplittingEstimate> {
        self.splitting
            .as_ref()
            .map_err(|e| Error::Pipeline(format!("no usable splitting: {e}")))
    }
}

pub fn analyse(s: &Setup) -> Result<Analysis> {
    let cc = &s.config.cocycle;
    let frame = NormalFrame::at(&s.spec, &s.start, &s.poincare)?;
    let (cocycle, _) =
        build_cocycle_with(&s.spec, &frame, cc.step, cc.blocks, &s.poincare, cc.kind)?;
    let spectrum = benettin_spectrum(&cocycle)?;
    let splitting = oseledec_filtration_with(&cocycle, &spectrum);
    Ok(Analysis {
        cocycle,
        spectrum,
        splitting,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExteriorEntry {
    pub power: usize,
    pub spectrum: LyapunovSpectrum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplittingSummary {
    pub dimensions: Vec<usize>,
    pub burn_in: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumOutput {
    pub schema_version: u32,
    pub field: String,
    pub start_state: Vec<f64>,
    pub step: f64,
    pub blocks: usize,
    pub kind: CocycleKind,
    pub spectrum: LyapunovSpectrum,
    pub index: usize,
    pub time_reversed: LyapunovSpectrum,
    pub exterior: Vec<ExteriorEntry>,
    pub splitting: Option<SplittingSummary>,
    pub splitting_error: Option<String>,
}

pub fn spectrum(s: &Setup, a: &Analysis) -> Result<SpectrumOutput> {
    let exterior = s
        .config
        .spectrum
        .exterior_powers
        .iter()
        .map(|&power| {
            Ok(ExteriorEntry {
                power,
                spectrum: exterior_spectrum(&a.cocycle, power)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (splitting, splitting_error) = match &a.splitting {
        Ok(sp) => (
            Some(SplittingSummary {
                dimensions: sp.dimensions().to_vec(),
                burn_in: sp.burn_in,
                residual: sp.residual,
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SpectrumOutput {
        schema_version: SCHEMA_VERSION,
        field: s.spec.family_name().into(),
        start_state: s.start.as_slice().to_vec(),
        step: a.cocycle.step,
        blocks: a.cocycle.len(),
        kind: s.config.cocycle.kind,
        index: index_of(&a.spectrum),
        time_reversed: time_reversal_spectrum(&a.spectrum),
        spectrum: a.spectrum.clone(),
        exterior,
        splitting,
        splitting_error,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeSummary {
    pub rho: f64,
    pub gamma: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominationOutput {
    pub schema_version: u32,
    pub boundary: usize,
    pub report: DominationReport,
    pub cone: Option<ConeSummary>,
}

pub fn domination(s: &Setup, a: &Analysis) -> Result<DominationOutput> {
    let split = a.splitting()?;
    let d = &s.config.domination;
    if d.boundary >= split.groups() {
        return Err(Error::Config(format!(
            "boundary {} needs more than {} groups",
            d.boundary,
            split.groups()
        )));
    }
    let report = check_domination(&a.cocycle, split, d.boundary);
    // the cone family is built around the top group only
    let cone = if d.boundary + 1 == split.groups() {
        find_invariant_cone(&a.cocycle, split, d.cone_samples, s.config.seed).map(|c| ConeSummary {
            rho: c.rho,
            gamma: c.gamma,
            samples: c.samples,
            seed: c.seed,
        })
    } else {
        None
    };
    Ok(DominationOutput {
        schema_version: SCHEMA_VERSION,
        boundary: d.boundary,
        report,
        cone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCandidate {
    pub id: usize,
    #[serde(flatten)]
    pub pair: ReturnCandidate,
    pub duration: f64,
    pub start_state: Vec<f64>,
    /// Index of the certified string containing the pair.
    pub certificate: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanOutput {
    pub schema_version: u32,
    pub step: f64,
    pub pesin: PesinBlockParams,
    pub members: usize,
    pub samples: usize,
    pub d_rel: f64,
    pub certificates: Vec<StringCertificate>,
    pub candidates: Vec<ScanCandidate>,
}

/// Scan results together with the data needed to re-check them.
pub struct ScanRun {
    pub output: ScanOutput,
    pub trajectory: Trajectory,
    pub member_indices: Vec<usize>,
    pub options: ReturnOptions,
}

pub fn scan(s: &Setup, a: &Analysis) -> Result<ScanRun> {
    let split = a.splitting()?;
    let (p, sc) = (&s.config.pesin, &s.config.scan);
    let mut params = PesinBlockParams::new(p.block, p.eta, p.c)?.with_horizon(p.horizon);
    params.stable_groups = p.stable_groups;
    let members = block_members(&a.cocycle, split, &params)?;
    let opts = ScanOptions {
        max_gaps: sc.max_gaps,
        stable_groups: p.stable_groups,
    };
    let certificates = quasi_hyperbolic_scan_with(&a.cocycle, split, sc.eta, sc.gap, &opts)?;
    let traj = a.cocycle.base_trajectory()?;
    let step = a.cocycle.step;
    let options = ReturnOptions {
        min_separation: ((sc.min_period / step).ceil() as usize).max(1),
        max_separation: Some((sc.max_period / step).floor() as usize),
        max_candidates: sc.max_candidates,
    };
    let pairs = near_return_detect_with(&traj, &members, sc.d_rel, &options);
    let candidates = pairs
        .into_iter()
        .map(|pair| {
            let certificate = certificates
                .iter()
                .position(|c| c.start <= pair.i && pair.j <= c.end());
            (pair, certificate)
        })
        .filter(|(_, c)| c.is_some() || !sc.require_certificate)
        .enumerate()
        .map(|(id, (pair, certificate))| ScanCandidate {
            id,
            duration: (pair.j - pair.i) as f64 * step,
            start_state: traj.states()[pair.i].as_slice().to_vec(),
            pair,
            certificate,
        })
        .collect();
    let output = ScanOutput {
        schema_version: SCHEMA_VERSION,
        step,
        pesin: params,
        members: members.len(),
        samples: traj.len(),
        d_rel: sc.d_rel,
        certificates,
        candidates,
    };
    Ok(ScanRun {
        output,
        trajectory: traj,
        member_indices: members,
        options,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedOrbit {
    pub candidate: usize,
    pub orbit: PeriodicOrbit,
    pub shadowing: ShadowingReport,
    pub spectrum: LyapunovSpectrum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attempt {
    pub candidate: usize,
    pub accepted: bool,
    pub period: Option<f64>,
    pub shadowing: Option<ShadowingReport>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CloseOutput {
    pub schema_version: u32,
    pub eps: f64,
    pub orbits: Vec<ClosedOrbit>,
    pub attempts: Vec<Attempt>,
}

/// Closing configuration derived from the run settings.
pub fn closing_config(s: &Setup) -> ClosingConfig {
    let c = &s.config.closing;
    ClosingConfig {
        integrator: s.config.closing_integrator(),
        nodes: c.nodes,
        max_iterations: c.max_iterations,
        tolerance: c.tolerance,
        max_period_drift: c.max_period_drift,
    }
}

fn orbit_poincare(s: &Setup) -> PoincareConfig {
    PoincareConfig {
        integrator: s.config.closing_integrator(),
        ..s.poincare.clone()
    }
}

/// Closes one candidate and checks shadowing at the configured `eps`.
pub fn close_candidate(
    s: &Setup,
    cand: &ScanCandidate,
) -> Result<(PeriodicOrbit, ShadowingReport)> {
    let cfg = closing_config(s);
    let x = DVector::from_column_slice(&cand.start_state);
    let segment = integrate_flow(&s.spec, &x, (0.0, cand.duration), &cfg.integrator)?;
    let orbit = close_orbit(&s.spec, &segment, &cfg)?;
    let opts = ReparamOptions {
        block: s.config.closing.reparam_block,
        ..ReparamOptions::default()
    };
    let theta = fit_reparametrization(&s.spec, &segment, &orbit, &opts)?;
    let report = validate_shadowing(&s.spec, &segment, &orbit, &theta, s.config.closing.eps);
    Ok((orbit, report))
}

fn same_orbit(a: &PeriodicOrbit, b: &PeriodicOrbit) -> bool {
    const PROBES: usize = 4000;
    (a.period - b.period).abs() <= 1e-6 * a.period
        && (0..PROBES).any(|k| {
            let y = a.state_at(a.period * k as f64 / PROBES as f64);
            (y - &b.point).norm() <= 1e-3 * (1.0 + b.point.norm())
        })
}

/// Closes the given candidate, or walks the candidate list until enough
/// distinct shadowing orbits are found.
pub fn close(s: &Setup, scan: &ScanOutput, only: Option<usize>) -> Result<CloseOutput> {
    let c = &s.config.closing;
    let chosen: Vec<&ScanCandidate> = match only {
        Some(id) => vec![scan
            .candidates
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Config(format!("no candidate with id {id}")))?],
        None => scan.candidates.iter().collect(),
    };
    let poincare = orbit_poincare(s);
    let mut orbits: Vec<ClosedOrbit> = Vec::new();
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut tried: Vec<&ScanCandidate> = Vec::new();
    for cand in chosen {
        if attempts.len() == c.max_attempts || orbits.len() == c.max_orbits {
            break;
        }
        // neighbouring pairs describe the same return
        if tried
            .iter()
            .any(|t| t.pair.i.abs_diff(cand.pair.i) <= 3 && t.pair.j.abs_diff(cand.pair.j) <= 3)
        {
            continue;
        }
        tried.push(cand);
        let attempt = |accepted, period, shadowing, note: Option<String>| Attempt {
            candidate: cand.id,
            accepted,
            period,
            shadowing,
            note,
        };
        match close_candidate(s, cand) {
            Err(e) if e.kind() == crate::error::ErrorKind::Config => return Err(e),
            Err(e) => attempts.push(attempt(false, None, None, Some(e.to_string()))),
            Ok((orbit, report)) => {
                if !report.pass {
                    attempts.push(attempt(
                        false,
                        Some(orbit.period),
                        Some(report),
                        Some("not shadowing".into()),
                    ));
                } else if orbits.iter().any(|o| same_orbit(&o.orbit, &orbit)) {
                    attempts.push(attempt(
                        false,
                        Some(orbit.period),
                        Some(report),
                        Some("duplicate orbit".into()),
                    ));
                } else {
                    match periodic_spectrum(&s.spec, &orbit, &poincare) {
                        Ok(spectrum) => {
                            attempts.push(attempt(
                                true,
                                Some(orbit.period),
                                Some(report.clone()),
                                None,
                            ));
                            orbits.push(ClosedOrbit {
                                candidate: cand.id,
                                orbit,
                                shadowing: report,
                                spectrum,
                            });
                        }
                        Err(e) => attempts.push(attempt(
                            false,
                            Some(orbit.period),
                            Some(report),
                            Some(e.to_string()),
                        )),
                    }
                }
            }
        }
    }
    Ok(CloseOutput {
        schema_version: SCHEMA_VERSION,
        eps: c.eps,
        orbits,
        attempts,
    })
}

/// What [`compare`] needs from an orbit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub candidate: usize,
    pub point: Vec<f64>,
    pub period: f64,
    pub spectrum: LyapunovSpectrum,
}

impl From<&ClosedOrbit> for OrbitRecord {
    fn from(o: &ClosedOrbit) -> Self {
        Self {
            candidate: o.candidate,
            point: o.orbit.point.as_slice().to_vec(),
            period: o.orbit.period,
            spectrum: o.spectrum.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitComparison {
    pub candidate: usize,
    pub period: f64,
    pub exponents: Vec<f64>,
    pub gaps: Vec<f64>,
    /// `max_i |gap_i| / (1 + |lambda_i(mu)|)`.
    pub relative_gap: f64,
    pub weak_star: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TierSummary {
    pub max_period: f64,
    pub orbits: usize,
    pub min_weak_star: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareOutput {
    pub schema_version: u32,
    pub assumption: String,
    pub measure_spectrum: LyapunovSpectrum,
    pub best_candidate: Option<usize>,
    pub best: Option<ComparisonReport>,
    pub orbits: Vec<OrbitComparison>,
    pub tiers: Vec<TierSummary>,
    /// Minimal weak* distance never increases from one tier to the next.
    pub trend_non_increasing: bool,
}

const ASSUMPTION: &str =
    "the long-run empirical measure of the start orbit stands in for an ergodic hyperbolic \
measure with dominated Oseledec splitting; this is assumed, not verified";

/// Time-average measure along the cocycle base orbit.
pub fn empirical_measure(s: &Setup) -> Result<EmpiricalMeasure> {
    let cc = &s.config.cocycle;
    let traj = integrate_sampled(
        &s.spec,
        &s.start,
        0.0,
        cc.step,
        cc.blocks,
        &s.poincare.integrator,
    )?;
    Ok(EmpiricalMeasure::from_trajectory(&traj))
}

pub fn compare(
    s: &Setup,
    measure_spectrum: &LyapunovSpectrum,
    orbits: &[OrbitRecord],
) -> Result<CompareOutput> {
    let m = &s.config.compare;
    let mu = empirical_measure(s)?;
    let family = TestFunctionFamily::for_points(&mu.points, m.family_size)?;
    let mu_moments = family.moments(&mu);
    let integrator = s.config.closing_integrator();
    let mut rows = Vec::with_capacity(orbits.len());
    let mut reports = Vec::with_capacity(orbits.len());
    for rec in orbits {
        let orbit = PeriodicOrbit::from_point(
            &s.spec,
            DVector::from_column_slice(&rec.point),
            rec.period,
            &integrator,
        )?;
        let nu = periodic_measure_with(&orbit, m.orbit_nodes);
        let distance = family.distance(&mu_moments, &family.moments(&nu));
        let report = compare_spectra(measure_spectrum, &rec.spectrum, m.eps)?
            .with_weak_star(distance, m.weak_star_eps);
        let relative_gap = report
            .gaps
            .iter()
            .zip(&measure_spectrum.exponents)
            .map(|(g, l)| g / (1.0 + l.abs()))
            .fold(0.0, f64::max);
        rows.push(OrbitComparison {
            candidate: rec.candidate,
            period: rec.period,
            exponents: rec.spectrum.exponents.clone(),
            gaps: report.gaps.clone(),
            relative_gap,
            weak_star: distance,
        });
        reports.push(report);
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.relative_gap.total_cmp(&b.1.relative_gap))
        .map(|(k, _)| k);
    let tiers: Vec<TierSummary> = m
        .period_tiers
        .iter()
        .map(|&max_period| {
            let admitted: Vec<&OrbitComparison> =
                rows.iter().filter(|r| r.period <= max_period).collect();
            TierSummary {
                max_period,
                orbits: admitted.len(),
                min_weak_star: admitted.iter().map(|r| r.weak_star).min_by(f64::total_cmp),
            }
        })
        .collect();
    let mins: Vec<f64> = tiers.iter().filter_map(|t| t.min_weak_star).collect();
    Ok(CompareOutput {
        schema_version: SCHEMA_VERSION,
        assumption: ASSUMPTION.into(),
        measure_spectrum: measure_spectrum.clone(),
        best_candidate: best.map(|k| rows[k].candidate),
        best: best.map(|k| reports[k].clone()),
        trend_non_increasing: mins.windows(2).all(|w| w[1] <= w[0]),
        orbits: rows,
        tiers,
    })
}

/// Direct comparison of two spectra, without measures.
pub fn compare_files(
    s: &Setup,
    measure: &LyapunovSpectrum,
    orbit: &LyapunovSpectrum,
) -> Result<CompareOutput> {
    let report = compare_spectra(measure, orbit, s.config.compare.eps)?;
    Ok(CompareOutput {
        schema_version: SCHEMA_VERSION,
        assumption: ASSUMPTION.into(),
        measure_spectrum: measure.clone(),
        best_candidate: None,
        best: Some(report),
        orbits: Vec::new(),
        tiers: Vec::new(),
        trend_non_increasing: true,
    })
}

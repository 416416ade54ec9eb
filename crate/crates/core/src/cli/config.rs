use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{VectorFieldSpec, WorkingBox};
use crate::flow::{IntegratorConfig, Method};
use crate::spectra::CocycleKind;

/// Version stamped into every output document.
pub const SCHEMA_VERSION: u32 = 1;

/// A complete run description. Every section except `field` and
/// `working_box` has defaults tuned for the Lorenz attractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub field: VectorFieldSpec,
    pub working_box: WorkingBox,
    /// Start point; drawn from the central tenth of the box when absent.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    /// Time integrated and discarded before anything is recorded.
    #[serde(default = "default_transient")]
    pub transient: f64,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub simulate: SimulateSettings,
    #[serde(default)]
    pub cocycle: CocycleSettings,
    #[serde(default)]
    pub spectrum: SpectrumSettings,
    #[serde(default)]
    pub domination: DominationSettings,
    #[serde(default)]
    pub pesin: PesinSettings,
    #[serde(default)]
    pub scan: ScanSettings,
    #[serde(default)]
    pub closing: ClosingSettings,
    #[serde(default)]
    pub compare: CompareSettings,
}

fn schema() -> u32 {
    SCHEMA_VERSION
}

fn default_transient() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    pub method: Method,
    pub step: f64,
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
    /// Tolerances used while closing orbits and computing their spectra.
    pub closing_atol: f64,
    pub closing_rtol: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            step: 1e-2,
            atol: 1e-10,
            rtol: 1e-9,
            max_steps: 50_000_000,
            closing_atol: 1e-12,
            closing_rtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub duration: f64,
    pub sample_dt: f64,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            duration: 100.0,
            sample_dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CocycleSettings {
    /// Block time `T`.
    pub step: f64,
    pub blocks: usize,
    pub kind: CocycleKind,
}

impl Default for CocycleSettings {
    fn default() -> Self {
        Self {
            step: 0.1,
            blocks: 100_000,
            kind: CocycleKind::Scaled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct SpectrumSettings {
    /// Exterior powers whose spectra are reported as well.
    pub exterior_powers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominationSettings {
    /// Number of splitting groups in `E`.
    pub boundary: usize,
    pub cone_samples: usize,
}

impl Default for DominationSettings {
    fn default() -> Self {
        Self {
            boundary: 1,
            cone_samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PesinSettings {
    /// Block time of the membership test, a multiple of the cocycle step.
    pub block: f64,
    /// Rate per block.
    pub eta: f64,
    pub c: f64,
    pub horizon: usize,
    pub stable_groups: usize,
}

impl Default for PesinSettings {
    fn default() -> Self {
        Self {
            block: 1.0,
            eta: 0.5,
            c: 10.0,
            horizon: 100,
            stable_groups: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    /// Rate per unit time of the quasi-hyperbolic strings.
    pub eta: f64,
    /// Partition gap of the strings.
    pub gap: f64,
    pub max_gaps: usize,
    /// Near-return threshold relative to `|X|`.
    pub d_rel: f64,
    pub min_period: f64,
    pub max_period: f64,
    pub max_candidates: usize,
    /// Keep only candidates inside a certified string.
    pub require_certificate: bool,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            eta: 0.5,
            gap: 1.0,
            max_gaps: 1000,
            d_rel: 0.05,
            min_period: 1.0,
            max_period: 10.0,
            max_candidates: 500,
            require_certificate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosingSettings {
    /// Shadowing tolerance.
    pub eps: f64,
    pub nodes: Option<usize>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub max_period_drift: f64,
    /// Candidates tried when no candidate id is given.
    pub max_attempts: usize,
    /// Stop after this many distinct shadowing orbits.
    pub max_orbits: usize,
    /// Reparametrization block time.
    pub reparam_block: f64,
}

impl Default for ClosingSettings {
    fn default() -> Self {
        Self {
            eps: 0.1,
            nodes: None,
            max_iterations: 50,
            tolerance: 1e-9,
            max_period_drift: 0.2,
            max_attempts: 60,
            max_orbits: 20,
            reparam_block: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSettings {
    /// Threshold on every exponent gap.
    pub eps: f64,
    /// Threshold on the weak* distance.
    pub weak_star_eps: f64,
    pub family_size: usize,
    /// Nested period bounds; tier `k` admits orbits with period at most `period_tiers[k]`.
    pub period_tiers: Vec<f64>,
    /// Time nodes of each periodic measure.
    pub orbit_nodes: usize,
    /// Compare these two spectrum files instead of pipeline outputs.
    pub measure_spectrum: Option<String>,
    pub orbit_spectrum: Option<String>,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            eps: 0.5,
            weak_star_eps: 0.05,
            family_size: 20,
            period_tiers: vec![3.0, 6.0, 10.0],
            orbit_nodes: 1000,
            measure_spectrum: None,
            orbit_spectrum: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Minimal config for `field` with every other setting at its default.
    pub fn new(field: VectorFieldSpec, working_box: WorkingBox) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            field,
            working_box,
            initial_state: None,
            transient: default_transient(),
            integrator: IntegratorSettings::default(),
            simulate: SimulateSettings::default(),
            cocycle: CocycleSettings::default(),
            spectrum: SpectrumSettings::default(),
            domination: DominationSettings::default(),
            pesin: PesinSettings::default(),
            scan: ScanSettings::default(),
            closing: ClosingSettings::default(),
            compare: CompareSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let d = self.field.dimension();
        if self.working_box.dimension() != d {
            return bad("working_box dimension differs from the field dimension");
        }
        WorkingBox::new(
            self.working_box.lower.clone(),
            self.working_box.upper.clone(),
        )?;
        if let Some(x) = &self.initial_state {
            if x.len() != d || !self.working_box.contains(x) {
                return bad("initial_state must be a point of the working box");
            }
        }
        if !(self.transient >= 0.0) {
            return bad("transient must be nonnegative");
        }
        self.integrator_config().validate()?;
        if !(self.integrator.closing_atol > 0.0 && self.integrator.closing_rtol > 0.0) {
            return bad("closing tolerances must be positive");
        }
        if !(self.simulate.duration > 0.0 && self.simulate.sample_dt > 0.0) {
            return bad("simulate needs positive duration and sample_dt");
        }
        if !(self.cocycle.step > 0.0) || self.cocycle.blocks < 2 {
            return bad("cocycle needs step > 0 and at least 2 blocks");
        }
        if self
            .spectrum
            .exterior_powers
            .iter()
            .any(|&n| n == 0 || n >= d)
        {
            return bad("exterior powers must lie in 1..d-1");
        }
        if self.domination.boundary == 0 || self.domination.cone_samples == 0 {
            return bad("domination needs boundary >= 1 and cone_samples >= 1");
        }
        let p = &self.pesin;
        if !(p.block > 0.0 && p.eta > 0.0 && p.c >= 1.0) || p.horizon == 0 || p.stable_groups == 0 {
            return bad("pesin needs block > 0, eta > 0, c >= 1, horizon >= 1, stable_groups >= 1");
        }
        let s = &self.scan;
        if !(s.eta > 0.0 && s.gap > 0.0 && s.d_rel > 0.0) || s.max_gaps < 2 || s.max_candidates == 0
        {
            return bad("scan needs eta, gap, d_rel > 0, max_gaps >= 2, max_candidates >= 1");
        }
        if !(s.min_period > 0.0 && s.min_period < s.max_period) {
            return bad("scan needs 0 < min_period < max_period");
        }
        let c = &self.closing;
        if !(c.eps > 0.0 && c.tolerance > 0.0 && c.max_period_drift > 0.0 && c.reparam_block > 0.0)
        {
            return bad(
                "closing needs positive eps, tolerance, max_period_drift and reparam_block",
            );
        }
        if c.max_iterations == 0 || c.max_attempts == 0 || c.max_orbits == 0 || c.nodes == Some(0) {
            return bad("closing counts must be positive");
        }
        let m = &self.compare;
        if !(m.eps > 0.0 && m.weak_star_eps > 0.0) || m.family_size == 0 || m.orbit_nodes == 0 {
            return bad("compare needs positive eps, weak_star_eps, family_size and orbit_nodes");
        }
        if m.period_tiers.is_empty() || m.period_tiers.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("period_tiers must be nonempty and strictly increasing");
        }
        if m.measure_spectrum.is_some() != m.orbit_spectrum.is_some() {
            return bad("measure_spectrum and orbit_spectrum must be given together");
        }
        Ok(())
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let i = &self.integrator;
        IntegratorConfig {
            method: i.method,
            step: i.step,
            atol: i.atol,
            rtol: i.rtol,
            bounds: self.working_box.clone(),
            max_steps: i.max_steps,
        }
    }

    pub fn closing_integrator(&self) -> IntegratorConfig {
        self.integrator_config()
            .with_tolerances(self.integrator.closing_atol, self.integrator.closing_rtol)
    }

    /// The configured start point, or a seeded draw from the box center.
    pub fn start_point(&self) -> DVector<f64> {
        if let Some(x) = &self.initial_state {
            return DVector::from_column_slice(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let c = self.working_box.center();
        let h = self.working_box.half_widths();
        DVector::from_fn(c.len(), |i, _| {
            c[i] + 0.1 * h[i] * rng.gen_range(-1.0..=1.0)
        })
    }
}

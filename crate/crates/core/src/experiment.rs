//! Config-driven experiments: one JSON document in, CSV/JSON artifacts and a
//! `manifest.json` out.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bands::DEFAULT_SCAN_POINTS;
use crate::discretize::{validity_ceiling, BoundaryPair, DEFAULT_H};
use crate::ids::{
    bracketing_csv, bracketing_study, ids_estimate, mixture_ids, window_estimate, BracketingStudy, IdsCurve,
    MIN_HALF_LENGTH,
};
use crate::localization::{
    decay_csv, decay_fit, evidence_label, hypothesis_violations, lyapunov_csv, lyapunov_with, LyapunovOptions,
    DEFAULT_CADENCE, DEFAULT_STEPS, MIN_DECAY_HALF_LENGTH, MIN_STEPS,
};
use crate::output::{csv_string, fmt_f64, write_json, write_text};
use crate::potentials::{PotentialModel, DEFAULT_SUPPORT_QUANTILES};
use crate::seeding::{derive, realization_seed};
use crate::spectra::{
    compare_with_box, essential_spectrum_model, pattern_bands, union_of, BoxComparison, SpectrumWindow,
    DEFAULT_ELL_MAX,
};
use crate::{Error, Result};

pub const DEFAULT_TUPLES: usize = 1000;
pub const DEFAULT_BRACKET_SCALE: f64 = 10.0;
pub const DEFAULT_BRACKET_WINDOW: [f64; 2] = [-1.0, 30.0];
pub const DEFAULT_BULK_MARGIN: f64 = 10.0;
pub const DEFAULT_SPECTRUM_TOLERANCE: f64 = 0.05;
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.99;
pub const DEFAULT_MIXTURE_TOLERANCE: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 0.01;
pub const MIN_BOX_HALF_LENGTH: f64 = 50.0;

/// Seed labels of the auxiliary runs inside one experiment.
const N1_SEED_LABEL: u64 = 1;
const REFERENCE_SEED_LABEL: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Ids,
    Mixture,
    Bands,
    EssentialSpectrum,
    Bracketing,
    Lyapunov,
    Decay,
    WindowIds,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Ids,
        ExperimentKind::Mixture,
        ExperimentKind::Bands,
        ExperimentKind::EssentialSpectrum,
        ExperimentKind::Bracketing,
        ExperimentKind::Lyapunov,
        ExperimentKind::Decay,
        ExperimentKind::WindowIds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ids => "ids",
            ExperimentKind::Mixture => "mixture",
            ExperimentKind::Bands => "bands",
            ExperimentKind::EssentialSpectrum => "essential-spectrum",
            ExperimentKind::Bracketing => "bracketing",
            ExperimentKind::Lyapunov => "lyapunov",
            ExperimentKind::Decay => "decay",
            ExperimentKind::WindowIds => "window-ids",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment '{s}'")))
    }
}

/// Equispaced energies `e_min, …, e_max` (`points ≥ 2`), or just the
/// interval when `points` is absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWindow {
    pub e_min: f64,
    pub e_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl EnergyWindow {
    pub fn grid(&self) -> Option<Vec<f64>> {
        let n = self.points?;
        if n < 2 {
            return None;
        }
        let step = (self.e_max - self.e_min) / (n - 1) as f64;
        Some(
            (0..n)
                .map(|i| if i + 1 == n { self.e_max } else { self.e_min + step * i as f64 })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub half_length: Option<f64>,
    /// Left end of the window of `window-ids`.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<EnergyWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_quantiles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc: Option<BoundaryPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bulk_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_threshold: Option<f64>,
    /// `ε` of the plateau radius diagnostic `M(ε)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: PotentialModel,
    #[serde(default)]
    pub numeric: NumericConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
    }

    pub fn h(&self) -> f64 {
        self.numeric.h.unwrap_or(DEFAULT_H)
    }

    pub fn validity_ceiling(&self) -> f64 {
        validity_ceiling(self.h())
    }

    /// Explicit energies, or the grid of `window` when it has `points`.
    pub fn energies(&self) -> Option<Vec<f64>> {
        self.numeric
            .energies
            .clone()
            .or_else(|| self.numeric.window.and_then(|w| w.grid()))
    }

    /// Copy with every default used by the experiment written out.
    pub fn resolved(&self) -> Self {
        use ExperimentKind as K;
        let mut c = self.clone();
        let n = &mut c.numeric;
        n.h.get_or_insert(DEFAULT_H);
        match c.experiment {
            K::Ids | K::WindowIds => {
                n.bc.get_or_insert(BoundaryPair::DIRICHLET);
                n.epsilon.get_or_insert(DEFAULT_EPSILON);
            }
            K::Mixture => {
                n.bc.get_or_insert(BoundaryPair::DIRICHLET);
                n.tolerance.get_or_insert(DEFAULT_MIXTURE_TOLERANCE);
                n.epsilon.get_or_insert(DEFAULT_EPSILON);
            }
            K::Bands => {
                n.ell_max.get_or_insert(DEFAULT_ELL_MAX);
                n.scan_points.get_or_insert(DEFAULT_SCAN_POINTS);
                n.support_quantiles.get_or_insert(DEFAULT_SUPPORT_QUANTILES);
            }
            K::EssentialSpectrum => {
                n.ell_max.get_or_insert(DEFAULT_ELL_MAX);
                n.scan_points.get_or_insert(DEFAULT_SCAN_POINTS);
                n.support_quantiles.get_or_insert(DEFAULT_SUPPORT_QUANTILES);
                n.bulk_margin.get_or_insert(DEFAULT_BULK_MARGIN);
                n.tolerance.get_or_insert(DEFAULT_SPECTRUM_TOLERANCE);
                n.coverage_threshold.get_or_insert(DEFAULT_COVERAGE_THRESHOLD);
            }
            K::Bracketing => {
                n.tuples.get_or_insert(DEFAULT_TUPLES);
                n.half_length.get_or_insert(DEFAULT_BRACKET_SCALE);
                n.window.get_or_insert(EnergyWindow {
                    e_min: DEFAULT_BRACKET_WINDOW[0],
                    e_max: DEFAULT_BRACKET_WINDOW[1],
                    points: None,
                });
            }
            K::Lyapunov => {
                n.steps.get_or_insert(DEFAULT_STEPS);
                n.cadence.get_or_insert(DEFAULT_CADENCE);
            }
            K::Decay => {}
        }
        c
    }
}

/// Reads a config file, filling in the experiment named on the command
/// line when the file omits it and applying seed and output overrides.
pub fn prepare_config(
    text: &str,
    experiment: ExperimentKind,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::config("config must be a JSON object"))?;
    obj.entry("experiment").or_insert_with(|| json!(experiment.name()));
    let mut config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::config(format!("invalid config: {e}")))?;
    if config.experiment != experiment {
        return Err(Error::config(format!(
            "command line asks for '{experiment}' but the config describes '{}'",
            config.experiment
        )));
    }
    if seed.is_some() {
        config.seed = seed;
    }
    if output_dir.is_some() {
        config.output_dir = output_dir;
    }
    Ok(config)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// Blocks the run.
    Error,
    /// Informational; the run proceeds.
    Notice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Notice => "notice",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

struct Diagnostics(Vec<Diagnostic>);

impl Diagnostics {
    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Error,
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn notice(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Notice,
            field: field.to_string(),
            message: message.into(),
        });
    }
}

/// Every problem with `config`, without running anything.
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    use ExperimentKind as K;
    let mut d = Diagnostics(Vec::new());
    let n = &config.numeric;
    let kind = config.experiment;

    if config.seed.is_none() {
        d.error("seed", "seed is required");
    }
    if config.output_dir.is_none() {
        d.error("output_dir", "output directory is required (config field or --output-dir)");
    }
    if let Err(e) = config.model.validate() {
        d.error("model", e.to_string());
    }
    let h = config.h();
    if !(h > 0.0) || !h.is_finite() {
        d.error("numeric.h", format!("spacing must be positive, got {h}"));
        return d.0;
    }
    let ceiling = validity_ceiling(h);

    let needs_energies = matches!(kind, K::Ids | K::Mixture | K::Lyapunov | K::Decay | K::WindowIds);
    let needs_window = matches!(kind, K::Bands | K::EssentialSpectrum);
    if n.energies.is_some() && n.window.and_then(|w| w.points).is_some() {
        d.error("numeric.energies", "give either energies or a window with points, not both");
    }
    if let Some(w) = n.window {
        if !(w.e_min < w.e_max) || !w.e_min.is_finite() || !w.e_max.is_finite() {
            d.error("numeric.window", format!("window needs e_min < e_max, got [{}, {}]", w.e_min, w.e_max));
        } else if w.e_max > ceiling {
            d.error(
                "numeric.window",
                format!("window end {} exceeds the discretization validity ceiling {ceiling}", w.e_max),
            );
        }
        if matches!(w.points, Some(p) if p < 2) {
            d.error("numeric.window.points", "an energy grid needs at least 2 points");
        }
    }
    if needs_window && n.window.is_none() {
        d.error("numeric.window", format!("experiment '{kind}' needs an energy window"));
    }
    if needs_energies {
        match config.energies() {
            None => d.error(
                "numeric.energies",
                format!("experiment '{kind}' needs energies or a window with points"),
            ),
            Some(es) => {
                if es.is_empty() {
                    d.error("numeric.energies", "energy list is empty");
                }
                if es.iter().any(|e| !e.is_finite()) || es.windows(2).any(|w| !(w[0] < w[1])) {
                    d.error("numeric.energies", "energies must be finite and strictly increasing");
                }
                for e in es.iter().filter(|e| **e > ceiling) {
                    d.error(
                        "numeric.energies",
                        format!("energy {e} exceeds the discretization validity ceiling {ceiling} = 0.1/h²"),
                    );
                }
                if kind == K::Mixture {
                    let (a_minus, a_plus) = config.model.background.limits();
                    for e in &es {
                        for a in [a_minus, a_plus] {
                            if e - a > ceiling {
                                d.error(
                                    "numeric.energies",
                                    format!(
                                        "shifted energy {} exceeds the discretization validity ceiling {ceiling}",
                                        e - a
                                    ),
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    let need_l = |d: &mut Diagnostics, min: f64| match n.half_length {
        None => d.error("numeric.L", format!("experiment '{kind}' needs L")),
        Some(l) if !(l >= min) => d.error("numeric.L", format!("experiment '{kind}' needs L >= {min}, got {l}")),
        Some(_) => {}
    };
    let need_realizations = |d: &mut Diagnostics| match n.realizations {
        None => d.error("numeric.realizations", format!("experiment '{kind}' needs realizations")),
        Some(0) => d.error("numeric.realizations", "realizations must be at least 1"),
        Some(_) => {}
    };
    match kind {
        K::Ids | K::Mixture => {
            need_l(&mut d, MIN_HALF_LENGTH);
            need_realizations(&mut d);
        }
        K::WindowIds => {
            need_realizations(&mut d);
            match (n.window_start, n.half_length) {
                (Some(m), Some(l)) => {
                    if !(l - m >= 2.0 * MIN_HALF_LENGTH) {
                        d.error(
                            "numeric.L",
                            format!("window-ids needs L - M >= {}, got {}", 2.0 * MIN_HALF_LENGTH, l - m),
                        );
                    }
                }
                _ => d.error("numeric.M", "window-ids needs both M and L"),
            }
        }
        K::EssentialSpectrum => need_l(&mut d, MIN_BOX_HALF_LENGTH),
        K::Decay => need_l(&mut d, MIN_DECAY_HALF_LENGTH),
        K::Lyapunov => {
            if matches!(n.steps, Some(s) if s < MIN_STEPS) {
                d.error("numeric.steps", format!("Lyapunov runs need at least {MIN_STEPS} steps"));
            }
            if n.cadence == Some(0) {
                d.error("numeric.cadence", "renormalization cadence must be positive");
            }
        }
        K::Bracketing => {
            if matches!(n.tuples, Some(0)) {
                d.error("numeric.tuples", "at least one tuple is required");
            }
            if matches!(n.half_length, Some(l) if !(l >= 1.0)) {
                d.error("numeric.L", "bracketing scale L must be at least 1");
            }
        }
        K::Bands => {}
    }
    if matches!(kind, K::Bands | K::EssentialSpectrum) {
        if n.ell_max == Some(0) {
            d.error("numeric.ell_max", "ell_max must be at least 1");
        }
        if matches!(n.scan_points, Some(p) if p < 100) {
            d.error("numeric.scan_points", "scan_points must be at least 100");
        }
    }
    if matches!(kind, K::Lyapunov | K::Decay) {
        for v in hypothesis_violations(&config.model) {
            d.notice("model", format!("output labelled \"exploratory\": {v}"));
        }
    }
    d.0
}

/// Contents of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_echo: ExperimentConfig,
    /// Seeds actually used by every random sub-run.
    pub derived_seeds: BTreeMap<String, Vec<u64>>,
    pub artifacts: Vec<PathBuf>,
    pub summary: Value,
    pub wall_time: f64,
    pub validity_ceiling: f64,
    pub diagnostics: Vec<Diagnostic>,
    pub version: String,
}

fn named<T>(op: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Numerical { index, reason } => Error::Numerical {
            index,
            reason: format!("{op}: {reason}"),
        },
        Error::DegenerateFit(m) => Error::DegenerateFit(format!("{op}: {m}")),
        other => other,
    })
}

struct Outputs<'a> {
    dir: &'a Path,
    artifacts: Vec<PathBuf>,
    seeds: BTreeMap<String, Vec<u64>>,
}

impl Outputs<'_> {
    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.dir.join(name);
        write_text(&p, text)?;
        self.artifacts.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.dir.join(name);
        write_json(&p, value)?;
        self.artifacts.push(p);
        Ok(())
    }

    fn curve(&mut self, curve: &IdsCurve, stem: &str) -> Result<()> {
        let paths = curve.write(self.dir, stem)?;
        self.artifacts.extend(paths);
        self.seeds.insert(
            format!("{stem}.realizations"),
            (0..curve.realizations).map(|r| realization_seed(curve.seed, r)).collect(),
        );
        Ok(())
    }
}

/// Runs the experiment on the current rayon pool.
pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    let diagnostics = validate(config);
    let errors: Vec<String> = diagnostics
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.to_string())
        .collect();
    if !errors.is_empty() {
        return Err(Error::Config(errors.join("; ")));
    }
    let config = config.resolved();
    let dir = config.output_dir.clone().expect("validated");
    std::fs::create_dir_all(&dir)?;
    let start = Instant::now();
    let mut out = Outputs {
        dir: &dir,
        artifacts: Vec::new(),
        seeds: BTreeMap::new(),
    };
    use ExperimentKind as K;
    let summary = match config.experiment {
        K::Ids => run_ids(&config, &mut out)?,
        K::Mixture => run_mixture(&config, &mut out)?,
        K::Bands => run_bands(&config, &mut out)?,
        K::EssentialSpectrum => run_essential(&config, &mut out)?,
        K::Bracketing => run_bracketing(&config, &mut out)?,
        K::Lyapunov => run_lyapunov(&config, &mut out)?,
        K::Decay => run_decay(&config, &mut out)?,
        K::WindowIds => run_window(&config, &mut out)?,
    };
    let manifest = dir.join("manifest.json");
    let mut artifacts = out.artifacts;
    artifacts.push(manifest.clone());
    let result = RunResult {
        validity_ceiling: config.validity_ceiling(),
        config_echo: config,
        derived_seeds: out.seeds,
        artifacts,
        summary,
        wall_time: start.elapsed().as_secs_f64(),
        diagnostics,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&manifest, &result)?;
    Ok(result)
}

/// [`run`] on a dedicated pool of `threads` workers (all cores when `None`).
pub fn run_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunResult> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::config("thread count must be positive"));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run(config))
}

fn seed(c: &ExperimentConfig) -> u64 {
    c.seed.expect("validated")
}

fn energies(c: &ExperimentConfig) -> Vec<f64> {
    c.energies().expect("validated")
}

fn plateau(c: &ExperimentConfig) -> Value {
    let eps = c.numeric.epsilon.unwrap_or(DEFAULT_EPSILON);
    json!({ "epsilon": eps, "M": c.model.background.plateau_radius(eps) })
}

fn run_ids(c: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    let n = &c.numeric;
    let curve = named(
        "ids_estimate",
        ids_estimate(
            &c.model,
            n.half_length.unwrap(),
            n.realizations.unwrap(),
            &energies(c),
            n.bc.unwrap(),
            c.h(),
            seed(c),
        ),
    )?;
    out.curve(&curve, "ids")?;
    Ok(json!({
        "points": curve.energies.len(),
        "jump_energies": curve.jump_energies(),
        "monotone": curve.values.windows(2).all(|w| w[0] <= w[1]),
        "plateau_radius": plateau(c),
    }))
}

fn run_mixture(c: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    let n = &c.numeric;
    let (l, r, bc, h) = (n.half_length.unwrap(), n.realizations.unwrap(), n.bc.unwrap(), c.h());
    let es = energies(c);
    let (a_minus, a_plus) = c.model.background.limits();
    let full = named("ids_estimate", ids_estimate(&c.model, l, r, &es, bc, h, seed(c)))?;

    let mut shifted: Vec<f64> = es.iter().flat_map(|e| [e - a_minus, e - a_plus]).collect();
    shifted.sort_by(f64::total_cmp);
    shifted.dedup();
    let n1_seed = derive(seed(c), N1_SEED_LABEL);
    let n1 = named(
        "ids_estimate",
        ids_estimate(&c.model.without_background(), l, r, &shifted, bc, h, n1_seed),
    )?;
    out.curve(&full, "ids")?;
    out.curve(&n1, "ids_reference")?;

    let n1_err = IdsCurve::tabulated(n1.energies.clone(), n1.stderr.clone())?;
    let mut rows = Vec::with_capacity(es.len());
    let mut max_dev = 0.0_f64;
    for (i, &e) in es.iter().enumerate() {
        let mix = mixture_ids(&n1, a_minus, a_plus, e)?;
        let mix_err = mixture_ids(&n1_err, a_minus, a_plus, e)?;
        let dev = (full.values[i] - mix).abs();
        max_dev = max_dev.max(dev);
        rows.push([
            fmt_f64(e),
            fmt_f64(full.values[i]),
            fmt_f64(full.stderr[i]),
            fmt_f64(mix),
            fmt_f64(mix_err),
            fmt_f64(dev),
        ]);
    }
    out.text(
        "mixture.csv",
        &csv_string("E,ids,ids_stderr,mixture,mixture_stderr,deviation", rows),
    )?;
    let tol = n.tolerance.unwrap();
    Ok(json!({
        "a_minus": a_minus,
        "a_plus": a_plus,
        "max_deviation": max_dev,
        "threshold": tol,
        "pass": max_dev <= tol,
        "plateau_radius": plateau(c),
    }))
}

fn spectrum_window(c: &ExperimentConfig) -> SpectrumWindow {
    let n = &c.numeric;
    let w = n.window.unwrap();
    SpectrumWindow {
        e_min: w.e_min,
        e_max: w.e_max,
        scan_points: n.scan_points.unwrap(),
        h: c.h(),
        support_quantiles: n.support_quantiles.unwrap(),
    }
}

fn run_bands(c: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    let window = spectrum_window(c);
    let ell_max = c.numeric.ell_max.unwrap();
    let bare = c.model.without_background();
    let pieces = pattern_bands(&bare, ell_max, &window)?;
    let union = union_of(&bare, ell_max, &window, &pieces);
    let patterns: Vec<Value> = pieces
        .iter()
        .map(|(p, b)| json!({ "pattern": p, "bands": b }))
        .collect();
    out.json("bands.json", &json!({ "union": union, "patterns": patterns }))?;
    Ok(json!({
        "intervals": union.bands.intervals.len(),
        "measure": union.bands.measure(),
        "patterns": union.patterns,
        "support_discretized": union.support_discretized,
    }))
}

fn run_essential(c: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    let n = &c.numeric;
    let window = spectrum_window(c);
    let predicted = essential_spectrum_model(&c.model, n.ell_max.unwrap(), &window)?;
    let opts = BoxComparison {
        half_length: n.half_length.unwrap(),
        seed: seed(c),
        bulk_margin: n.bulk_margin.unwrap(),
        tolerance: n.tolerance.unwrap(),
        h: c.h(),
    };
    let report = named("compare_with_box", compare_with_box(&predicted.bands, &c.model, &opts))?;
    out.json("essential_spectrum.json", &predicted)?;
    out.json("spectrum_report.json", &report)?;
    let rows = report.empirical_eigenvalues.iter().map(|&e| {
        let d = report.predicted.distance(e);
        [fmt_f64(e), fmt_f64(d), (d <= report.tolerance).to_string()]
    });
    out.text("eigenvalues.csv", &csv_string("E,distance,covered", rows))?;
    out.seeds.insert("box".to_string(), vec![seed(c)]);
    let threshold = n.coverage_threshold.unwrap();
    Ok(json!({
        "coverage_fraction": report.coverage_fraction,
        "threshold": threshold,
        "pass": report.coverage_fraction >= threshold,
        "bulk_eigenvalues": report.empirical_eigenvalues.len(),
        "lowest_bulk_eigenvalue": report.empirical_eigenvalues.first(),
        "uncovered": report.witnesses.len(),
        "boundary_discarded": report.boundary_discarded,
        "predicted_ceiling": report.predicted.e_ceiling,
    }))
}

fn run_bracketing(c: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    let n = &c.numeric;
    let w = n.window.unwrap();
    let opts = BracketingStudy {
        tuples: n.tuples.unwrap(),
        scale: n.half_length.unwrap(),
        e_min: w.e_min,
        e_max: w.e_max,
        h: c.h(),
        seed: seed(c),
    };
    let records = named("bracket_check", bracketing_study(&c.model, &opts))?;
    out.text("bracketing.csv", &bracketing_csv(&records))?;
    out.seeds.insert(
        "tuples".to_string(),
        records.iter().map(|r| r.realization_seed).collect(),
    );
    let violations = records.iter().filter(|r| !r.triple.holds()).count();
    let rank_violations = records.iter().filter(|r| !r.rank_bound_holds()).count();
    let mut summary = json!({
        "tuples": records.len(),
        "holds": violations == 0,
        "violations": violations,
        "rank_bound_holds": rank_violations == 0,
        "rank_bound_violations": rank_violations,
        "energy_redraws": records.iter().map(|r| r.redraws).sum::<usize>(),
    });
    if records.len() <= 10 {
        summary["triples"] = json!(records
            .iter()
            .map(|r| [r.triple.left_sum, r.triple.middle, r.triple.right_sum])
            .collect::<Vec<_>>());
    }
    Ok(summary)
}

fn run_lyapunov(c: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    let n = &c.numeric;
    let opts = LyapunovOptions {
        cadence: n.cadence.unwrap(),
        ..LyapunovOptions::new(n.steps.unwrap(), c.h())
    };
    let es = energies(c);
    let estimates = named(
        "lyapunov",
        es.par_iter()
            .map(|&e| lyapunov_with(&c.model, e, seed(c), &opts))
            .collect::<Result<Vec<_>>>(),
    )?;
    out.text("lyapunov.csv", &lyapunov_csv(&estimates))?;
    out.seeds.insert("realization".to_string(), vec![seed(c)]);
    let positive: Vec<bool> = estimates.iter().map(|g| g.gamma - 3.0 * g.stderr > 0.0).collect();
    Ok(json!({
        "label": evidence_label(&c.model),
        "note": "Lyapunov exponents are finite-size proxies for localization, not a proof of point spectrum",
        "positive_beyond_3_stderr": positive,
    }))
}

fn run_decay(c: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    let l = c.numeric.half_length.unwrap();
    let fits = named(
        "decay_fit",
        energies(c)
            .par_iter()
            .map(|&e| decay_fit(&c.model, l, e, seed(c), c.h()))
            .collect::<Result<Vec<_>>>(),
    )?;
    out.text("decay.csv", &decay_csv(&fits))?;
    out.seeds.insert("realization".to_string(), vec![seed(c)]);
    Ok(json!({
        "label": evidence_label(&c.model),
        "note": "eigenfunction decay on a finite box is a proxy for localization, not a proof of point spectrum",
        "rates": fits.iter().map(|f| f.rate).collect::<Vec<_>>(),
    }))
}

fn run_window(c: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    let n = &c.numeric;
    let (m, l, r, bc, h) = (
        n.window_start.unwrap(),
        n.half_length.unwrap(),
        n.realizations.unwrap(),
        n.bc.unwrap(),
        c.h(),
    );
    let es = energies(c);
    let window = named(
        "window_estimate",
        window_estimate(&c.model, m, l, bc.left, bc.right, r, &es, h, seed(c)),
    )?;
    let reference = named(
        "ids_estimate",
        ids_estimate(
            &c.model,
            (l - m) / 2.0,
            r,
            &es,
            bc,
            h,
            derive(seed(c), REFERENCE_SEED_LABEL),
        ),
    )?;
    out.curve(&window, "window_ids")?;
    out.curve(&reference, "ids_reference")?;
    let mut worst = 0.0_f64;
    let mut agree = true;
    for i in 0..es.len() {
        let diff = (window.values[i] - reference.values[i]).abs();
        let s = window.stderr[i] + reference.stderr[i];
        agree &= diff <= 3.0 * s;
        worst = worst.max(if s > 0.0 { diff / s } else if diff > 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok(json!({
        "reference_L": (l - m) / 2.0,
        "agree_within_3_stderr": agree,
        "pass": agree,
        "max_deviation_in_stderr_units": if worst.is_finite() { json!(worst) } else { json!("inf") },
        "plateau_radius": plateau(c),
    }))
}

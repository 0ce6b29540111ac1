//! Localization proxies: Lyapunov exponents of transfer-matrix products and
//! exponential decay fits of box eigenfunctions.
//!
//! Neither quantity proves pure point spectrum; both are finite-size
//! evidence and are labelled as such in every artifact.

use serde::{Deserialize, Serialize};

use crate::discretize::{assemble, BoundaryPair, Grid};
use crate::eigencount::eigenpair_nearest;
use crate::output::{csv_string, fmt_f64};
use crate::potentials::{sample_couplings, BackgroundProfile, CouplingSequence, PotentialModel, SingleSite};
use crate::{Error, Result};

pub const MIN_STEPS: usize = 10_000;
pub const DEFAULT_STEPS: usize = 1_000_000;
pub const DEFAULT_CADENCE: usize = 32;
pub const DEFAULT_BLOCKS: usize = 100;
pub const MIN_BLOCKS: usize = 30;
pub const MIN_DECAY_HALF_LENGTH: f64 = 100.0;
/// Fewest nodes a decay fit may use.
pub const MIN_FIT_POINTS: usize = 10;

pub const EVIDENCE_LABEL: &str = "localization evidence";
pub const EXPLORATORY_LABEL: &str = "exploratory";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    #[serde(rename = "E")]
    pub energy: f64,
    pub gamma: f64,
    pub stderr: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub eigenvalue: f64,
    pub center: f64,
    pub rate: f64,
    pub r_squared: f64,
}

/// Largest singular value of a 2x2 matrix `[[a, b], [c, d]]`.
fn spectral_norm(m: [f64; 4]) -> f64 {
    let [a, b, c, d] = m;
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    ((s + disc) / 2.0).sqrt()
}

/// Options of [`lyapunov_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovOptions {
    pub steps: usize,
    pub h: f64,
    pub cadence: usize,
    pub blocks: usize,
}

impl LyapunovOptions {
    pub fn new(steps: usize, h: f64) -> Self {
        Self {
            steps,
            h,
            cadence: DEFAULT_CADENCE,
            blocks: DEFAULT_BLOCKS,
        }
    }
}

/// Growth rate per unit length of `T_n ⋯ T_1` with
/// `T_i = [[2 + h²(V(x_i) - E), -1], [1, 0]]`, `x_i = i·h`, along the
/// realization drawn with `seed`.
pub fn lyapunov(model: &PotentialModel, e: f64, steps: usize, seed: u64, h: f64) -> Result<LyapunovEstimate> {
    lyapunov_with(model, e, seed, &LyapunovOptions::new(steps, h))
}

pub fn lyapunov_with(model: &PotentialModel, e: f64, seed: u64, opts: &LyapunovOptions) -> Result<LyapunovEstimate> {
    model.validate()?;
    let LyapunovOptions { steps, h, cadence, blocks } = *opts;
    if steps < MIN_STEPS {
        return Err(Error::config(format!("Lyapunov estimate needs at least {MIN_STEPS} steps, got {steps}")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::config(format!("step must be positive, got {h}")));
    }
    if cadence == 0 {
        return Err(Error::config("renormalization cadence must be positive"));
    }
    if blocks < MIN_BLOCKS || steps / blocks == 0 {
        return Err(Error::config(format!("need at least {MIN_BLOCKS} nonempty blocks, got {blocks}")));
    }
    if !e.is_finite() {
        return Err(Error::config("energy must be finite"));
    }
    let x_end = steps as f64 * h;
    let (k_min, k_max) = model.coupling_range(0.0, x_end);
    let q = sample_couplings(&model.coupling_dist, k_min, k_max, seed)?;

    let h2 = h * h;
    let block_len = steps / blocks;
    let mut p = [1.0, 0.0, 0.0, 1.0];
    let mut log_scale = 0.0;
    let mut boundary_logs = Vec::with_capacity(blocks + 1);
    boundary_logs.push(0.0);
    let mut boundary_steps = vec![0usize];
    for i in 1..=steps {
        let t = 2.0 + h2 * (model.eval(&q, i as f64 * h)? - e);
        // [[t, -1], [1, 0]] · P
        let [a, b, c, d] = p;
        p = [t * a - c, t * b - d, a, b];
        if i % cadence == 0 {
            let f = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            p.iter_mut().for_each(|v| *v /= f);
            log_scale += f.ln();
        }
        let at_boundary = if boundary_steps.len() < blocks { i % block_len == 0 } else { i == steps };
        if at_boundary {
            boundary_logs.push(log_scale + spectral_norm(p).ln());
            boundary_steps.push(i);
        }
    }
    let total = *boundary_logs.last().unwrap();
    let gamma = (total / x_end).max(0.0);
    let rates: Vec<f64> = (1..boundary_logs.len())
        .map(|b| {
            (boundary_logs[b] - boundary_logs[b - 1]) / ((boundary_steps[b] - boundary_steps[b - 1]) as f64 * h)
        })
        .collect();
    let nb = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / nb;
    let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (nb - 1.0);
    if !gamma.is_finite() || !var.is_finite() {
        return Err(Error::Numerical {
            index: 0,
            reason: format!("transfer-matrix product not finite at E = {e}"),
        });
    }
    Ok(LyapunovEstimate {
        energy: e,
        gamma,
        stderr: (var / nb).sqrt(),
        steps,
    })
}

/// Decay fit of the eigenfunction nearest `e_target` on the Dirichlet box
/// `(-L, L)` of the realization drawn with `seed`.
pub fn decay_fit(model: &PotentialModel, half_length: f64, e_target: f64, seed: u64, h: f64) -> Result<DecayFit> {
    model.validate()?;
    let (k_min, k_max) = model.coupling_range(-half_length, half_length);
    let q = sample_couplings(&model.coupling_dist, k_min, k_max, seed)?;
    decay_fit_with_couplings(model, &q, half_length, e_target, h)
}

/// [`decay_fit`] for given couplings.
///
/// The center is the node of largest `|ψ|`. `log|ψ|` is fitted linearly
/// against `|x - center|` over the nodes at distance `[L/4, 3L/4]` whose
/// amplitude is nonzero; the rate is the magnitude of the slope.
pub fn decay_fit_with_couplings(
    model: &PotentialModel,
    couplings: &CouplingSequence,
    half_length: f64,
    e_target: f64,
    h: f64,
) -> Result<DecayFit> {
    if !(half_length >= MIN_DECAY_HALF_LENGTH) {
        return Err(Error::config(format!(
            "decay fit needs L >= {MIN_DECAY_HALF_LENGTH}, got {half_length}"
        )));
    }
    let grid = Grid::with_spacing(-half_length, half_length, h)?;
    let tri = assemble(model, couplings, &grid, BoundaryPair::DIRICHLET)?;
    let (_, pair) = eigenpair_nearest(&tri, e_target)?;
    let psi = &pair.vector;
    let (imax, _) = psi
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    let center = grid.node(imax);

    let (lo, hi) = (half_length / 4.0, 3.0 * half_length / 4.0);
    let points: Vec<(f64, f64)> = grid
        .nodes()
        .zip(psi)
        .filter_map(|(x, v)| {
            let d = (x - center).abs();
            let a = v.abs();
            (d >= lo && d <= hi && a > 0.0 && a.ln().is_finite()).then(|| (d, a.ln()))
        })
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateFit(format!(
            "eigenvector numerically zero on the fit region (E = {}, {} usable nodes)",
            pair.value,
            points.len()
        )));
    }
    let (slope, r_squared) = linear_fit(&points);
    Ok(DecayFit {
        eigenvalue: pair.value,
        center,
        rate: slope.abs(),
        r_squared,
    })
}

/// Least-squares slope and coefficient of determination.
fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (slope, r2)
}

/// Reasons why the model falls outside the hypotheses of the localization
/// theorem; empty when they hold.
pub fn hypothesis_violations(model: &PotentialModel) -> Vec<String> {
    let mut out = Vec::new();
    if !matches!(model.background, BackgroundProfile::Zero | BackgroundProfile::Tanh { .. }) {
        out.push("background U is not continuous (use zero or tanh)".to_string());
    }
    if model.periodic.samples.iter().any(|v| !v.is_finite()) {
        out.push("periodic potential is not bounded".to_string());
    }
    if !matches!(model.single_site, SingleSite::Box { .. } | SingleSite::SubBox { .. })
        || !model.single_site.has_sandwich_bounds()
    {
        out.push("single-site profile is not a box or sub-box of positive height".to_string());
    }
    out
}

/// `"localization evidence"` when the hypotheses hold, `"exploratory"`
/// otherwise.
pub fn evidence_label(model: &PotentialModel) -> &'static str {
    if hypothesis_violations(model).is_empty() {
        EVIDENCE_LABEL
    } else {
        EXPLORATORY_LABEL
    }
}

pub fn lyapunov_csv(rows: &[LyapunovEstimate]) -> String {
    csv_string(
        "E,gamma,stderr,steps",
        rows.iter()
            .map(|r| [fmt_f64(r.energy), fmt_f64(r.gamma), fmt_f64(r.stderr), r.steps.to_string()]),
    )
}

pub fn decay_csv(rows: &[DecayFit]) -> String {
    csv_string(
        "eigenvalue,center,rate,r_squared",
        rows.iter()
            .map(|r| [fmt_f64(r.eigenvalue), fmt_f64(r.center), fmt_f64(r.rate), fmt_f64(r.r_squared)]),
    )
}

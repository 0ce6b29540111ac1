//! Essential-spectrum predictions as set algebra on [`BandSet`]s, and their
//! comparison with eigenvalues of large random boxes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{band_spectrum, scan_resolution, BandSet, PeriodicCell, DEFAULT_SCAN_POINTS};
use crate::discretize::{assemble, BoundaryPair, Grid, DEFAULT_H};
use crate::eigencount::{count_below, map_eigenpairs};
use crate::potentials::{
    admissible_patterns, sample_couplings, CouplingSequence, PotentialModel, DEFAULT_SUPPORT_QUANTILES,
};
use crate::{Error, Result};

/// Default largest pattern period in admissible unions.
pub const DEFAULT_ELL_MAX: usize = 3;

/// Fraction of eigenvector mass near the walls above which an eigenvalue is
/// treated as a boundary state.
pub const EDGE_MASS_LIMIT: f64 = 0.1;

/// Energy window and resolution of a band computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumWindow {
    pub e_min: f64,
    pub e_max: f64,
    pub scan_points: usize,
    pub h: f64,
    /// Points standing in for a continuous coupling support.
    pub support_quantiles: usize,
}

impl SpectrumWindow {
    pub fn new(e_min: f64, e_max: f64) -> Self {
        Self {
            e_min,
            e_max,
            scan_points: DEFAULT_SCAN_POINTS,
            h: DEFAULT_H,
            support_quantiles: DEFAULT_SUPPORT_QUANTILES,
        }
    }
}

/// Union of band spectra over admissible periodic potentials, with the
/// truncation parameters that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleUnion {
    pub bands: BandSet,
    pub ell_max: usize,
    pub support_points: Vec<f64>,
    /// True when the support is a discretization of a continuous law.
    pub support_discretized: bool,
    pub patterns: usize,
    pub scan_resolution: f64,
    /// Background limits `(a⁻, a⁺)` applied, if any.
    pub shifts: Option<(f64, f64)>,
}

/// `(a⁻ + bands) ∪ (a⁺ + bands)`, trusted up to `ceiling + min(a⁻, a⁺)`.
pub fn shift_union(bands: &BandSet, a_minus: f64, a_plus: f64) -> BandSet {
    bands.translate(a_minus).union(&bands.translate(a_plus))
}

/// Node samples over one period of `V_per + Σ_k ρ_{k mod ℓ} f(x - k)`
/// (background ignored).
pub fn pattern_cell(model: &PotentialModel, pattern: &[f64], h: f64) -> Result<PeriodicCell> {
    let ell = pattern.len() as i64;
    if ell == 0 {
        return Err(Error::config("empty coupling pattern"));
    }
    let r = model.single_site.reach();
    let k_min = -r - 1;
    let values = (k_min..=ell + r + 1)
        .map(|k| pattern[k.rem_euclid(ell) as usize])
        .collect();
    let couplings = CouplingSequence::new(k_min, values)?;
    let bare = model.without_background();
    PeriodicCell::from_fn(ell as f64, h, |x| bare.eval(&couplings, x))
}

/// Band spectrum of every admissible pattern of period `ℓ ≤ ell_max`, in
/// pattern enumeration order.
pub fn pattern_bands(
    model: &PotentialModel,
    ell_max: usize,
    window: &SpectrumWindow,
) -> Result<Vec<(Vec<f64>, BandSet)>> {
    model.validate()?;
    if ell_max == 0 {
        return Err(Error::config("ell_max must be at least 1"));
    }
    let support = model.coupling_dist.support_points(window.support_quantiles);
    let mut patterns = Vec::new();
    for ell in 1..=ell_max {
        patterns.extend(admissible_patterns(&support, ell)?);
    }
    patterns
        .into_par_iter()
        .map(|p| {
            let cell = pattern_cell(model, &p, window.h)?;
            let bands = band_spectrum(&cell, window.e_min, window.e_max, window.scan_points)?;
            Ok((p, bands))
        })
        .collect()
}

/// Union over all admissible patterns of period `ℓ ≤ ell_max` of the band
/// spectra of `H_per + W_pattern`. The union grows with `ell_max`.
pub fn admissible_union(model: &PotentialModel, ell_max: usize, window: &SpectrumWindow) -> Result<AdmissibleUnion> {
    let pieces = pattern_bands(model, ell_max, window)?;
    Ok(union_of(model, ell_max, window, &pieces))
}

/// Folds per-pattern bands (as returned by [`pattern_bands`]) into an
/// [`AdmissibleUnion`].
pub fn union_of(
    model: &PotentialModel,
    ell_max: usize,
    window: &SpectrumWindow,
    pieces: &[(Vec<f64>, BandSet)],
) -> AdmissibleUnion {
    let bands = pieces
        .iter()
        .fold(BandSet::empty(window.e_max), |acc, (_, b)| acc.union(b));
    AdmissibleUnion {
        bands,
        ell_max,
        support_points: model.coupling_dist.support_points(window.support_quantiles),
        support_discretized: model.coupling_dist.is_continuous(),
        patterns: pieces.len(),
        scan_resolution: scan_resolution(window.e_min, window.e_max, window.scan_points),
        shifts: None,
    }
}

/// Predicted essential spectrum of `H_per + U + V_ω`: the admissible union
/// of the model without background, shift-unioned by the background limits.
pub fn essential_spectrum_model(
    model: &PotentialModel,
    ell_max: usize,
    window: &SpectrumWindow,
) -> Result<AdmissibleUnion> {
    let (a_minus, a_plus) = model.background.limits();
    let mut union = admissible_union(&model.without_background(), ell_max, window)?;
    union.bands = shift_union(&union.bands, a_minus, a_plus);
    union.shifts = Some((a_minus, a_plus));
    Ok(union)
}

/// Bulk eigenvalues of one random Dirichlet box compared with a predicted
/// spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub predicted: BandSet,
    pub empirical_eigenvalues: Vec<f64>,
    pub coverage_fraction: f64,
    /// `(eigenvalue, distance to predicted)` for every uncovered eigenvalue.
    pub witnesses: Vec<(f64, f64)>,
    pub boundary_discarded: usize,
    pub tolerance: f64,
    pub bulk_margin: f64,
}

/// Options of [`compare_with_box`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxComparison {
    pub half_length: f64,
    pub seed: u64,
    pub bulk_margin: f64,
    pub tolerance: f64,
    pub h: f64,
}

/// Eigenvalues up to the predicted ceiling of the Dirichlet box
/// `(-L, L)` for one realization; eigenvalues whose eigenvector puts more
/// than 10% of its mass within `bulk_margin` of a wall are dropped, and the
/// rest is checked against `predicted` within `tolerance`.
pub fn compare_with_box(predicted: &BandSet, model: &PotentialModel, opts: &BoxComparison) -> Result<SpectrumReport> {
    model.validate()?;
    let l = opts.half_length;
    if !(l >= 50.0) {
        return Err(Error::config(format!("box comparison needs L >= 50, got {l}")));
    }
    let grid = Grid::with_spacing(-l, l, opts.h)?;
    let (k_min, k_max) = model.coupling_range(-l, l);
    let couplings = sample_couplings(&model.coupling_dist, k_min, k_max, opts.seed)?;
    let tri = assemble(model, &couplings, &grid, BoundaryPair::DIRICHLET)?;
    let k = count_below(&tri, predicted.e_ceiling).count;

    let margin = opts.bulk_margin;
    let edge_nodes: Vec<bool> = grid
        .nodes()
        .map(|x| x - grid.x_min() < margin || grid.x_max() - x < margin)
        .collect();
    let summaries = map_eigenpairs(&tri, 0..k, |_, p| {
        let edge_mass: f64 = p
            .vector
            .iter()
            .zip(&edge_nodes)
            .filter(|(_, e)| **e)
            .map(|(v, _)| v * v)
            .sum();
        (p.value, edge_mass)
    })?;

    let empirical: Vec<f64> = summaries
        .iter()
        .filter(|(v, m)| *m <= EDGE_MASS_LIMIT && *v <= predicted.e_ceiling)
        .map(|(v, _)| *v)
        .collect();
    let witnesses: Vec<(f64, f64)> = empirical
        .iter()
        .map(|&e| (e, predicted.distance(e)))
        .filter(|(_, d)| *d > opts.tolerance)
        .collect();
    let coverage_fraction = if empirical.is_empty() {
        1.0
    } else {
        (empirical.len() - witnesses.len()) as f64 / empirical.len() as f64
    };
    Ok(SpectrumReport {
        predicted: predicted.clone(),
        boundary_discarded: summaries.len() - empirical.len(),
        empirical_eigenvalues: empirical,
        coverage_fraction,
        witnesses,
        tolerance: opts.tolerance,
        bulk_margin: margin,
    })
}

//! Band spectra of periodic operators from the discrete Floquet
//! discriminant.
//!
//! The transfer matrices are those of the three-term recurrence
//! `u_{i+1} = (2 + h²(V_i - E)) u_i - u_{i-1}` on the same grid as
//! [`crate::discretize`], so band edges and box eigenvalues share one
//! discretization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default number of scan energies per band computation.
pub const DEFAULT_SCAN_POINTS: usize = 4000;

/// `|Δ| ≤ 2 + MEMBERSHIP_TOL` counts as inside a band; absorbs rounding at
/// closed gaps where `|Δ|` only touches 2.
const MEMBERSHIP_TOL: f64 = 1e-10;
const EDGE_RTOL: f64 = 1e-14;

/// Finite union of disjoint closed intervals below a ceiling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub e_ceiling: f64,
    pub intervals: Vec<[f64; 2]>,
}

impl BandSet {
    /// Sorts, clips to the ceiling and merges overlapping or touching
    /// intervals.
    pub fn new(intervals: impl IntoIterator<Item = [f64; 2]>, e_ceiling: f64) -> Self {
        let mut iv: Vec<[f64; 2]> = intervals
            .into_iter()
            .map(|[lo, hi]| [lo, hi.min(e_ceiling)])
            .filter(|[lo, hi]| lo <= hi)
            .collect();
        iv.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let mut merged: Vec<[f64; 2]> = Vec::with_capacity(iv.len());
        for [lo, hi] in iv {
            match merged.last_mut() {
                Some(last) if lo <= last[1] => last[1] = last[1].max(hi),
                _ => merged.push([lo, hi]),
            }
        }
        Self {
            e_ceiling,
            intervals: merged,
        }
    }

    pub fn empty(e_ceiling: f64) -> Self {
        Self {
            e_ceiling,
            intervals: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Every interval and the ceiling moved by `c`.
    pub fn translate(&self, c: f64) -> Self {
        Self {
            e_ceiling: self.e_ceiling + c,
            intervals: self.intervals.iter().map(|[lo, hi]| [lo + c, hi + c]).collect(),
        }
    }

    /// Union, trusted only up to the lower of the two ceilings.
    pub fn union(&self, other: &BandSet) -> Self {
        let ceiling = self.e_ceiling.min(other.e_ceiling);
        Self::new(self.intervals.iter().chain(&other.intervals).copied(), ceiling)
    }

    pub fn contains(&self, e: f64) -> bool {
        self.distance(e) == 0.0
    }

    /// Distance from `e` to the set (infinite for the empty set).
    pub fn distance(&self, e: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&[lo, hi]| {
                if e < lo {
                    lo - e
                } else if e > hi {
                    e - hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether every interval of `self` lies inside some interval of
    /// `other`, up to `tol` at the edges.
    pub fn is_subset_of(&self, other: &BandSet, tol: f64) -> bool {
        self.intervals.iter().all(|&[lo, hi]| {
            other
                .intervals
                .iter()
                .any(|&[olo, ohi]| olo - tol <= lo && hi <= ohi + tol)
        })
    }

    /// Total length.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|[lo, hi]| hi - lo).sum()
    }
}

/// Potential values at the nodes `0, h, …, (m-1)h` of one period `m·h`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicCell {
    values: Vec<f64>,
    h: f64,
}

impl PeriodicCell {
    /// Fails unless `period / h` is a positive integer equal to the sample
    /// count.
    pub fn new(values: Vec<f64>, h: f64, period: f64) -> Result<Self> {
        let m = Self::steps(h, period)?;
        if values.len() != m {
            return Err(Error::config(format!(
                "{} samples given for a period of {m} steps",
                values.len()
            )));
        }
        Ok(Self { values, h })
    }

    /// Samples `f` at the nodes of one period.
    pub fn from_fn(period: f64, h: f64, f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let m = Self::steps(h, period)?;
        let values = (0..m).map(|i| i as f64 * h).map(f).collect::<Result<Vec<_>>>()?;
        Ok(Self { values, h })
    }

    fn steps(h: f64, period: f64) -> Result<usize> {
        if !(h > 0.0) || !(period > 0.0) {
            return Err(Error::config(format!("period {period} and spacing {h} must be positive")));
        }
        let m = period / h;
        if (m - m.round()).abs() > 1e-6 * m.max(1.0) || m.round() < 1.0 {
            return Err(Error::config(format!("period {period} is not an integer multiple of h = {h}")));
        }
        Ok(m.round() as usize)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn period(&self) -> f64 {
        self.values.len() as f64 * self.h
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            h: self.h,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantSample {
    pub energy: f64,
    pub delta: f64,
}

/// Trace of the monodromy matrix over one period.
///
/// For the free operator `delta → 2 cos(√E · period)` as `h → 0`.
pub fn discriminant(cell: &PeriodicCell, e: f64) -> DiscriminantSample {
    let h2 = cell.h * cell.h;
    // columns of the running product [[m00, m01], [m10, m11]]
    let (mut m00, mut m01, mut m10, mut m11) = (1.0, 0.0, 0.0, 1.0);
    for v in &cell.values {
        let t = 2.0 + h2 * (v - e);
        // [[t, -1], [1, 0]] · M
        let (n00, n01) = (t * m00 - m10, t * m01 - m11);
        m10 = m00;
        m11 = m01;
        m00 = n00;
        m01 = n01;
    }
    DiscriminantSample {
        energy: e,
        delta: m00 + m11,
    }
}

fn excess(cell: &PeriodicCell, e: f64) -> f64 {
    discriminant(cell, e).delta.abs() - 2.0 - MEMBERSHIP_TOL
}

/// Bisection for a band edge between an in-band energy and an out-of-band
/// one.
fn refine_edge(cell: &PeriodicCell, mut inside: f64, mut outside: f64) -> f64 {
    loop {
        let mid = 0.5 * (inside + outside);
        if (outside - inside).abs() <= EDGE_RTOL * (1.0 + mid.abs()) || mid == inside || mid == outside {
            return inside;
        }
        if excess(cell, mid) <= 0.0 {
            inside = mid;
        } else {
            outside = mid;
        }
    }
}

/// Closure of `{E ∈ [e_min, e_max] : |Δ(E)| ≤ 2}` as a [`BandSet`] with
/// ceiling `e_max`.
///
/// Bands and gaps narrower than `(e_max - e_min)/scan_points` can be missed.
pub fn band_spectrum(cell: &PeriodicCell, e_min: f64, e_max: f64, scan_points: usize) -> Result<BandSet> {
    if !(e_min < e_max) {
        return Err(Error::config(format!("band window needs e_min < e_max, got [{e_min}, {e_max}]")));
    }
    if scan_points < 100 {
        return Err(Error::config(format!("scan_points must be at least 100, got {scan_points}")));
    }
    let step = (e_max - e_min) / (scan_points - 1) as f64;
    let energies: Vec<f64> = (0..scan_points)
        .map(|j| if j + 1 == scan_points { e_max } else { e_min + j as f64 * step })
        .collect();
    let inside: Vec<bool> = energies.par_iter().map(|&e| excess(cell, e) <= 0.0).collect();

    let mut intervals = Vec::new();
    let mut start: Option<f64> = inside[0].then_some(e_min);
    for j in 1..scan_points {
        match (inside[j - 1], inside[j]) {
            (false, true) => start = Some(refine_edge(cell, energies[j], energies[j - 1])),
            (true, false) => {
                let hi = refine_edge(cell, energies[j - 1], energies[j]);
                intervals.push([start.take().expect("band start"), hi]);
            }
            _ => {}
        }
    }
    if let Some(lo) = start {
        intervals.push([lo, e_max]);
    }
    Ok(BandSet::new(intervals, e_max))
}

/// Scan resolution `(e_max - e_min)/scan_points` below which features may be
/// missed.
pub fn scan_resolution(e_min: f64, e_max: f64, scan_points: usize) -> f64 {
    (e_max - e_min) / scan_points as f64
}

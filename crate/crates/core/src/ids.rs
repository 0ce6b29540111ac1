//! Integrated density of states: ensemble estimates on finite boxes,
//! Dirichlet-Neumann bracketing, the window estimator and the two-term
//! mixture formula for step-like backgrounds.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{assemble, validity_ceiling, Boundary, BoundaryPair, Grid};
use crate::eigencount::{count_below, count_curve};
use crate::output::{csv_string, fmt_f64, write_json, write_text};
use crate::potentials::{sample_couplings, CouplingSequence, PotentialModel};
use crate::seeding::realization_seed;
use crate::{Error, Result};

/// Smallest half-length accepted by [`ids_estimate`].
pub const MIN_HALF_LENGTH: f64 = 10.0;

/// Adjacent grid values differing by more than `JUMP_FACTOR / length`
/// mark a possible jump of the IDS.
pub const JUMP_FACTOR: f64 = 5.0;

/// Relative energy margin used to detect eigenvalues near a bracketing
/// energy.
pub const NEAR_EIGENVALUE_RTOL: f64 = 1e-6;

/// Estimated counting function per unit length on a grid of energies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    #[serde(rename = "L")]
    pub half_length: f64,
    pub realizations: usize,
    pub bc: BoundaryPair,
    pub h: f64,
    pub seed: u64,
    pub validity_ceiling: f64,
    /// Left end `M` of the window `(M, L)`; absent for the symmetric box
    /// `(-L, L)`.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<f64>,
}

/// JSON metadata written next to the CSV of an [`IdsCurve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsSidecar {
    #[serde(rename = "L")]
    pub half_length: f64,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<f64>,
    pub realizations: usize,
    pub bc: BoundaryPair,
    pub h: f64,
    pub seed: u64,
    pub validity_ceiling: f64,
    pub jump_energies: Vec<f64>,
}

impl IdsCurve {
    /// Curve given by explicit values, with zero standard errors.
    pub fn tabulated(energies: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if energies.len() != values.len() || energies.is_empty() {
            return Err(Error::config("tabulated curve needs equally many energies and values"));
        }
        check_sorted(&energies)?;
        Ok(Self {
            stderr: vec![0.0; values.len()],
            energies,
            values,
            half_length: f64::INFINITY,
            realizations: 0,
            bc: BoundaryPair::DIRICHLET,
            h: 0.0,
            seed: 0,
            validity_ceiling: f64::INFINITY,
            window_start: None,
        })
    }

    /// Length of the box the counts were divided by.
    pub fn box_length(&self) -> f64 {
        match self.window_start {
            Some(m) => self.half_length - m,
            None => 2.0 * self.half_length,
        }
    }

    /// Grid energies `E_{i+1}` where the value rises by more than
    /// `5 / length` from `E_i`.
    pub fn jump_energies(&self) -> Vec<f64> {
        let threshold = JUMP_FACTOR / self.box_length();
        self.values
            .windows(2)
            .zip(self.energies.windows(2))
            .filter(|(v, _)| v[1] - v[0] > threshold)
            .map(|(_, e)| e[1])
            .collect()
    }

    /// Piecewise-linear interpolation; `0` below the first grid energy.
    pub fn value_at(&self, e: f64) -> Result<f64> {
        let first = self.energies[0];
        let last = self.energies[self.energies.len() - 1];
        if e < first {
            return Ok(0.0);
        }
        if e > last {
            return Err(Error::Range(format!("energy {e} above the tabulated range [{first}, {last}]")));
        }
        let j = self.energies.partition_point(|&x| x <= e);
        if j == self.energies.len() {
            return Ok(self.values[j - 1]);
        }
        let (e0, e1) = (self.energies[j - 1], self.energies[j]);
        let (v0, v1) = (self.values[j - 1], self.values[j]);
        let t = (e - e0) / (e1 - e0);
        Ok(v0 + t * (v1 - v0))
    }

    pub fn to_csv(&self) -> String {
        let rows = (0..self.energies.len())
            .map(|i| [fmt_f64(self.energies[i]), fmt_f64(self.values[i]), fmt_f64(self.stderr[i])]);
        csv_string("E,value,stderr", rows)
    }

    pub fn sidecar(&self) -> IdsSidecar {
        IdsSidecar {
            half_length: self.half_length,
            window_start: self.window_start,
            realizations: self.realizations,
            bc: self.bc,
            h: self.h,
            seed: self.seed,
            validity_ceiling: self.validity_ceiling,
            jump_energies: self.jump_energies(),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir` and returns both paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<[std::path::PathBuf; 2]> {
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        write_text(&csv, &self.to_csv())?;
        write_json(&json, &self.sidecar())?;
        Ok([csv, json])
    }
}

fn check_sorted(energies: &[f64]) -> Result<()> {
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::config("energies must be finite"));
    }
    if energies.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("energies must be strictly increasing"));
    }
    Ok(())
}

fn check_energies(energies: &[f64], h: f64) -> Result<f64> {
    if energies.is_empty() {
        return Err(Error::config("no energies requested"));
    }
    check_sorted(energies)?;
    let ceiling = validity_ceiling(h);
    if let Some(&e) = energies.iter().find(|&&e| e > ceiling) {
        return Err(Error::AboveCeiling { energy: e, ceiling });
    }
    Ok(ceiling)
}

/// Counts of every realization on the box `(x_min, x_max)`, reduced in
/// realization order.
#[allow(clippy::too_many_arguments)]
fn ensemble_curve(
    model: &PotentialModel,
    x_min: f64,
    x_max: f64,
    realizations: usize,
    energies: &[f64],
    bc: BoundaryPair,
    h: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    model.validate()?;
    if realizations == 0 {
        return Err(Error::config("at least one realization is required"));
    }
    let grid = Grid::with_spacing(x_min, x_max, h)?;
    let (k_min, k_max) = model.coupling_range(x_min, x_max);
    let per_realization: Vec<Vec<usize>> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let q = sample_couplings(&model.coupling_dist, k_min, k_max, realization_seed(seed, r))?;
            let tri = assemble(model, &q, &grid, bc)?;
            Ok(count_curve(&tri, energies)?.into_iter().map(|c| c.count).collect())
        })
        .collect::<Result<_>>()?;

    let length = x_max - x_min;
    let rf = realizations as f64;
    let mut values = Vec::with_capacity(energies.len());
    let mut stderr = Vec::with_capacity(energies.len());
    for i in 0..energies.len() {
        let total: u64 = per_realization.iter().map(|c| c[i] as u64).sum();
        let mean = total as f64 / (rf * length);
        let var = if realizations > 1 {
            per_realization
                .iter()
                .map(|c| {
                    let d = c[i] as f64 / length - mean;
                    d * d
                })
                .sum::<f64>()
                / (rf - 1.0)
        } else {
            0.0
        };
        values.push(mean);
        stderr.push((var / rf).sqrt());
    }
    Ok((values, stderr))
}

/// Mean of `N(H_{-L,L}, E) / (2L)` over `realizations` independent
/// disorder realizations, with its Monte Carlo standard error.
pub fn ids_estimate(
    model: &PotentialModel,
    half_length: f64,
    realizations: usize,
    energies: &[f64],
    bc: BoundaryPair,
    h: f64,
    seed: u64,
) -> Result<IdsCurve> {
    if !(half_length >= MIN_HALF_LENGTH) {
        return Err(Error::config(format!("IDS needs L >= {MIN_HALF_LENGTH}, got {half_length}")));
    }
    let ceiling = check_energies(energies, h)?;
    let (values, stderr) =
        ensemble_curve(model, -half_length, half_length, realizations, energies, bc, h, seed)?;
    Ok(IdsCurve {
        energies: energies.to_vec(),
        values,
        stderr,
        half_length,
        realizations,
        bc,
        h,
        seed,
        validity_ceiling: ceiling,
        window_start: None,
    })
}

/// Mean of `N(H_{M,L}, E) / (L - M)` on the window `(M, L)`.
#[allow(clippy::too_many_arguments)]
pub fn window_estimate(
    model: &PotentialModel,
    m: f64,
    l: f64,
    left: Boundary,
    right: Boundary,
    realizations: usize,
    energies: &[f64],
    h: f64,
    seed: u64,
) -> Result<IdsCurve> {
    if !m.is_finite() || !l.is_finite() || !(l > m) {
        return Err(Error::config(format!("window needs M < L, got M = {m}, L = {l}")));
    }
    if l - m < MIN_HALF_LENGTH {
        return Err(Error::config(format!("window length {} below {MIN_HALF_LENGTH}", l - m)));
    }
    let ceiling = check_energies(energies, h)?;
    let bc = BoundaryPair::new(left, right);
    let (values, stderr) = ensemble_curve(model, m, l, realizations, energies, bc, h, seed)?;
    Ok(IdsCurve {
        energies: energies.to_vec(),
        values,
        stderr,
        half_length: l,
        realizations,
        bc,
        h,
        seed,
        validity_ceiling: ceiling,
        window_start: Some(m),
    })
}

/// `½ n1(E - a⁻) + ½ n1(E - a⁺)` with `n1` interpolated linearly.
pub fn mixture_ids(n1: &IdsCurve, a_minus: f64, a_plus: f64, e: f64) -> Result<f64> {
    Ok(0.5 * n1.value_at(e - a_minus)? + 0.5 * n1.value_at(e - a_plus)?)
}

/// Counts on a split box: Dirichlet sub-boxes, the full box, Neumann
/// sub-boxes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketTriple {
    pub left_sum: usize,
    pub middle: usize,
    pub right_sum: usize,
    #[serde(rename = "E")]
    pub energy: f64,
    pub near_eigenvalue: bool,
}

impl BracketTriple {
    pub fn holds(&self) -> bool {
        self.left_sum <= self.middle && self.middle <= self.right_sum
    }
}

fn aligned_grid(x_min: f64, x_max: f64, h: f64, what: &str) -> Result<Grid> {
    Grid::with_spacing(x_min, x_max, h)
        .map_err(|e| Error::config(format!("grid misalignment on {what} ({x_min}, {x_max}): {e}")))
}

/// Counts at `E` for the split `a < c < b`.
///
/// The full box `(a, b)` carries `(X, Y)`. The Dirichlet pair is
/// `(a, c)` with `(X, D)` and `(c, b)` with `(D, Y)`; the node at `c` is
/// removed, so the pair is a principal submatrix. The Neumann pair splits
/// at the cell face `c + h/2`: `(a, c + h)` with `(X, N)` and `(c, b)` with
/// `(N, Y)`, so the two blocks partition the nodes of the full box and
/// differ from it by a positive semidefinite rank-one coupling.
#[allow(clippy::too_many_arguments)]
pub fn bracket_check(
    model: &PotentialModel,
    couplings: &CouplingSequence,
    a: f64,
    c: f64,
    b: f64,
    x: Boundary,
    y: Boundary,
    e: f64,
    h: f64,
) -> Result<BracketTriple> {
    if !(a < c && c < b) {
        return Err(Error::config(format!("bracketing needs a < c < b, got ({a}, {c}, {b})")));
    }
    use Boundary::{Dirichlet as D, Neumann as N};
    let boxes = [
        (aligned_grid(a, c, h, "left box")?, BoundaryPair::new(x, D)),
        (aligned_grid(c, b, h, "right box")?, BoundaryPair::new(D, y)),
        (aligned_grid(a, b, h, "full box")?, BoundaryPair::new(x, y)),
        (aligned_grid(a, c + h, h, "left box")?, BoundaryPair::new(x, N)),
        (aligned_grid(c, b, h, "right box")?, BoundaryPair::new(N, y)),
    ];
    let delta = NEAR_EIGENVALUE_RTOL * (1.0 + e.abs());
    let mut counts = [0usize; 5];
    let mut near = false;
    for (slot, (grid, bc)) in counts.iter_mut().zip(&boxes) {
        let tri = assemble(model, couplings, grid, *bc)?;
        *slot = count_below(&tri, e).count;
        if count_below(&tri, e - delta).count != count_below(&tri, e + delta).count {
            near = true;
        }
    }
    Ok(BracketTriple {
        left_sum: counts[0] + counts[1],
        middle: counts[2],
        right_sum: counts[3] + counts[4],
        energy: e,
        near_eigenvalue: near,
    })
}

/// `(N^D, N^N)` on the box `(a, b)` at `E`.
pub fn dirichlet_neumann_counts(
    model: &PotentialModel,
    couplings: &CouplingSequence,
    a: f64,
    b: f64,
    e: f64,
    h: f64,
) -> Result<(usize, usize)> {
    let grid = aligned_grid(a, b, h, "box")?;
    let d = count_below(&assemble(model, couplings, &grid, BoundaryPair::DIRICHLET)?, e).count;
    let n = count_below(&assemble(model, couplings, &grid, BoundaryPair::NEUMANN)?, e).count;
    Ok((d, n))
}

/// One random instance of a bracketing study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketRecord {
    pub a: f64,
    pub c: f64,
    pub b: f64,
    pub x: Boundary,
    pub y: Boundary,
    pub realization_seed: u64,
    pub triple: BracketTriple,
    /// `N^D` and `N^N` on the full box `(a, b)`.
    pub dirichlet: usize,
    pub neumann: usize,
    /// Energies drawn and discarded because they sat near an eigenvalue.
    pub redraws: usize,
}

impl BracketRecord {
    pub fn rank_bound_holds(&self) -> bool {
        self.dirichlet.abs_diff(self.neumann) <= 2
    }
}

/// Options of [`bracketing_study`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketingStudy {
    pub tuples: usize,
    /// Boxes lie inside `(-scale, scale)`.
    pub scale: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub h: f64,
    pub seed: u64,
}

const MAX_REDRAWS: usize = 1000;

/// Random `(realization, a < c < b, X, Y, E)` tuples with grid-aligned
/// endpoints; energies near an eigenvalue of any of the five operators are
/// redrawn. Tuple `t` depends only on `(seed, t)`.
pub fn bracketing_study(model: &PotentialModel, opts: &BracketingStudy) -> Result<Vec<BracketRecord>> {
    use rand::Rng;
    model.validate()?;
    let BracketingStudy { tuples, scale, e_min, e_max, h, seed } = *opts;
    if !(e_min < e_max) {
        return Err(Error::config(format!("energy range needs e_min < e_max, got [{e_min}, {e_max}]")));
    }
    let ceiling = validity_ceiling(h);
    if e_max > ceiling {
        return Err(Error::AboveCeiling { energy: e_max, ceiling });
    }
    let half_cells = (scale / h).round() as i64;
    if half_cells < 10 {
        return Err(Error::config(format!("bracketing scale {scale} too small for h = {h}")));
    }
    let (k_min, k_max) = model.coupling_range(-scale - 1.0, scale + 1.0);
    (0..tuples)
        .into_par_iter()
        .map(|t| {
            let mut rng = crate::seeding::stream(seed, t as u64);
            let len = rng.gen_range(10..=2 * half_cells);
            let ia = rng.gen_range(-half_cells..=half_cells - len);
            let ic = rng.gen_range(5..=len - 5);
            let (a, c, b) = (ia as f64 * h, (ia + ic) as f64 * h, (ia + len) as f64 * h);
            let bcs = [Boundary::Dirichlet, Boundary::Neumann];
            let x = bcs[rng.gen_range(0..2)];
            let y = bcs[rng.gen_range(0..2)];
            let rseed = realization_seed(seed, t);
            let q = sample_couplings(&model.coupling_dist, k_min, k_max, rseed)?;
            for redraws in 0..MAX_REDRAWS {
                let e = rng.gen_range(e_min..e_max);
                let triple = bracket_check(model, &q, a, c, b, x, y, e, h)?;
                if triple.near_eigenvalue {
                    continue;
                }
                let (dirichlet, neumann) = dirichlet_neumann_counts(model, &q, a, b, e, h)?;
                return Ok(BracketRecord {
                    a,
                    c,
                    b,
                    x,
                    y,
                    realization_seed: rseed,
                    triple,
                    dirichlet,
                    neumann,
                    redraws,
                });
            }
            Err(Error::Numerical {
                index: t,
                reason: format!("every drawn energy of tuple {t} sat near an eigenvalue"),
            })
        })
        .collect()
}

pub fn bracketing_csv(records: &[BracketRecord]) -> String {
    csv_string(
        "a,c,b,X,Y,E,left_sum,middle,right_sum,near_eigenvalue,N_D,N_N,holds,rank_bound_holds,realization_seed",
        records.iter().map(|r| {
            [
                fmt_f64(r.a),
                fmt_f64(r.c),
                fmt_f64(r.b),
                r.x.letter().to_string(),
                r.y.letter().to_string(),
                fmt_f64(r.triple.energy),
                r.triple.left_sum.to_string(),
                r.triple.middle.to_string(),
                r.triple.right_sum.to_string(),
                r.triple.near_eigenvalue.to_string(),
                r.dirichlet.to_string(),
                r.neumann.to_string(),
                r.triple.holds().to_string(),
                r.rank_bound_holds().to_string(),
                r.realization_seed.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PeriodicComponent;
    use std::f64::consts::PI;

    const H: f64 = 0.01;

    fn free_q() -> CouplingSequence {
        CouplingSequence::constant(0.0, -5, 5)
    }

    #[test]
    fn free_ids_matches_closed_form() {
        let energies = [1.0, 4.0, PI * PI];
        let c = ids_estimate(&PotentialModel::free(), 100.0, 1, &energies, BoundaryPair::DIRICHLET, H, 0).unwrap();
        for (e, v) in energies.iter().zip(&c.values) {
            assert!((v - e.sqrt() / PI).abs() <= 0.02, "E = {e}: {v}");
        }
        assert!((c.values[2] - 1.0).abs() <= 0.02);
    }

    #[test]
    fn free_accuracy_bound_low_energies() {
        let l = 50.0;
        let energies: Vec<f64> = (1..=50).map(|j| j as f64).collect();
        let c = ids_estimate(&PotentialModel::free(), l, 1, &energies, BoundaryPair::DIRICHLET, H, 0).unwrap();
        for (e, v) in energies.iter().zip(&c.values) {
            let bound = 1.0 / (2.0 * l) + 0.01 * e * H * H;
            assert!((v - e.sqrt() / PI).abs() <= bound, "E = {e}: {v}");
        }
    }

    #[test]
    fn below_gershgorin_is_zero() {
        let model = PotentialModel::bernoulli_box(-3.0, 2.0, 0.5);
        let c = ids_estimate(&model, 10.0, 3, &[-3.5, -3.1], BoundaryPair::NEUMANN, H, 4).unwrap();
        assert_eq!(c.values, vec![0.0, 0.0]);
        assert_eq!(c.stderr, vec![0.0, 0.0]);
    }

    #[test]
    fn energy_above_ceiling_is_rejected() {
        let err = ids_estimate(&PotentialModel::free(), 10.0, 1, &[1.0, 2000.0], BoundaryPair::DIRICHLET, H, 0)
            .unwrap_err();
        assert!(matches!(err, Error::AboveCeiling { energy, ceiling } if energy == 2000.0 && (ceiling - 1000.0).abs() < 1e-9));
        assert!(err.is_validation());
        assert!(err.to_string().contains("1000"));
    }

    #[test]
    fn invalid_inputs() {
        let m = PotentialModel::free();
        assert!(ids_estimate(&m, 5.0, 1, &[1.0], BoundaryPair::DIRICHLET, H, 0).is_err());
        assert!(ids_estimate(&m, 10.0, 0, &[1.0], BoundaryPair::DIRICHLET, H, 0).is_err());
        assert!(ids_estimate(&m, 10.0, 1, &[2.0, 1.0], BoundaryPair::DIRICHLET, H, 0).is_err());
        assert!(ids_estimate(&m, 10.0, 1, &[], BoundaryPair::DIRICHLET, H, 0).is_err());
        assert!(window_estimate(&m, 5.0, 5.0, Boundary::Dirichlet, Boundary::Dirichlet, 1, &[1.0], H, 0).is_err());
    }

    #[test]
    fn dirichlet_and_neumann_estimates_close() {
        let model = PotentialModel::bernoulli_box(0.0, 1.0, 0.5);
        let d = ids_estimate(&model, 100.0, 20, &[2.0], BoundaryPair::DIRICHLET, H, 5).unwrap();
        let n = ids_estimate(&model, 100.0, 20, &[2.0], BoundaryPair::NEUMANN, H, 5).unwrap();
        assert!((d.values[0] - n.values[0]).abs() <= 2.0 / 200.0 + 1e-15);
    }

    #[test]
    fn curve_is_monotone_and_nonnegative() {
        let model = PotentialModel::bernoulli_box(0.0, 4.0, 0.3);
        let energies: Vec<f64> = (0..80).map(|j| -1.0 + 0.25 * j as f64).collect();
        let c = ids_estimate(&model, 20.0, 7, &energies, BoundaryPair::DIRICHLET, H, 9).unwrap();
        assert!(c.values.iter().all(|v| *v >= 0.0));
        assert!(c.values.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(c.values.len(), c.stderr.len());
    }

    #[test]
    fn mixture_examples() {
        let energies: Vec<f64> = (0..=1000).map(|j| j as f64 * 0.01).collect();
        let values = energies.iter().map(|e: &f64| e.sqrt() / PI).collect();
        let n1 = IdsCurve::tabulated(energies, values).unwrap();
        let expected = 0.5 * 2f64.sqrt() / PI;
        assert!((mixture_ids(&n1, 0.0, 2.0, 2.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.22508).abs() < 1e-5);
        for e in [0.3, 1.234, 7.5] {
            assert_eq!(mixture_ids(&n1, 0.0, 0.0, e).unwrap(), n1.value_at(e).unwrap());
        }
        assert_eq!(mixture_ids(&n1, 3.0, 5.0, 1.0).unwrap(), 0.0);
        assert!(matches!(mixture_ids(&n1, -5.0, 0.0, 6.0), Err(Error::Range(_))));
    }

    #[test]
    fn interpolation_is_linear() {
        let n1 = IdsCurve::tabulated(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(n1.value_at(0.5).unwrap(), 0.5);
        assert_eq!(n1.value_at(2.0).unwrap(), 1.5);
        assert_eq!(n1.value_at(3.0).unwrap(), 2.0);
        assert_eq!(n1.value_at(-1.0).unwrap(), 0.0);
    }

    #[test]
    fn free_dirichlet_bracketing() {
        let m = PotentialModel::free();
        let d = Boundary::Dirichlet;
        let t = bracket_check(&m, &free_q(), 0.0, 1.0, 2.0, d, d, 3.0, H).unwrap();
        assert_eq!((t.left_sum, t.middle, t.right_sum), (0, 1, 2));
        assert!(!t.near_eigenvalue && t.holds());
        let t = bracket_check(&m, &free_q(), 0.0, 1.0, 2.0, d, d, 15.0, H).unwrap();
        assert_eq!((t.left_sum, t.middle, t.right_sum), (2, 2, 2));
    }

    #[test]
    fn free_neumann_bracketing() {
        let n = Boundary::Neumann;
        let t = bracket_check(&PotentialModel::free(), &free_q(), 0.0, 1.0, 2.0, n, n, 0.1, H).unwrap();
        assert_eq!((t.left_sum, t.middle, t.right_sum), (0, 1, 2));
        assert!(!t.near_eigenvalue);
    }

    #[test]
    fn bracketing_flags_near_eigenvalue() {
        let n = Boundary::Neumann;
        let t = bracket_check(&PotentialModel::free(), &free_q(), 0.0, 1.0, 2.0, n, n, 0.0, H).unwrap();
        assert!(t.near_eigenvalue);
    }

    #[test]
    fn misaligned_split_is_rejected() {
        let d = Boundary::Dirichlet;
        let err = bracket_check(&PotentialModel::free(), &free_q(), 0.0, 1.005, 2.0, d, d, 3.0, 0.01).unwrap_err();
        assert!(matches!(err, Error::Config(ref s) if s.contains("misalignment")), "{err}");
    }

    #[test]
    fn random_bracketing_holds() {
        use rand::Rng;
        let model = PotentialModel {
            periodic: PeriodicComponent::new(vec![0.0, 1.0, -0.5, 0.25]).unwrap(),
            ..PotentialModel::bernoulli_box(-1.0, 3.0, 0.4)
        };
        let mut rng = crate::seeding::stream(17, 0);
        let bcs = [Boundary::Dirichlet, Boundary::Neumann];
        for t in 0..60 {
            let a = rng.gen_range(-10..0) as f64;
            let b = a + rng.gen_range(3..12) as f64;
            let c = a + 0.01 * rng.gen_range(50..((b - a) * 100.0) as i64 - 50) as f64;
            let q = sample_couplings(&model.coupling_dist, a as i64 - 1, b as i64 + 1, t).unwrap();
            let e = rng.gen_range(-1.0..40.0);
            let x = bcs[rng.gen_range(0..2)];
            let y = bcs[rng.gen_range(0..2)];
            let r = bracket_check(&model, &q, a, c, b, x, y, e, H).unwrap();
            if !r.near_eigenvalue {
                assert!(r.holds(), "{r:?} at ({a}, {c}, {b}) {x:?} {y:?}");
            }
            let (nd, nn) = dirichlet_neumann_counts(&model, &q, a, b, e, H).unwrap();
            assert!(nd.abs_diff(nn) <= 2);
        }
    }

    #[test]
    fn study_is_reproducible_and_holds() {
        let model = PotentialModel::bernoulli_box(0.0, 2.0, 0.5);
        let opts = BracketingStudy {
            tuples: 40,
            scale: 8.0,
            e_min: -1.0,
            e_max: 30.0,
            h: H,
            seed: 2,
        };
        let a = bracketing_study(&model, &opts).unwrap();
        let b = bracketing_study(&model, &opts).unwrap();
        assert_eq!(bracketing_csv(&a), bracketing_csv(&b));
        assert!(a.iter().all(|r| r.triple.holds() && r.rank_bound_holds() && !r.triple.near_eigenvalue));
        assert!(a.iter().all(|r| r.a < r.c && r.c < r.b && r.a >= -8.0 && r.b <= 8.0));
    }

    #[test]
    fn window_translation_invariance_of_free_model() {
        let energies = [0.5, 2.0, 6.0, 20.0];
        let m = PotentialModel::free();
        let d = Boundary::Dirichlet;
        let w0 = window_estimate(&m, 0.0, 100.0, d, d, 1, &energies, H, 0).unwrap();
        let w5 = window_estimate(&m, 5.0, 105.0, d, d, 1, &energies, H, 0).unwrap();
        for (a, b) in w0.values.iter().zip(&w5.values) {
            assert!((a - b).abs() <= 2.0 / 100.0);
        }
        let n = Boundary::Neumann;
        let wn = window_estimate(&m, 5.0, 105.0, n, n, 1, &energies, H, 0).unwrap();
        for (a, b) in w5.values.iter().zip(&wn.values) {
            assert!((a - b).abs() <= 2.0 / 100.0);
        }
        assert_eq!(w5.box_length(), 100.0);
        assert_eq!(w5.window_start, Some(5.0));
    }

    #[test]
    fn stationarity_under_lattice_translation() {
        let model = PotentialModel::bernoulli_box(0.0, 2.0, 0.5);
        let q = sample_couplings(&model.coupling_dist, -2, 40, 21).unwrap();
        let shifted = q.translated(1);
        let g0 = Grid::with_spacing(3.0, 33.0, H).unwrap();
        let g1 = Grid::with_spacing(4.0, 34.0, H).unwrap();
        for bc in [BoundaryPair::DIRICHLET, BoundaryPair::NEUMANN] {
            let t0 = assemble(&model, &q, &g0, bc).unwrap();
            let t1 = assemble(&model, &shifted, &g1, bc).unwrap();
            for e in [0.3, 1.0, 2.5, 7.0, 15.0] {
                assert_eq!(count_below(&t0, e).count, count_below(&t1, e).count);
            }
        }
    }

    #[test]
    fn jumps_are_flagged() {
        let mut c = IdsCurve::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 0.01, 0.5]).unwrap();
        c.half_length = 10.0;
        assert_eq!(c.jump_energies(), vec![2.0]);
    }

    #[test]
    fn csv_and_sidecar_layout() {
        let c = ids_estimate(&PotentialModel::free(), 10.0, 2, &[1.0, 2.0], BoundaryPair::DIRICHLET, H, 3).unwrap();
        let csv = c.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("E,value,stderr"));
        assert_eq!(lines.count(), 2);
        let json = serde_json::to_value(c.sidecar()).unwrap();
        for key in ["L", "realizations", "bc", "h", "seed", "validity_ceiling"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(json.get("M").is_none());
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count() {
        let model = PotentialModel::bernoulli_box(0.0, 1.0, 0.5);
        let energies = [0.5, 1.5, 3.0];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ids_estimate(&model, 15.0, 6, &energies, BoundaryPair::DIRICHLET, H, 8).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.to_csv(), four.to_csv());
    }
}

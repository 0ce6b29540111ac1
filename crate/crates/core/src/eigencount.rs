//! Eigenvalue counting and a few eigenpairs of symmetric tridiagonal
//! matrices.
//!
//! Counting uses the pivots of the `LDLᵀ` factorization of `A - E·I`
//! (Sylvester inertia): the number of negative pivots is the number of
//! eigenvalues below `E`. Eigenvalues are bracketed by bisection on that
//! count and eigenvectors come from a twisted factorization, which is one
//! step of inverse iteration started from the best coordinate vector.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::TridiagonalHamiltonian;
use crate::{Error, Result};

const PIVOT_FLOOR: f64 = 1e-300;
const MAX_NUDGES: usize = 64;
const BRACKET_RTOL: f64 = 1e-10;
const RESIDUAL_RTOL: f64 = 1e-8;
const MAX_RESTARTS: usize = 3;

/// `N(A, E) = #{j : λ_j(A) ≤ E}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenCount {
    pub count: usize,
    /// Energy at which the pivots were evaluated; differs from the request
    /// only when `perturbed` is set.
    pub energy: f64,
    /// Set when a pivot vanished and the energy was nudged upward.
    pub perturbed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// `‖(A - λ)v‖₂`.
    pub residual: f64,
}

/// Pivot recurrence on a copy of the matrix scaled by the inverse of its
/// largest off-diagonal magnitude, so that pivots stay `O(1)` even when the
/// entries are `O(1/h²)`.
struct Sturm<'a> {
    diag: &'a [f64],
    off_sq: Vec<f64>,
    scale: f64,
}

impl<'a> Sturm<'a> {
    fn new(tri: &'a TridiagonalHamiltonian) -> Self {
        let big = tri.offdiag.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
        let scale = if big > 0.0 { 1.0 / big } else { 1.0 };
        Self {
            diag: &tri.diag,
            off_sq: tri.offdiag.iter().map(|b| (b * scale) * (b * scale)).collect(),
            scale,
        }
    }

    /// Negative-pivot count, or `None` if a pivot collapsed.
    fn try_count(&self, e: f64) -> Option<usize> {
        let s = self.scale;
        let mut q = (self.diag[0] - e) * s;
        if q.abs() < PIVOT_FLOOR {
            return None;
        }
        let mut count = usize::from(q < 0.0);
        for (d, b2) in self.diag[1..].iter().zip(&self.off_sq) {
            q = (d - e) * s - b2 / q;
            if q.abs() < PIVOT_FLOOR {
                return None;
            }
            count += usize::from(q < 0.0);
        }
        Some(count)
    }

    fn count(&self, e: f64) -> EigenCount {
        let mut energy = e;
        for attempt in 0..MAX_NUDGES {
            if let Some(count) = self.try_count(energy) {
                return EigenCount {
                    count,
                    energy,
                    perturbed: attempt > 0,
                };
            }
            energy += 1e-10 * (1.0 + energy.abs());
        }
        // a pivot keeps vanishing: treat it as a tiny positive number
        let s = self.scale;
        let mut q = (self.diag[0] - energy) * s;
        let mut count = 0;
        for i in 0..self.diag.len() {
            if i > 0 {
                q = (self.diag[i] - energy) * s - self.off_sq[i - 1] / q;
            }
            if q.abs() < PIVOT_FLOOR {
                q = PIVOT_FLOOR;
            }
            count += usize::from(q < 0.0);
        }
        EigenCount {
            count,
            energy,
            perturbed: true,
        }
    }

    /// Bisection for the `j`-th eigenvalue (0-based) starting from
    /// `count(lo) ≤ j < count(hi)`. Returns the final bracket.
    fn bracket(&self, j: usize, mut lo: f64, mut hi: f64) -> (f64, f64) {
        loop {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= BRACKET_RTOL * (1.0 + mid.abs()) || mid <= lo || mid >= hi {
                return (lo, hi);
            }
            if self.count(mid).count > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
}

/// Counts eigenvalues `≤ e`. Pivot collisions nudge `e` upward by
/// `1e-10 (1 + |e|)` so that an eigenvalue sitting at `e` is included.
pub fn count_below(tri: &TridiagonalHamiltonian, e: f64) -> EigenCount {
    Sturm::new(tri).count(e)
}

/// [`count_below`] at each of an ascending list of energies.
pub fn count_curve(tri: &TridiagonalHamiltonian, energies: &[f64]) -> Result<Vec<EigenCount>> {
    if energies.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::config("energies must be sorted ascending"));
    }
    let sturm = Sturm::new(tri);
    Ok(energies.par_iter().map(|&e| sturm.count(e)).collect())
}

/// Brackets `[lo, hi]` (width `≤ 1e-10 (1 + |λ|)`) of the eigenvalues with
/// the given 0-based indices.
pub fn eigenvalue_brackets(tri: &TridiagonalHamiltonian, indices: Range<usize>) -> Vec<(f64, f64)> {
    let n = tri.dim();
    let indices = indices.start.min(n)..indices.end.min(n);
    if indices.is_empty() {
        return Vec::new();
    }
    let sturm = Sturm::new(tri);
    let (g_lo, g_hi) = tri.gershgorin();
    let pad = 1.0 + 1e-8 * (g_lo.abs() + g_hi.abs());
    let lo0 = g_lo - pad;
    let mut hi0 = g_hi + pad;
    // tighten the common upper bound when only the bottom of the spectrum
    // is requested
    let want = indices.end;
    let mut probe = lo0 + 1.0;
    while probe < hi0 {
        if sturm.count(probe).count >= want {
            hi0 = probe;
            break;
        }
        probe = lo0 + 2.0 * (probe - lo0);
    }
    indices
        .into_par_iter()
        .map(|j| sturm.bracket(j, lo0, hi0))
        .collect()
}

/// Twisted factorization of `A - λ`: returns the unnormalized vector with
/// `z[twist] = 1`, and `γ_twist`.
fn twisted_vector(tri: &TridiagonalHamiltonian, lambda: f64) -> (Vec<f64>, f64) {
    let a = &tri.diag;
    let b = &tri.offdiag;
    let n = a.len();
    if n == 1 {
        return (vec![1.0], a[0] - lambda);
    }
    let norm = tri.diag_max_abs() + 2.0 * b.iter().fold(0.0_f64, |m, x| m.max(x.abs())) + lambda.abs();
    let tiny = f64::EPSILON * norm;
    let guard = |x: f64| {
        if x.abs() < tiny {
            if x < 0.0 {
                -tiny
            } else {
                tiny
            }
        } else {
            x
        }
    };

    // top-down LDLᵀ
    let mut d = vec![0.0; n];
    let mut l = vec![0.0; n - 1];
    d[0] = guard(a[0] - lambda);
    for i in 0..n - 1 {
        l[i] = b[i] / d[i];
        d[i + 1] = guard((a[i + 1] - lambda) - l[i] * b[i]);
    }
    // bottom-up UDUᵀ
    let mut r = vec![0.0; n];
    let mut u = vec![0.0; n];
    r[n - 1] = guard(a[n - 1] - lambda);
    for i in (1..n).rev() {
        u[i] = b[i - 1] / r[i];
        r[i - 1] = guard((a[i - 1] - lambda) - u[i] * b[i - 1]);
    }

    let (twist, gamma) = (0..n)
        .map(|k| (k, d[k] + r[k] - (a[k] - lambda)))
        .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
        .expect("nonempty");

    let mut z = vec![0.0; n];
    z[twist] = 1.0;
    for i in (0..twist).rev() {
        z[i] = -l[i] * z[i + 1];
    }
    for i in twist + 1..n {
        z[i] = -u[i] * z[i - 1];
    }
    (z, gamma)
}

/// Solves a tridiagonal system with partial pivoting. Zero pivots are
/// replaced by `tiny` (inverse iteration only needs a direction).
fn solve_shifted(tri: &TridiagonalHamiltonian, sigma: f64, rhs: &mut [f64]) {
    let n = tri.dim();
    let mut d: Vec<f64> = tri.diag.iter().map(|x| x - sigma).collect();
    let mut dl = tri.offdiag.clone();
    let mut du = tri.offdiag.clone();
    let tiny = f64::EPSILON * (tri.diag_max_abs() + sigma.abs() + 1.0);
    let nz = |x: f64| if x == 0.0 { tiny } else { x };
    if n == 1 {
        rhs[0] /= nz(d[0]);
        return;
    }
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            d[i] = nz(d[i]);
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            rhs[i + 1] -= fact * rhs[i];
            dl[i] = 0.0;
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                dl[i] = du[i + 1];
                du[i + 1] = -fact * dl[i];
            } else {
                dl[i] = 0.0;
            }
            du[i] = temp;
            let t = rhs[i];
            rhs[i] = rhs[i + 1];
            rhs[i + 1] = t - fact * rhs[i + 1];
        }
    }
    rhs[n - 1] /= nz(d[n - 1]);
    rhs[n - 2] = (rhs[n - 2] - du[n - 2] * rhs[n - 1]) / nz(d[n - 2]);
    for i in (0..n.saturating_sub(2)).rev() {
        rhs[i] = (rhs[i] - du[i] * rhs[i + 1] - dl[i] * rhs[i + 2]) / nz(d[i]);
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn residual(tri: &TridiagonalHamiltonian, lambda: f64, v: &[f64]) -> f64 {
    tri.apply(v)
        .iter()
        .zip(v)
        .map(|(av, x)| (av - lambda * x).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn residual_bound(tri: &TridiagonalHamiltonian) -> f64 {
    let h = tri.h();
    RESIDUAL_RTOL * (tri.diag_max_abs() + 2.0 / (h * h))
}

/// Eigenvector for a bracketed eigenvalue.
fn eigenpair_from_bracket(tri: &TridiagonalHamiltonian, index: usize, (lo, hi): (f64, f64)) -> Result<EigenPair> {
    let value = 0.5 * (lo + hi);
    let bound = residual_bound(tri);

    let (mut z, gamma) = twisted_vector(tri, value);
    let zz: f64 = z.iter().map(|x| x * x).sum();
    // Rayleigh-quotient correction, kept only if it stays in the bracket
    let refined = value + gamma / zz;
    if refined.is_finite() && refined >= lo && refined <= hi && refined != value {
        z = twisted_vector(tri, refined).0;
    }
    if normalize(&mut z) {
        let res = residual(tri, value, &z);
        if res <= bound {
            return Ok(EigenPair {
                value,
                vector: z,
                residual: res,
            });
        }
    }

    // fallback: plain inverse iteration with deterministic restarts
    let n = tri.dim();
    for restart in 0..MAX_RESTARTS {
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let t = (i as f64 + 1.0) * (0.618_033_988_749_895 + restart as f64 * 0.1);
                0.5 + (t - t.floor())
            })
            .collect();
        let sigma = value + (restart as f64) * 1e-3 * (hi - lo);
        for _ in 0..4 {
            solve_shifted(tri, sigma, &mut v);
            if !normalize(&mut v) {
                break;
            }
        }
        if v.iter().all(|x| x.is_finite()) {
            let res = residual(tri, value, &v);
            if res <= bound {
                return Ok(EigenPair {
                    value,
                    vector: v,
                    residual: res,
                });
            }
        }
    }
    Err(Error::Numerical {
        index,
        reason: format!("inverse iteration did not reach residual {bound:e} after {MAX_RESTARTS} restarts"),
    })
}

/// The `k` smallest eigenpairs in ascending order.
pub fn eigenpairs_lowest(tri: &TridiagonalHamiltonian, k: usize) -> Result<Vec<EigenPair>> {
    if k == 0 || k > tri.dim() {
        return Err(Error::config(format!("requested {k} eigenpairs of a {}x{} matrix", tri.dim(), tri.dim())));
    }
    map_eigenpairs(tri, 0..k, |_, p| p.clone())
}

/// Computes the eigenpairs with the given indices and maps each through `f`
/// without keeping the vectors, in parallel.
pub fn map_eigenpairs<T, F>(tri: &TridiagonalHamiltonian, indices: Range<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &EigenPair) -> T + Sync,
{
    let start = indices.start;
    let brackets = eigenvalue_brackets(tri, indices);
    brackets
        .into_par_iter()
        .enumerate()
        .map(|(offset, br)| {
            let j = start + offset;
            eigenpair_from_bracket(tri, j, br).map(|p| f(j, &p))
        })
        .collect()
}

/// The eigenpair whose eigenvalue is closest to `target`, with its index.
pub fn eigenpair_nearest(tri: &TridiagonalHamiltonian, target: f64) -> Result<(usize, EigenPair)> {
    let n = tri.dim();
    let below = count_below(tri, target).count;
    let candidates = below.saturating_sub(1)..(below + 1).min(n);
    let brackets = eigenvalue_brackets(tri, candidates.clone());
    let (j, br) = candidates
        .zip(brackets)
        .min_by(|(_, a), (_, b)| {
            let da = (0.5 * (a.0 + a.1) - target).abs();
            let db = (0.5 * (b.0 + b.1) - target).abs();
            da.total_cmp(&db)
        })
        .expect("matrix has at least one eigenvalue");
    Ok((j, eigenpair_from_bracket(tri, j, br)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{BoundaryPair, Grid};
    use std::f64::consts::{PI, SQRT_2};

    fn tri(diag: Vec<f64>, off: Vec<f64>) -> TridiagonalHamiltonian {
        let n = diag.len();
        TridiagonalHamiltonian {
            diag,
            offdiag: off,
            grid: Grid::new(0.0, (n + 1) as f64, n).unwrap(),
            bc: BoundaryPair::DIRICHLET,
        }
    }

    fn three() -> TridiagonalHamiltonian {
        tri(vec![2.0, 2.0, 2.0], vec![-1.0, -1.0])
    }

    fn free_dirichlet(len: f64, n: usize) -> TridiagonalHamiltonian {
        let grid = Grid::new(0.0, len, n).unwrap();
        TridiagonalHamiltonian::from_potential(&vec![0.0; n], grid, BoundaryPair::DIRICHLET).unwrap()
    }

    /// Dense symmetric eigenvalues, independent of the Sturm machinery.
    fn dense_eigenvalues(t: &TridiagonalHamiltonian) -> Vec<f64> {
        let n = t.dim();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = t.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = t.offdiag[i];
                m[(i + 1, i)] = t.offdiag[i];
            }
        }
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn three_by_three_counts() {
        let t = three();
        assert_eq!(count_below(&t, 2.5).count, 2);
        assert_eq!(count_below(&t, 0.0).count, 0);
        assert_eq!(count_below(&t, 5.0).count, 3);
        let curve = count_curve(&t, &[0.0, 2.5, 5.0]).unwrap();
        assert_eq!(curve.iter().map(|c| c.count).collect::<Vec<_>>(), vec![0, 2, 3]);
    }

    #[test]
    fn pivot_collision_includes_eigenvalue() {
        let c = count_below(&three(), 2.0);
        assert!(c.perturbed);
        assert_eq!(c.count, 2);
        assert!(c.energy > 2.0 && c.energy < 2.0 + 1e-9);
    }

    #[test]
    fn above_gershgorin_counts_everything() {
        let t = free_dirichlet(3.0, 40);
        let (_, hi) = t.gershgorin();
        assert_eq!(count_below(&t, hi + 1.0).count, 40);
    }

    #[test]
    fn free_box_zero_to_pi() {
        let t = free_dirichlet(PI, 999);
        assert_eq!(count_below(&t, 5.0).count, 2);
        let dense = dense_eigenvalues(&t);
        assert_eq!(dense.iter().filter(|&&l| l <= 5.0).count(), 2);
    }

    #[test]
    fn duplicate_energies_equal_counts() {
        let t = free_dirichlet(10.0, 300);
        let c = count_curve(&t, &[3.3, 3.3]).unwrap();
        assert_eq!(c[0], c[1]);
        assert!(count_curve(&t, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn three_by_three_eigenpairs() {
        let pairs = eigenpairs_lowest(&three(), 3).unwrap();
        let expect = [2.0 - SQRT_2, 2.0, 2.0 + SQRT_2];
        for (p, e) in pairs.iter().zip(expect) {
            assert!((p.value - e).abs() < 1e-9);
            let norm: f64 = p.vector.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-10);
        }
        assert!(eigenpairs_lowest(&three(), 4).is_err());
        assert!(eigenpairs_lowest(&three(), 0).is_err());
    }

    #[test]
    fn shifted_eigenpairs() {
        let t = free_dirichlet(5.0, 200);
        let c = 3.25;
        let a = eigenpairs_lowest(&t, 2).unwrap();
        let b = eigenpairs_lowest(&t.shifted(c), 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y.value - x.value - c).abs() < 1e-9);
        }
    }

    #[test]
    fn free_unit_box_ground_state() {
        let h = 1e-3;
        let t = free_dirichlet(1.0, 999);
        let p = &eigenpairs_lowest(&t, 1).unwrap()[0];
        assert!((p.value - PI * PI).abs() < 0.01);
        // second-order dispersion: λ_h = (2/h)² sin²(πh/2) ≈ π² - h²π⁴/12
        let predicted_error = h * h * PI.powi(4) / 12.0;
        assert!(((PI * PI - p.value) - predicted_error).abs() < 1e-3 * predicted_error);
        assert!(p.residual <= 1e-8 * (t.diag_max_abs() + 2.0 / (h * h)));
    }

    #[test]
    fn nearest_eigenpair() {
        let t = three();
        let (j, p) = eigenpair_nearest(&t, 2.1).unwrap();
        assert_eq!(j, 1);
        assert!((p.value - 2.0).abs() < 1e-9);
        let (j, _) = eigenpair_nearest(&t, -10.0).unwrap();
        assert_eq!(j, 0);
        let (j, _) = eigenpair_nearest(&t, 10.0).unwrap();
        assert_eq!(j, 2);
    }

    #[test]
    fn pivoted_solver_inverts() {
        let t = tri(vec![0.0, 1.0, -2.0, 0.5], vec![3.0, -1.0, 2.0]);
        let x = vec![1.0, -2.0, 0.5, 4.0];
        let mut b = t.apply(&x);
        solve_shifted(&t, 0.0, &mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    fn random_tri(seed: u64, n: usize) -> TridiagonalHamiltonian {
        use rand::Rng;
        let mut rng = crate::seeding::stream(seed, 99);
        let diag = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let off = (0..n - 1).map(|_| rng.gen_range(-2.0..-0.1)).collect();
        tri(diag, off)
    }

    #[test]
    fn curve_matches_eigenpairs_on_random_instance() {
        let t = random_tri(3, 50);
        let pairs = eigenpairs_lowest(&t, 50).unwrap();
        let dense = dense_eigenvalues(&t);
        for (p, d) in pairs.iter().zip(&dense) {
            assert!((p.value - d).abs() < 1e-8);
        }
        let mids: Vec<f64> = pairs.windows(2).map(|w| 0.5 * (w[0].value + w[1].value)).collect();
        let counts = count_curve(&t, &mids).unwrap();
        for (k, c) in counts.iter().enumerate() {
            assert_eq!(c.count, k + 1);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn count_matches_dense_oracle(seed in any::<u64>(), n in 3usize..=200, e in -8.0f64..8.0) {
                let t = random_tri(seed, n);
                let dense = dense_eigenvalues(&t);
                prop_assume!(dense.iter().all(|l| (l - e).abs() >= 1e-8));
                let expect = dense.iter().filter(|&&l| l <= e).count();
                prop_assert_eq!(count_below(&t, e).count, expect);
            }

            #[test]
            fn count_is_monotone(seed in any::<u64>(), e1 in -8.0f64..8.0, de in 0.0f64..3.0) {
                let t = random_tri(seed, 60);
                prop_assert!(count_below(&t, e1).count <= count_below(&t, e1 + de).count);
            }

            #[test]
            fn eigenpair_invariants(seed in any::<u64>()) {
                let t = random_tri(seed, 120);
                let bound = residual_bound(&t);
                for p in eigenpairs_lowest(&t, 6).unwrap() {
                    let norm: f64 = p.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
                    prop_assert!((norm - 1.0).abs() < 1e-10);
                    prop_assert!(p.residual <= bound);
                }
            }
        }
    }
}

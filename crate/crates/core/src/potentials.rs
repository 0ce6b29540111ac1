//! Potential ingredients: background `U`, periodic `V_per`, single-site
//! profile `f` and the coupling law of the alloy sum `Σ_k q_k f(x - k)`.

use serde::{Deserialize, Serialize};

use crate::seeding;
use crate::{Error, Result};

/// Default number of support points used to stand in for a continuous
/// coupling law when forming unions over admissible potentials.
pub const DEFAULT_SUPPORT_QUANTILES: usize = 5;

/// Default truncation radius of polynomially decaying single-site profiles.
pub const DEFAULT_CUTOFF_R: i64 = 10;

const WEIGHT_TOL: f64 = 1e-12;
const NODE_SNAP: f64 = 1e-9;

/// Floor of `x`, treating values within `1e-9` of an integer as that integer.
///
/// Grid nodes that should sit on a lattice point are often off by a few ulps;
/// snapping keeps cell membership translation-invariant.
pub(crate) fn snapped_floor(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < NODE_SNAP {
        r as i64
    } else {
        x.floor() as i64
    }
}

fn snapped_ceil(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < NODE_SNAP {
        r as i64
    } else {
        x.ceil() as i64
    }
}

/// Law `P₀` of the i.i.d. couplings. Supports are bounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingDistribution {
    /// `v1` with probability `p`, `v0` otherwise.
    TwoPoint { v0: f64, v1: f64, p: f64 },
    UniformInterval { lo: f64, hi: f64 },
    FiniteSet { values: Vec<f64>, weights: Vec<f64> },
}

impl CouplingDistribution {
    pub fn bernoulli(v0: f64, v1: f64, p: f64) -> Self {
        CouplingDistribution::TwoPoint { v0, v1, p }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CouplingDistribution::TwoPoint { v0, v1, p } => {
                if !v0.is_finite() || !v1.is_finite() {
                    return Err(Error::config("two-point values must be finite"));
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::config(format!("two-point probability {p} not in [0, 1]")));
                }
            }
            CouplingDistribution::UniformInterval { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::config("uniform interval bounds must be finite"));
                }
                if lo > hi {
                    return Err(Error::config(format!("uniform interval has lo {lo} > hi {hi}")));
                }
            }
            CouplingDistribution::FiniteSet { values, weights } => {
                if values.is_empty() {
                    return Err(Error::config("finite set has no values"));
                }
                if values.len() != weights.len() {
                    return Err(Error::config(format!(
                        "finite set has {} values but {} weights",
                        values.len(),
                        weights.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("finite set values must be finite"));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::config("finite set weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::config(format!("finite set weights sum to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Maps a uniform draw `u ∈ [0, 1)` to a coupling value.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            CouplingDistribution::TwoPoint { v0, v1, p } => {
                if u < *p {
                    *v1
                } else {
                    *v0
                }
            }
            CouplingDistribution::UniformInterval { lo, hi } => lo + u * (hi - lo),
            CouplingDistribution::FiniteSet { values, weights } => {
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *v;
                    }
                }
                // u within rounding of 1: last value carrying positive weight
                values
                    .iter()
                    .zip(weights)
                    .rev()
                    .find(|(_, w)| **w > 0.0)
                    .map(|(v, _)| *v)
                    .unwrap_or(values[values.len() - 1])
            }
        }
    }

    /// Whether the law is continuous, so that [`support_points`](Self::support_points)
    /// is only a discretization of the support.
    pub fn is_continuous(&self) -> bool {
        matches!(self, CouplingDistribution::UniformInterval { lo, hi } if lo < hi)
    }

    /// Sorted, deduplicated points of the support. Continuous supports are
    /// represented by `quantiles` equispaced points including both ends.
    pub fn support_points(&self, quantiles: usize) -> Vec<f64> {
        let mut pts = match self {
            CouplingDistribution::TwoPoint { v0, v1, p } => {
                let mut v = Vec::with_capacity(2);
                if *p < 1.0 {
                    v.push(*v0);
                }
                if *p > 0.0 {
                    v.push(*v1);
                }
                v
            }
            CouplingDistribution::UniformInterval { lo, hi } => {
                if lo == hi || quantiles <= 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    let q = quantiles - 1;
                    (0..=q).map(|j| lo + (hi - lo) * j as f64 / q as f64).collect()
                }
            }
            CouplingDistribution::FiniteSet { values, weights } => values
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(v, _)| *v)
                .collect(),
        };
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Whether `v` lies in the (closed) support.
    pub fn in_support(&self, v: f64) -> bool {
        match self {
            CouplingDistribution::UniformInterval { lo, hi } => (*lo..=*hi).contains(&v),
            _ => self.support_points(1).contains(&v),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            CouplingDistribution::TwoPoint { v0, v1, .. } => v0.abs().max(v1.abs()),
            CouplingDistribution::UniformInterval { lo, hi } => lo.abs().max(hi.abs()),
            CouplingDistribution::FiniteSet { values, .. } => {
                values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }
        }
    }
}

/// Single-site profile `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SingleSite {
    /// `height · χ_[0,1)`.
    Box { height: f64 },
    /// `height · χ_[a,b)` with `0 ≤ a < b ≤ 1`.
    SubBox { a: f64, b: f64, height: f64 },
    /// `c (1 + |x|)^(-gamma)`, truncated at `|x| ≤ cutoff_r`.
    PolyDecay { c: f64, gamma: f64, cutoff_r: i64 },
}

impl SingleSite {
    pub fn validate(&self) -> Result<()> {
        match self {
            SingleSite::Box { height } => {
                if !height.is_finite() {
                    return Err(Error::config("box height must be finite"));
                }
            }
            SingleSite::SubBox { a, b, height } => {
                if !height.is_finite() {
                    return Err(Error::config("sub-box height must be finite"));
                }
                if !(0.0 <= *a && a < b && *b <= 1.0) {
                    return Err(Error::config(format!("sub-box needs 0 <= a < b <= 1, got a={a}, b={b}")));
                }
            }
            SingleSite::PolyDecay { c, gamma, cutoff_r } => {
                if !c.is_finite() {
                    return Err(Error::config("poly-decay constant must be finite"));
                }
                if !(*gamma > 1.0) || !gamma.is_finite() {
                    return Err(Error::config(format!("poly-decay needs gamma > 1, got {gamma}")));
                }
                if *cutoff_r < 1 {
                    return Err(Error::config(format!("poly-decay needs cutoff_r >= 1, got {cutoff_r}")));
                }
            }
        }
        Ok(())
    }

    /// Profile value at offset `x` from its lattice site.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            SingleSite::Box { height } => {
                if (0.0..1.0).contains(&x) {
                    *height
                } else {
                    0.0
                }
            }
            SingleSite::SubBox { a, b, height } => {
                if (*a..*b).contains(&x) {
                    *height
                } else {
                    0.0
                }
            }
            SingleSite::PolyDecay { c, gamma, cutoff_r } => {
                if x.abs() <= *cutoff_r as f64 + NODE_SNAP {
                    c * (1.0 + x.abs()).powf(-gamma)
                } else {
                    0.0
                }
            }
        }
    }

    /// Number of lattice sites beyond the cell of `x` whose profile can be
    /// nonzero at `x`.
    pub fn reach(&self) -> i64 {
        match self {
            SingleSite::PolyDecay { cutoff_r, .. } => *cutoff_r,
            _ => 0,
        }
    }

    /// Pointwise bound `C (1 + R)^(-γ)` on the discarded profile beyond the
    /// cutoff; zero for compactly supported profiles.
    pub fn tail_bound(&self) -> f64 {
        match self {
            SingleSite::PolyDecay { c, gamma, cutoff_r } => c.abs() * (1.0 + *cutoff_r as f64).powf(-gamma),
            _ => 0.0,
        }
    }

    /// Bound on the truncated part of the alloy sum when every coupling has
    /// modulus at most `max_coupling`: `2 C |q|_max (1 + R)^(1-γ) / (γ - 1)`.
    pub fn alloy_truncation_bound(&self, max_coupling: f64) -> f64 {
        match self {
            SingleSite::PolyDecay { c, gamma, cutoff_r } => {
                2.0 * c.abs() * max_coupling * (1.0 + *cutoff_r as f64).powf(1.0 - gamma) / (gamma - 1.0)
            }
            _ => 0.0,
        }
    }

    /// Whether `c χ_I ≤ f ≤ C χ_(0,1)` holds with `0 < c ≤ C`, as required
    /// for the localization gate.
    pub fn has_sandwich_bounds(&self) -> bool {
        match self {
            SingleSite::Box { height } | SingleSite::SubBox { height, .. } => *height > 0.0,
            SingleSite::PolyDecay { .. } => false,
        }
    }
}

/// Deterministic background `U` with limits `a⁻`, `a⁺` at `∓∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundProfile {
    Zero,
    /// `a_minus` for `x ≤ x0`, `a_plus` for `x > x0`.
    Step { a_minus: f64, a_plus: f64, x0: f64 },
    /// `(a⁻ + a⁺)/2 + (a⁺ - a⁻)/2 · tanh(rate · x)`.
    Tanh { a_minus: f64, a_plus: f64, rate: f64 },
}

impl BackgroundProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            BackgroundProfile::Zero => Ok(()),
            BackgroundProfile::Step { a_minus, a_plus, x0 } => {
                if a_minus.is_finite() && a_plus.is_finite() && x0.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config("step background parameters must be finite"))
                }
            }
            BackgroundProfile::Tanh { a_minus, a_plus, rate } => {
                if !(a_minus.is_finite() && a_plus.is_finite()) {
                    return Err(Error::config("tanh background limits must be finite"));
                }
                if !(*rate > 0.0) || !rate.is_finite() {
                    return Err(Error::config(format!("tanh background needs rate > 0, got {rate}")));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            BackgroundProfile::Zero => 0.0,
            BackgroundProfile::Step { a_minus, a_plus, x0 } => {
                if x <= *x0 {
                    *a_minus
                } else {
                    *a_plus
                }
            }
            BackgroundProfile::Tanh { a_minus, a_plus, rate } => {
                0.5 * (a_minus + a_plus) + 0.5 * (a_plus - a_minus) * (rate * x).tanh()
            }
        }
    }

    /// `(a⁻, a⁺)`.
    pub fn limits(&self) -> (f64, f64) {
        match self {
            BackgroundProfile::Zero => (0.0, 0.0),
            BackgroundProfile::Step { a_minus, a_plus, .. } | BackgroundProfile::Tanh { a_minus, a_plus, .. } => {
                (*a_minus, *a_plus)
            }
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, BackgroundProfile::Step { a_minus, a_plus, .. } if a_minus != a_plus)
    }

    /// Smallest `M ≥ 0` with `|U(x) - a⁻| < ε/2` for `x ≤ -M` and
    /// `|U(x) - a⁺| < ε/2` for `x ≥ M`.
    pub fn plateau_radius(&self, eps: f64) -> f64 {
        match self {
            BackgroundProfile::Zero => 0.0,
            BackgroundProfile::Step { x0, .. } => x0.abs(),
            BackgroundProfile::Tanh { a_minus, a_plus, rate } => {
                let jump = (a_plus - a_minus).abs();
                if jump < eps {
                    return 0.0;
                }
                // |U - a±| = (jump/2)(1 - tanh(rate |x|)) < eps/2
                (1.0 - eps / jump).atanh() / rate
            }
        }
    }
}

/// 1-periodic potential sampled on an equispaced grid over `[0, 1)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodicComponent {
    pub samples: Vec<f64>,
}

impl PeriodicComponent {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(samples: Vec<f64>) -> Result<Self> {
        let p = Self { samples };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() == 1 {
            return Err(Error::config("periodic component needs 0 or at least 2 samples"));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("periodic samples must be finite"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|v| *v == 0.0)
    }

    /// Nearest-sample lookup at `x mod 1`.
    pub fn value(&self, x: f64) -> f64 {
        let m = self.samples.len();
        if m == 0 {
            return 0.0;
        }
        let t = x - x.floor();
        let j = (t * m as f64).round() as usize % m;
        self.samples[j]
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

/// Realized couplings `q_k` for `k_min ≤ k ≤ k_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSequence {
    pub k_min: i64,
    pub k_max: i64,
    pub values: Vec<f64>,
    pub seed: Option<u64>,
}

impl CouplingSequence {
    pub fn new(k_min: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("coupling sequence is empty"));
        }
        Ok(Self {
            k_min,
            k_max: k_min + values.len() as i64 - 1,
            values,
            seed: None,
        })
    }

    /// Same value `c` at every site of `[k_min, k_max]`.
    pub fn constant(c: f64, k_min: i64, k_max: i64) -> Self {
        Self {
            k_min,
            k_max,
            values: vec![c; (k_max - k_min + 1).max(0) as usize],
            seed: None,
        }
    }

    pub fn get(&self, k: i64) -> Result<f64> {
        if k < self.k_min || k > self.k_max {
            return Err(Error::Coverage {
                index: k,
                k_min: self.k_min,
                k_max: self.k_max,
            });
        }
        Ok(self.values[(k - self.k_min) as usize])
    }

    /// The sequence `k ↦ q_{k - shift}`.
    pub fn translated(&self, shift: i64) -> Self {
        Self {
            k_min: self.k_min + shift,
            k_max: self.k_max + shift,
            values: self.values.clone(),
            seed: self.seed,
        }
    }
}

/// Draws i.i.d. couplings for `k_min ..= k_max`.
///
/// The value at site `k` depends only on `(dist, seed, k)`, so widening the
/// range leaves shared sites unchanged.
pub fn sample_couplings(dist: &CouplingDistribution, k_min: i64, k_max: i64, seed: u64) -> Result<CouplingSequence> {
    dist.validate()?;
    if k_min > k_max {
        return Err(Error::config(format!("k_min {k_min} > k_max {k_max}")));
    }
    let values = (k_min..=k_max)
        .map(|k| dist.quantile(seeding::site_uniform(seed, k)))
        .collect();
    Ok(CouplingSequence {
        k_min,
        k_max,
        values,
        seed: Some(seed),
    })
}

/// Full description of `U + V_per + V_ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub background: BackgroundProfile,
    #[serde(default)]
    pub periodic: PeriodicComponent,
    pub single_site: SingleSite,
    pub coupling_dist: CouplingDistribution,
}

impl PotentialModel {
    /// No background, no periodic part, zero couplings: the free operator.
    pub fn free() -> Self {
        Self {
            background: BackgroundProfile::Zero,
            periodic: PeriodicComponent::zero(),
            single_site: SingleSite::Box { height: 1.0 },
            coupling_dist: CouplingDistribution::bernoulli(0.0, 0.0, 0.0),
        }
    }

    /// Box alloy with two-point couplings `{v0, v1}` and no background.
    pub fn bernoulli_box(v0: f64, v1: f64, p: f64) -> Self {
        Self {
            background: BackgroundProfile::Zero,
            periodic: PeriodicComponent::zero(),
            single_site: SingleSite::Box { height: 1.0 },
            coupling_dist: CouplingDistribution::bernoulli(v0, v1, p),
        }
    }

    pub fn with_background(mut self, background: BackgroundProfile) -> Self {
        self.background = background;
        self
    }

    pub fn without_background(&self) -> Self {
        self.clone().with_background(BackgroundProfile::Zero)
    }

    pub fn validate(&self) -> Result<()> {
        self.background.validate()?;
        self.periodic.validate()?;
        self.single_site.validate()?;
        self.coupling_dist.validate()
    }

    /// Lattice sites whose couplings are needed to evaluate the potential on
    /// `[x_min, x_max]`.
    pub fn coupling_range(&self, x_min: f64, x_max: f64) -> (i64, i64) {
        let r = self.single_site.reach();
        (snapped_floor(x_min) - r, snapped_floor(x_max) + r)
    }

    /// `Σ_k q_k f(x - k)` over the sites that can contribute at `x`.
    pub fn alloy(&self, couplings: &CouplingSequence, x: f64) -> Result<f64> {
        match &self.single_site {
            SingleSite::Box { .. } | SingleSite::SubBox { .. } => {
                let k = snapped_floor(x);
                let local = if (x - k as f64).abs() < NODE_SNAP { 0.0 } else { x - k as f64 };
                let f = self.single_site.value(local);
                if f == 0.0 {
                    // still demand coverage so that the contract does not
                    // depend on where the profile happens to vanish
                    couplings.get(k)?;
                    return Ok(0.0);
                }
                Ok(couplings.get(k)? * f)
            }
            SingleSite::PolyDecay { cutoff_r, .. } => {
                let lo = snapped_ceil(x - *cutoff_r as f64);
                let hi = snapped_floor(x + *cutoff_r as f64);
                let mut sum = 0.0;
                for k in lo..=hi {
                    sum += couplings.get(k)? * self.single_site.value(x - k as f64);
                }
                Ok(sum)
            }
        }
    }

    /// `U(x) + V_per(x) + Σ_k q_k f(x - k)`.
    pub fn eval(&self, couplings: &CouplingSequence, x: f64) -> Result<f64> {
        Ok(self.background.value(x) + self.periodic.value(x) + self.alloy(couplings, x)?)
    }
}

/// Free-function form of [`PotentialModel::eval`].
pub fn eval_potential(model: &PotentialModel, couplings: &CouplingSequence, x: f64) -> Result<f64> {
    model.eval(couplings, x)
}

/// One representative per rotation class of length-`period_len` coupling
/// patterns over `support_points`, in lexicographic order of support indices.
///
/// Rotated patterns generate integer translates of the same periodic
/// potential and hence the same spectrum.
pub fn admissible_patterns(support_points: &[f64], period_len: usize) -> Result<Vec<Vec<f64>>> {
    if period_len == 0 {
        return Err(Error::config("pattern period must be at least 1"));
    }
    if support_points.is_empty() {
        return Err(Error::config("support has no points"));
    }
    let mut pts = support_points.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let s = pts.len();
    let total = s
        .checked_pow(period_len as u32)
        .filter(|t| *t <= 1 << 24)
        .ok_or_else(|| Error::config(format!("{s}^{period_len} patterns is too many to enumerate")))?;

    let mut out = Vec::new();
    let mut idx = vec![0usize; period_len];
    for code in 0..total {
        let mut c = code;
        for slot in idx.iter_mut().rev() {
            *slot = c % s;
            c /= s;
        }
        let is_min_rotation = (1..period_len).all(|r| {
            let rotated = idx[r..].iter().chain(&idx[..r]);
            rotated.cmp(idx.iter()) != std::cmp::Ordering::Less
        });
        if is_min_rotation {
            out.push(idx.iter().map(|&i| pts[i]).collect());
        }
    }
    Ok(out)
}

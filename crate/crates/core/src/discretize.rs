//! Second-order finite-difference Hamiltonians `-d²/dx² + W` on a box.
//!
//! Interior nodes are `x_i = x_min + i·h`, `i = 1..=n`, with
//! `h = (x_max - x_min)/(n + 1)`. A Dirichlet end drops the ghost value, a
//! Neumann end mirrors it, which turns the corner `2/h²` into `1/h²`.

use serde::{Deserialize, Serialize};

use crate::potentials::{CouplingSequence, PotentialModel};
use crate::{Error, Result};

/// Default grid spacing (100 nodes per unit cell).
pub const DEFAULT_H: f64 = 0.01;

/// Energies above `VALIDITY_FACTOR / h²` are outside the trusted range of
/// the discretization.
pub const VALIDITY_FACTOR: f64 = 0.1;

pub fn validity_ceiling(h: f64) -> f64 {
    VALIDITY_FACTOR / (h * h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::config(format!("grid needs x_min < x_max, got ({x_min}, {x_max})")));
        }
        if n < 3 {
            return Err(Error::config(format!("grid needs at least 3 interior nodes, got {n}")));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// Grid on `(x_min, x_max)` whose spacing is `h`; the length must be an
    /// integer multiple of `h`.
    pub fn with_spacing(x_min: f64, x_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::config(format!("grid spacing must be positive, got {h}")));
        }
        let cells = (x_max - x_min) / h;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-6 {
            return Err(Error::config(format!(
                "interval ({x_min}, {x_max}) is not an integer number of steps h = {h}"
            )));
        }
        if rounded < 4.0 {
            return Err(Error::config(format!("interval ({x_min}, {x_max}) too short for h = {h}")));
        }
        Self::new(x_min, x_max, rounded as usize - 1)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Number of interior nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n + 1) as f64
    }

    /// Position of interior node `i` (0-based), `x_min + (i + 1) h`.
    pub fn node(&self, i: usize) -> f64 {
        self.x_min + (i + 1) as f64 * self.h()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.node(i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[serde(alias = "D")]
    Dirichlet,
    #[serde(alias = "N")]
    Neumann,
}

impl Boundary {
    pub fn letter(self) -> char {
        match self {
            Boundary::Dirichlet => 'D',
            Boundary::Neumann => 'N',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundaryPair {
    pub left: Boundary,
    pub right: Boundary,
}

impl BoundaryPair {
    pub const DIRICHLET: BoundaryPair = BoundaryPair::new(Boundary::Dirichlet, Boundary::Dirichlet);
    pub const NEUMANN: BoundaryPair = BoundaryPair::new(Boundary::Neumann, Boundary::Neumann);

    pub const fn new(left: Boundary, right: Boundary) -> Self {
        Self { left, right }
    }

    /// Number of ends at which the two pairs disagree.
    pub fn differences(self, other: BoundaryPair) -> usize {
        usize::from(self.left != other.left) + usize::from(self.right != other.right)
    }
}

impl std::fmt::Display for BoundaryPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.left.letter(), self.right.letter())
    }
}

/// Symmetric tridiagonal matrix of `-d²/dx² + W` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalHamiltonian {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
    pub grid: Grid,
    pub bc: BoundaryPair,
}

impl TridiagonalHamiltonian {
    /// Builds the matrix from potential values at the interior nodes.
    pub fn from_potential(values: &[f64], grid: Grid, bc: BoundaryPair) -> Result<Self> {
        let n = grid.n();
        if values.len() != n {
            return Err(Error::config(format!("{} potential values for {n} nodes", values.len())));
        }
        let h = grid.h();
        let inv_h2 = 1.0 / (h * h);
        let mut diag: Vec<f64> = values.iter().map(|w| 2.0 * inv_h2 + w).collect();
        if bc.left == Boundary::Neumann {
            diag[0] = inv_h2 + values[0];
        }
        if bc.right == Boundary::Neumann {
            diag[n - 1] = inv_h2 + values[n - 1];
        }
        Ok(Self {
            diag,
            offdiag: vec![-inv_h2; n - 1],
            grid,
            bc,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    /// `self + c·I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.diag.iter_mut().for_each(|d| *d += c);
        out
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.offdiag[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.offdiag[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.offdiag[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.offdiag[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Largest magnitude of a diagonal entry.
    pub fn diag_max_abs(&self) -> f64 {
        self.diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()))
    }
}

/// Assembles `-d²/dx² + W` with `W` the model potential sampled at the
/// interior nodes.
pub fn assemble(
    model: &PotentialModel,
    couplings: &CouplingSequence,
    grid: &Grid,
    bc: BoundaryPair,
) -> Result<TridiagonalHamiltonian> {
    let values = grid
        .nodes()
        .map(|x| model.eval(couplings, x))
        .collect::<Result<Vec<_>>>()?;
    TridiagonalHamiltonian::from_potential(&values, grid.clone(), bc)
}

//! The `2N+1` orthonormal even/odd extended velocity basis.
//!
//! Odd-indexed functions `psi_{2n-1}` are odd and even-indexed `psi_{2n}`
//! are even about `v = -u`. On the incoming side `v + u > 0` both reduce to
//! `B_{n-1}(v+u) / sqrt(2)` times the model's weight factor, where `B` is
//! the orthonormal half-range family (half-range Hermite against
//! `exp(-w^2)` for BGK, shifted Legendre on `[0, 1]` for transport). The
//! basis deliberately carries a jump at `v = -u`: half-space solutions are
//! discontinuous exactly there.

use crate::orthopoly::{self, OrthoError, PrecisionMode, RecurrenceTable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("the Legendre basis requires bulk velocity u = 0, got {0}")]
    UnsupportedShift(f64),
    #[error("velocity {v} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { v: f64, lo: f64, hi: f64 },
    #[error("sample grid is not closed under reflection about -u")]
    AsymmetricGrid,
    #[error(transparent)]
    Ortho(#[from] OrthoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    BgkHalfHermite,
    NteLegendre,
}

/// The orthonormal velocity basis `psi_1 .. psi_{2N+1}`.
#[derive(Debug, Clone)]
pub struct BasisSet {
    kind: BasisKind,
    order: usize,
    u: f64,
    table: RecurrenceTable,
}

impl BasisSet {
    /// Build the basis of `2N+1` functions. For `NteLegendre` the bulk
    /// velocity must be zero.
    pub fn build(kind: BasisKind, n: usize, u: f64) -> Result<Self, BasisError> {
        assert!(n >= 1, "basis order must be at least 1");
        let table = match kind {
            BasisKind::BgkHalfHermite => {
                orthopoly::half_hermite_recurrence(0.0, n + 2, PrecisionMode::Extended)?
            }
            BasisKind::NteLegendre => {
                if u != 0.0 {
                    return Err(BasisError::UnsupportedShift(u));
                }
                orthopoly::shifted_legendre_recurrence(n + 2)
            }
        };
        Ok(BasisSet {
            kind,
            order: n,
            u,
            table,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// `N`: the basis holds `2N+1` functions.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        2 * self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bulk_velocity(&self) -> f64 {
        self.u
    }

    /// Recurrence table of the underlying half-range family.
    pub fn table(&self) -> &RecurrenceTable {
        &self.table
    }

    /// Degree of the half-range polynomial underlying `psi_k` (1-based `k`):
    /// `n-1` for both `psi_{2n-1}` and `psi_{2n}`.
    pub fn poly_degree(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.len());
        (k + 1) / 2 - 1
    }

    /// Reflection sign of `psi_k` on the outgoing side `v + u < 0`.
    pub fn parity_sign(&self, k: usize) -> f64 {
        if k % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self.kind {
            BasisKind::BgkHalfHermite => (f64::NEG_INFINITY, f64::INFINITY),
            BasisKind::NteLegendre => (-1.0, 1.0),
        }
    }

    fn check_domain(&self, v: f64) -> Result<(), BasisError> {
        let (lo, hi) = self.domain();
        if v < lo || v > hi {
            return Err(BasisError::OutOfDomain { v, lo, hi });
        }
        Ok(())
    }

    fn weight_factor(&self, w_abs: f64) -> f64 {
        match self.kind {
            BasisKind::BgkHalfHermite => (-0.5 * w_abs * w_abs).exp(),
            BasisKind::NteLegendre => 1.0,
        }
    }

    /// `[psi_1(v), ..., psi_{2N+1}(v)]`. At the symmetry point `v = -u`
    /// the odd entries are zero (jump midpoint).
    pub fn eval(&self, v: f64) -> Result<Vec<f64>, BasisError> {
        self.check_domain(v)?;
        let w = v + self.u;
        let polys = orthopoly::evaluate_polys(&self.table, w.abs(), self.order)?;
        let fac = self.weight_factor(w.abs()) / SQRT_2;
        let mut out = Vec::with_capacity(self.len());
        for k in 1..=self.len() {
            let b = polys[self.poly_degree(k)] * fac;
            let val = if k % 2 == 1 {
                if w > 0.0 {
                    b
                } else if w < 0.0 {
                    -b
                } else {
                    0.0
                }
            } else {
                b
            };
            out.push(val);
        }
        Ok(out)
    }

    /// Expansion of `(v+u) psi_{2n}` over the odd functions
    /// `psi_{2n-3}, psi_{2n-1}, psi_{2n+1}` inside the basis: the
    /// three-term recurrence coefficients
    /// `sqrt(beta_{n-1}), alpha_{n-1}, sqrt(beta_n)`. Target indices
    /// beyond `2N+1` are dropped.
    pub fn flux_expansion_of_even(&self, n: usize) -> Vec<(usize, f64)> {
        debug_assert!(n >= 1 && 2 * n <= self.len());
        let mut out = Vec::with_capacity(3);
        if n >= 2 {
            out.push((2 * n - 3, self.table.beta(n - 1).sqrt()));
        }
        out.push((2 * n - 1, self.table.alpha(n - 1)));
        if 2 * n + 1 <= self.len() {
            out.push((2 * n + 1, self.table.beta(n).sqrt()));
        }
        out
    }

    /// Mirror expansion for the odd functions: `(v+u) psi_{2n-1}` couples
    /// to `psi_{2n-2}, psi_{2n}, psi_{2n+2}` with the same coefficients.
    pub(crate) fn flux_expansion_of_odd(&self, n: usize) -> Vec<(usize, f64)> {
        debug_assert!(n >= 1 && 2 * n - 1 <= self.len());
        let k = self.len();
        let mut out = Vec::with_capacity(3);
        if n >= 2 {
            out.push((2 * (n - 1), self.table.beta(n - 1).sqrt()));
        }
        if 2 * n <= k {
            out.push((2 * n, self.table.alpha(n - 1)));
        }
        if 2 * (n + 1) <= k {
            out.push((2 * (n + 1), self.table.beta(n).sqrt()));
        }
        out
    }
}

/// Even/odd parts of a sampled function about `v = -u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityPair {
    pub even: Vec<f64>,
    pub odd: Vec<f64>,
}

/// Split samples on a reflection-closed grid into even and odd parts about
/// `-u`. The parts sum back to the input exactly: the odd part is defined
/// as the remainder `f - even`.
pub fn parity_decompose(grid: &[f64], samples: &[f64], u: f64) -> Result<ParityPair, BasisError> {
    assert_eq!(grid.len(), samples.len(), "grid/sample length mismatch");
    let scale = 1.0 + 2.0 * u.abs() + grid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut even = Vec::with_capacity(grid.len());
    let mut odd = Vec::with_capacity(grid.len());
    for (i, &v) in grid.iter().enumerate() {
        let reflected = -2.0 * u - v;
        let j = grid
            .iter()
            .position(|&g| (g - reflected).abs() <= tol)
            .ok_or(BasisError::AsymmetricGrid)?;
        let e = 0.5 * (samples[i] + samples[j]);
        even.push(e);
        odd.push(samples[i] - e);
    }
    Ok(ParityPair { even, odd })
}

//! Recovery of the undamped solution from damped solves.
//!
//! With auxiliary damped solutions `g` carrying the end-state modes as
//! incoming data, the combination `f - g + Phi` solves the original
//! (undamped) half-space equation: the coefficients `eta` are chosen so
//! that the plus/zero flux moments of `f - g` vanish at the boundary,
//! which forces every flux moment to vanish identically, and adding back
//! `Phi = sum eta X` restores the boundary data. `Phi` is also the
//! end-state at infinity.

use crate::assembly::IncomingData;
use crate::model::{ClosedFormFn, ModeLabel};
use crate::spectral::{DampedSolution, HalfSpaceSolver, SpectralError};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("recovery matrix is numerically singular (condition estimate {cond:.3e})")]
    SingularC { cond: f64 },
    #[error("auxiliary set was built for a different system (expected {expected}, got {got})")]
    SystemMismatch { expected: String, got: String },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("cache i/o: {0}")]
    Cache(String),
}

/// Damped solves with end-state-mode boundary data, plus the recovery
/// matrix built from their boundary flux moments.
pub struct AuxiliarySet {
    /// Auxiliaries for the plus family, then the zero family.
    pub solutions: Vec<DampedSolution>,
    /// Labels of the corresponding modes (plus family then zero family).
    pub labels: Vec<ModeLabel>,
    /// `C[i][j] = U_i(g_j)(0)` over the plus-then-zero moment rows.
    pub c: DMatrix<f64>,
    pub condition: f64,
}

impl AuxiliarySet {
    pub fn is_recovery_identity(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

/// Boundary flux moments of the plus family then the zero family.
fn plus_zero_moments(sol: &DampedSolution) -> DVector<f64> {
    let m = sol.moments_at(0.0);
    DVector::from_iterator(
        m.plus.len() + m.zero.len(),
        m.plus.iter().chain(m.zero.iter()).cloned(),
    )
}

/// Solve the auxiliary problems (one per end-state mode) and assemble the
/// recovery matrix. An empty end-state space yields an empty set and the
/// recovery becomes the identity.
pub fn build_auxiliary(solver: &HalfSpaceSolver) -> Result<AuxiliarySet, RecoveryError> {
    let decomp = &solver.system().damped_operator().decomposition;
    let modes = decomp.recovery_modes();
    if modes.is_empty() {
        return Ok(AuxiliarySet {
            solutions: vec![],
            labels: vec![],
            c: DMatrix::zeros(0, 0),
            condition: 1.0,
        });
    }
    let labels: Vec<ModeLabel> = modes.iter().map(|(l, _)| *l).collect();
    let solutions = modes
        .par_iter()
        .map(|(_, x)| solver.solve(IncomingData::ClosedForm(x.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let nu = solutions.len();
    let mut c = DMatrix::zeros(nu, nu);
    for (j, g) in solutions.iter().enumerate() {
        c.set_column(j, &plus_zero_moments(g));
    }
    let svd = c.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < 1e12) {
        return Err(RecoveryError::SingularC { cond: condition });
    }
    Ok(AuxiliarySet {
        solutions,
        labels,
        c,
        condition,
    })
}

/// The undamped solution `f - g + Phi` and its end-state.
pub struct RecoveredSolution {
    pub damped: DampedSolution,
    pub aux: Arc<AuxiliarySet>,
    /// Recovery coefficients, plus family then zero family.
    pub eta: DVector<f64>,
    /// Closed-form end-state modes matching `eta`.
    modes: Vec<ClosedFormFn>,
    /// The larger-order of the systems involved; coefficient vectors are
    /// padded into its basis (the families are nested).
    host: Arc<crate::assembly::GalerkinSystem>,
}

/// Solve `C eta = (U_+(f), U_0(f))|_{x=0}` and assemble the recovered
/// solution. With an empty auxiliary set the result is the damped solution
/// itself, unchanged. The auxiliaries may come from a higher-order solver
/// of the same configuration (the bases are nested), in which case all
/// coefficient-space work happens in the larger basis.
pub fn recover(
    damped: DampedSolution,
    aux: Arc<AuxiliarySet>,
) -> Result<RecoveredSolution, RecoveryError> {
    let mut host = Arc::clone(damped.system());
    if let Some(g) = aux.solutions.first() {
        if !Arc::ptr_eq(g.system(), damped.system()) {
            let (a, b) = (g.system(), damped.system());
            let (da, db) = (a.damped_operator(), b.damped_operator());
            let compatible = da.model.kind() == db.model.kind()
                && a.basis().bulk_velocity() == b.basis().bulk_velocity()
                && da.alpha == db.alpha
                && a.basis().kind() == b.basis().kind();
            if !compatible {
                return Err(RecoveryError::SystemMismatch {
                    expected: format!(
                        "{:?} u={} alpha={}",
                        db.model.kind(),
                        b.basis().bulk_velocity(),
                        db.alpha
                    ),
                    got: format!(
                        "{:?} u={} alpha={}",
                        da.model.kind(),
                        a.basis().bulk_velocity(),
                        da.alpha
                    ),
                });
            }
        }
        if g.system().basis().len() > host.basis().len() {
            host = Arc::clone(g.system());
        }
    }
    let modes: Vec<ClosedFormFn> = {
        let decomp = &damped.system().damped_operator().decomposition;
        decomp.recovery_modes().into_iter().map(|(_, x)| x).collect()
    };
    let eta = if aux.is_empty() {
        DVector::zeros(0)
    } else {
        let rhs = plus_zero_moments(&damped);
        aux.c
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(RecoveryError::SingularC {
                cond: aux.condition,
            })?
    };
    Ok(RecoveredSolution {
        damped,
        aux,
        eta,
        modes,
        host,
    })
}

impl RecoveredSolution {
    /// The system whose basis hosts the combined coefficient vectors.
    pub fn host_system(&self) -> &Arc<crate::assembly::GalerkinSystem> {
        &self.host
    }

    /// Coefficients of the basis part `f - g` at depth `x`, in the host
    /// basis (shorter expansions are zero-padded; the bases are nested).
    pub fn coefficients_at(&self, x: f64) -> DVector<f64> {
        let mut a = DVector::zeros(self.host.basis().len());
        let af = self.damped.coefficients_at(x);
        a.rows_mut(0, af.len()).copy_from(&af);
        for (i, g) in self.aux.solutions.iter().enumerate() {
            let ag = g.coefficients_at(x);
            let mut head = a.rows_mut(0, ag.len());
            head.axpy(-self.eta[i], &ag, 1.0);
        }
        a
    }

    /// End-state `Phi(v)` at infinity.
    pub fn end_state_at(&self, v: f64) -> f64 {
        self.modes
            .iter()
            .zip(self.eta.iter())
            .map(|(m, &e)| e * m.eval(v))
            .sum()
    }

    /// `(label, coefficient)` pairs describing the end-state.
    pub fn end_state_coefficients(&self) -> Vec<(ModeLabel, f64)> {
        self.aux
            .labels
            .iter()
            .zip(self.eta.iter())
            .map(|(&l, &e)| (l, e))
            .collect()
    }

    /// Point value `f_phi(x, v) = f(x, v) - g(x, v) + Phi(v)`.
    pub fn evaluate(&self, x: f64, v: f64) -> Result<f64, crate::basis::BasisError> {
        let psi = self.host.basis().eval(v)?;
        let a = self.coefficients_at(x);
        let base: f64 = psi.iter().zip(a.iter()).map(|(p, c)| p * c).sum();
        Ok(base + self.end_state_at(v))
    }

    /// Flux moment `<(v+u) X, f_phi(x, .)>` for a recovery-family mode
    /// (index into plus-then-zero). Constant in `x` for the undamped
    /// solution; `Phi` contributes `eta_i gamma_i` for plus modes and
    /// nothing for zero modes.
    pub fn recovery_flux_moment(&self, idx: usize, x: f64) -> f64 {
        let a = self.coefficients_at(x);
        let flux = self.host.flux_vectors();
        let n_plus = flux.plus.len();
        let d = &self.host.damped_operator().decomposition;
        let base = if idx < n_plus {
            flux.plus[idx].dot(&a)
        } else {
            flux.zero[idx - n_plus].dot(&a)
        };
        let phi_part: f64 = if idx < n_plus {
            self.eta[idx] * d.gammas_plus[idx]
        } else {
            0.0
        };
        base + phi_part
    }

    /// `L2` distance between the recovered boundary state `f_phi(0, .)`
    /// and a target combination of null modes, computed in closed form
    /// from the orthonormal expansions:
    /// `err^2 = |c|^2 + 2 sum_a d_a (c . <psi, X_a>) + sum_a d_a^2`
    /// with `c` the basis part of `f - g` at `x = 0` and `d` the null-mode
    /// coordinates of `Phi - target`.
    pub fn l2_error_vs_modes(&self, target: &[(ModeLabel, f64)]) -> f64 {
        let system = &self.host;
        let null_basis = system.damped_operator().model.null_basis();
        let mut d: Vec<f64> = vec![0.0; null_basis.len()];
        for (label, eta) in self.end_state_coefficients() {
            let idx = null_basis
                .iter()
                .position(|(l, _)| *l == label)
                .expect("end-state mode is a null mode");
            d[idx] += eta;
        }
        for (label, t) in target {
            let idx = null_basis
                .iter()
                .position(|(l, _)| l == label)
                .expect("target mode is a null mode");
            d[idx] -= t;
        }
        let c = self.coefficients_at(0.0);
        let mut err2 = c.dot(&c);
        for (a, &da) in d.iter().enumerate() {
            err2 += 2.0 * da * system.null_projections()[a].dot(&c);
            err2 += da * da;
        }
        err2.abs().sqrt()
    }

    /// Flux moments of `f - g` (all four families) at `x`; these vanish
    /// identically for the recovered combination.
    pub fn difference_moments_at(&self, x: f64) -> crate::spectral::UVector {
        let a = self.coefficients_at(x);
        let f = self.host.flux_vectors();
        crate::spectral::UVector {
            plus: f.plus.iter().map(|w| w.dot(&a)).collect(),
            minus: f.minus.iter().map(|w| w.dot(&a)).collect(),
            zero: f.zero.iter().map(|w| w.dot(&a)).collect(),
            linv: f.linv.iter().map(|w| w.dot(&a)).collect(),
        }
    }
}

/// Cache key for one auxiliary family; everything that influences the
/// solve must appear here.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AuxCacheKey {
    pub model: crate::model::ModelKind,
    pub u: f64,
    pub n: usize,
    pub alpha: f64,
    pub quad_points: usize,
    pub boundary_points: usize,
    pub format_version: u32,
}

pub const AUX_CACHE_FORMAT_VERSION: u32 = 1;

impl AuxCacheKey {
    pub fn digest(&self) -> String {
        let payload = serde_json::to_vec(self).expect("cache key serializes");
        let mut h = Sha256::new();
        h.update(&payload);
        hex_string(&h.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedAuxFile {
    key: AuxCacheKey,
    digest: String,
    labels: Vec<ModeLabel>,
    a0: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    condition: f64,
}

/// Directory-backed cache of auxiliary boundary coefficients. Entries are
/// JSON files named by a hash of the configuration; writes go through a
/// temporary file and an atomic rename.
pub struct AuxCache {
    dir: PathBuf,
}

impl AuxCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        AuxCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &AuxCacheKey) -> PathBuf {
        self.dir
            .join(format!("aux-v{}-{}.json", key.format_version, key.digest()))
    }

    /// Rebuild an auxiliary set from a cache entry, re-deriving the mode
    /// amplitudes from the stored boundary coefficients. Returns `None`
    /// on any mismatch or i/o failure (the caller recomputes).
    pub fn load(&self, key: &AuxCacheKey, solver: &HalfSpaceSolver) -> Option<AuxiliarySet> {
        let bytes = std::fs::read(self.path_for(key)).ok()?;
        let file: CachedAuxFile = serde_json::from_slice(&bytes).ok()?;
        if file.key != *key || file.digest != key.digest() {
            return None;
        }
        let decomp = &solver.system().damped_operator().decomposition;
        let modes = decomp.recovery_modes();
        if modes.len() != file.a0.len() {
            return None;
        }
        let mut solutions = Vec::with_capacity(modes.len());
        for ((_, x), a0) in modes.iter().zip(&file.a0) {
            let a0 = DVector::from_column_slice(a0);
            solutions.push(solver.rehydrate(IncomingData::ClosedForm(x.clone()), a0)?);
        }
        let nu = solutions.len();
        let c = DMatrix::from_fn(nu, nu, |i, j| file.c[i][j]);
        Some(AuxiliarySet {
            solutions,
            labels: file.labels,
            c,
            condition: file.condition,
        })
    }

    pub fn store(&self, key: &AuxCacheKey, aux: &AuxiliarySet) -> Result<(), RecoveryError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| RecoveryError::Cache(e.to_string()))?;
        let file = CachedAuxFile {
            key: key.clone(),
            digest: key.digest(),
            labels: aux.labels.clone(),
            a0: aux
                .solutions
                .iter()
                .map(|s| s.a0.as_slice().to_vec())
                .collect(),
            c: (0..aux.c.nrows())
                .map(|i| (0..aux.c.ncols()).map(|j| aux.c[(i, j)]).collect())
                .collect(),
            condition: aux.condition,
        };
        let bytes =
            serde_json::to_vec_pretty(&file).map_err(|e| RecoveryError::Cache(e.to_string()))?;
        let tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .map_err(|e| RecoveryError::Cache(e.to_string()))?;
        std::fs::write(tmp.path(), &bytes).map_err(|e| RecoveryError::Cache(e.to_string()))?;
        tmp.persist(self.path_for(key))
            .map_err(|e| RecoveryError::Cache(e.to_string()))?;
        Ok(())
    }
}

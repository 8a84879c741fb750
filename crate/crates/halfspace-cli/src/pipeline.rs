//! Wiring from a validated configuration to solver objects and run
//! summaries.

use crate::config::RunConfig;
use anyhow::Result;
use halfspace::assembly::{BuiltinPhi, GalerkinSystem, IncomingData};
use halfspace::basis::{BasisKind, BasisSet};
use halfspace::model::{
    null_space_decomposition, DampedOperator, KineticModel, ModeLabel, ModelKind,
};
use halfspace::recovery::{
    build_auxiliary, AuxCache, AuxCacheKey, AuxiliarySet, RecoveredSolution,
    AUX_CACHE_FORMAT_VERSION,
};
use halfspace::spectral::HalfSpaceSolver;
use serde::Serialize;
use std::sync::Arc;

pub fn build_solver(cfg: &RunConfig, n: usize) -> Result<HalfSpaceSolver, halfspace::Error> {
    let kind = cfg.model_kind().expect("validated config");
    let bkind = match kind {
        ModelKind::Bgk => BasisKind::BgkHalfHermite,
        ModelKind::Nte => BasisKind::NteLegendre,
    };
    let basis = BasisSet::build(bkind, n, cfg.run.u)?;
    let model = KineticModel::new(kind);
    let decomp = null_space_decomposition(&model, cfg.run.u, 1e-12)?;
    let op = DampedOperator::new(model, decomp, cfg.run.alpha);
    let quad = if cfg.run.quad_points == 0 {
        2 * n + 8
    } else {
        cfg.run.quad_points
    };
    let system = GalerkinSystem::build(basis, op, quad, cfg.run.boundary_points)?;
    Ok(HalfSpaceSolver::with_tolerances(
        system,
        cfg.run.tol_zero,
        cfg.run.boundary_tol,
    )?)
}

/// Build (or load from cache) the auxiliary set for `solver`.
pub fn auxiliaries(
    cfg: &RunConfig,
    solver: &HalfSpaceSolver,
    aux_n: usize,
) -> Result<Arc<AuxiliarySet>, halfspace::Error> {
    let key = AuxCacheKey {
        model: cfg.model_kind().expect("validated config"),
        u: cfg.run.u,
        n: aux_n,
        alpha: cfg.run.alpha,
        quad_points: cfg.quad_points(),
        boundary_points: cfg.run.boundary_points,
        format_version: AUX_CACHE_FORMAT_VERSION,
    };
    if let Some(dir) = cfg.cache_dir() {
        let cache = AuxCache::new(dir);
        if let Some(aux) = cache.load(&key, solver) {
            return Ok(Arc::new(aux));
        }
        let aux = build_auxiliary(solver)?;
        cache.store(&key, &aux)?;
        return Ok(Arc::new(aux));
    }
    Ok(Arc::new(build_auxiliary(solver)?))
}

/// When the incoming datum is one of the closed-form null modes and lies in
/// the end-state space, the exact solution is that mode; report the
/// recovery error against it.
pub fn known_mode_target(cfg: &RunConfig, rec: &RecoveredSolution) -> Option<ModeLabel> {
    let label = match cfg.incoming_data().ok()? {
        IncomingData::Builtin(BuiltinPhi::ChiPlus) => ModeLabel::ChiPlus,
        IncomingData::Builtin(BuiltinPhi::ChiMinus) => ModeLabel::ChiMinus,
        IncomingData::Builtin(BuiltinPhi::ChiZero) => ModeLabel::ChiZero,
        _ => return None,
    };
    rec.aux.labels.contains(&label).then_some(label)
}

#[derive(Debug, Serialize)]
pub struct EigenSummary {
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_zero: usize,
    pub tol_zero: f64,
}

#[derive(Debug, Serialize)]
pub struct ConditionSummary {
    pub boundary_system: f64,
    pub c_matrix: f64,
}

#[derive(Debug, Serialize)]
pub struct ResidualSummary {
    pub constraint: f64,
    pub boundary: f64,
    pub quadrature_estimate: f64,
}

#[derive(Debug, Serialize)]
pub struct EndStateEntry {
    pub mode: String,
    pub coefficient: f64,
}

#[derive(Debug, Serialize)]
pub struct RecoverySummary {
    pub identity: bool,
    pub eta: Vec<f64>,
    pub end_state: Vec<EndStateEntry>,
}

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub x: f64,
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub eigen: EigenSummary,
    pub conditions: ConditionSummary,
    pub residuals: ResidualSummary,
    pub recovery: RecoverySummary,
    pub l2_recovery_error: Option<f64>,
    pub outputs: Vec<OutputEntry>,
}

pub const SCHEMA_VERSION: u32 = 1;

pub fn summarize(
    cfg: &RunConfig,
    solver_condition: f64,
    rec: &RecoveredSolution,
    outputs: Vec<OutputEntry>,
) -> SolveSummary {
    let eig = rec.damped.eigen();
    let l2 = known_mode_target(cfg, rec).map(|label| rec.l2_error_vs_modes(&[(label, 1.0)]));
    SolveSummary {
        schema_version: SCHEMA_VERSION,
        command: "solve".into(),
        config: cfg.clone(),
        eigen: EigenSummary {
            n_pos: eig.n_pos,
            n_neg: eig.n_neg,
            n_zero: eig.n_zero,
            tol_zero: eig.tol_zero,
        },
        conditions: ConditionSummary {
            boundary_system: solver_condition,
            c_matrix: rec.aux.condition,
        },
        residuals: ResidualSummary {
            constraint: rec.damped.constraint_residual,
            boundary: rec.damped.boundary_residual,
            quadrature_estimate: rec.damped.quad_estimate,
        },
        recovery: RecoverySummary {
            identity: rec.aux.is_recovery_identity(),
            eta: rec.eta.as_slice().to_vec(),
            end_state: rec
                .end_state_coefficients()
                .into_iter()
                .map(|(l, c)| EndStateEntry {
                    mode: l.to_string(),
                    coefficient: c,
                })
                .collect(),
        },
        l2_recovery_error: l2,
        outputs,
    }
}

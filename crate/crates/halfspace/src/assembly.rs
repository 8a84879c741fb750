//! Galerkin assembly: the flux matrix `A`, the damped collision matrix `B`,
//! the boundary-condition rows, incoming-data right-hand sides, and the
//! flux-moment vectors used by the recovery step.
//!
//! All BGK cross integrals pair the basis weight `exp(-(v+u)^2/2)` with a
//! model factor `exp(-v^2/2)`. Splitting at `v = -u` and substituting
//! `w = +-(v+u)` combines the two Gaussians into a single one,
//!
//! ```text
//! e^{-w^2/2} e^{-(w -+ u)^2/2} = e^{-u^2/4} e^{-(w -+ u/2)^2},
//! ```
//!
//! so every integrand becomes polynomial times one shifted half-range
//! Hermite weight and the Gauss rules from [`crate::orthopoly`] integrate
//! it exactly. The transport model splits the same way into two `[0, 1]`
//! Legendre rules.

use crate::basis::{BasisError, BasisKind, BasisSet, SQRT_2};
use crate::model::{ClosedFormFn, DampedOperator, GaussFactor, ModelKind};
use crate::orthopoly::{
    self, OrthoError, PrecisionMode, QuadratureRule, RecurrenceTable,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("damped Galerkin matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("boundary quadrature did not converge: refinement estimate {estimate:.3e} exceeds tolerance {tol:.3e}")]
    QuadratureNotConverged { estimate: f64, tol: f64 },
    #[error("incoming data invalid: {0}")]
    InvalidIncoming(String),
    #[error("{points} quadrature points cannot integrate the assembly exactly (need at least {needed})")]
    InsufficientQuadrature { points: usize, needed: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Ortho(#[from] OrthoError),
}

/// Named incoming-data functions available from the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinPhi {
    Zero,
    ChiPlus,
    ChiMinus,
    ChiZero,
    V,
    VCubed,
}

impl BuiltinPhi {
    pub fn parse(name: &str) -> Option<BuiltinPhi> {
        Some(match name {
            "zero" => BuiltinPhi::Zero,
            "chi_plus" => BuiltinPhi::ChiPlus,
            "chi_minus" => BuiltinPhi::ChiMinus,
            "chi_zero" => BuiltinPhi::ChiZero,
            "v" => BuiltinPhi::V,
            "v_cubed" => BuiltinPhi::VCubed,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinPhi::Zero => "zero",
            BuiltinPhi::ChiPlus => "chi_plus",
            BuiltinPhi::ChiMinus => "chi_minus",
            BuiltinPhi::ChiZero => "chi_zero",
            BuiltinPhi::V => "v",
            BuiltinPhi::VCubed => "v_cubed",
        }
    }

    fn resolve(&self, model: ModelKind) -> Result<ClosedFormFn, AssemblyError> {
        use crate::model::chi_modes;
        let chi = |label: crate::model::ModeLabel| {
            chi_modes()
                .into_iter()
                .find(|(l, _)| *l == label)
                .map(|(_, f)| f)
                .unwrap()
        };
        let factor = match model {
            ModelKind::Bgk => GaussFactor::HalfSquare,
            ModelKind::Nte => GaussFactor::None,
        };
        Ok(match self {
            BuiltinPhi::Zero => ClosedFormFn::new(vec![], factor),
            BuiltinPhi::V => ClosedFormFn::new(vec![0.0, 1.0], factor),
            BuiltinPhi::VCubed => ClosedFormFn::new(vec![0.0, 0.0, 0.0, 1.0], factor),
            BuiltinPhi::ChiPlus | BuiltinPhi::ChiMinus | BuiltinPhi::ChiZero => {
                if model != ModelKind::Bgk {
                    return Err(AssemblyError::InvalidIncoming(format!(
                        "builtin '{}' requires the BGK model",
                        self.name()
                    )));
                }
                match self {
                    BuiltinPhi::ChiPlus => chi(crate::model::ModeLabel::ChiPlus),
                    BuiltinPhi::ChiMinus => chi(crate::model::ModeLabel::ChiMinus),
                    _ => chi(crate::model::ModeLabel::ChiZero),
                }
            }
        })
    }
}

/// Incoming boundary data `phi(v)` for `v + u > 0`.
#[derive(Debug, Clone)]
pub enum IncomingData {
    Builtin(BuiltinPhi),
    /// An explicit `poly(v) * factor` function (used internally for the
    /// auxiliary solves with null-mode data).
    ClosedForm(ClosedFormFn),
    /// Tabulated `(v, phi)` pairs, cubic-spline interpolated, zero outside
    /// the tabulated range.
    Table(TabulatedPhi),
}

impl IncomingData {
    pub fn describe(&self) -> String {
        match self {
            IncomingData::Builtin(b) => b.name().to_string(),
            IncomingData::ClosedForm(_) => "closed-form".to_string(),
            IncomingData::Table(t) => format!("table({} points)", t.vs.len()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, IncomingData::Builtin(BuiltinPhi::Zero))
    }

    fn evaluator(&self, model: ModelKind) -> Result<PhiEval<'_>, AssemblyError> {
        Ok(match self {
            IncomingData::Builtin(b) => PhiEval::Form(b.resolve(model)?),
            IncomingData::ClosedForm(f) => PhiEval::Form(f.clone()),
            IncomingData::Table(t) => PhiEval::Spline(t),
        })
    }
}

enum PhiEval<'a> {
    Form(ClosedFormFn),
    Spline(&'a TabulatedPhi),
}

impl PhiEval<'_> {
    fn eval(&self, v: f64) -> f64 {
        match self {
            PhiEval::Form(f) => f.eval(v),
            PhiEval::Spline(t) => t.eval(v),
        }
    }
}

/// Natural cubic spline through tabulated `(v, phi)` samples.
#[derive(Debug, Clone)]
pub struct TabulatedPhi {
    vs: Vec<f64>,
    phis: Vec<f64>,
    second: Vec<f64>,
}

impl TabulatedPhi {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, AssemblyError> {
        if points.len() < 2 {
            return Err(AssemblyError::InvalidIncoming(
                "tabulated data needs at least two points".into(),
            ));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(AssemblyError::InvalidIncoming(
                "tabulated data has duplicate abscissas".into(),
            ));
        }
        let vs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let phis: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = vs.len();
        // natural spline: tridiagonal solve for second derivatives
        let mut second = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            let mut lower = vec![0.0; m];
            let mut upper = vec![0.0; m];
            for i in 0..m {
                let h0 = vs[i + 1] - vs[i];
                let h1 = vs[i + 2] - vs[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                lower[i] = h0;
                upper[i] = h1;
                rhs[i] = 6.0 * ((phis[i + 2] - phis[i + 1]) / h1 - (phis[i + 1] - phis[i]) / h0);
            }
            for i in 1..m {
                let w = lower[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (1..m).rev() {
                second[i] = (rhs[i - 1] - upper[i - 1] * second[i + 1]) / diag[i - 1];
            }
        }
        Ok(TabulatedPhi { vs, phis, second })
    }

    /// Spline value inside the tabulated range, zero outside.
    pub fn eval(&self, v: f64) -> f64 {
        let n = self.vs.len();
        if v < self.vs[0] || v > self.vs[n - 1] {
            return 0.0;
        }
        let mut i = match self.vs.binary_search_by(|x| x.total_cmp(&v)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if i >= n - 1 {
            i = n - 2;
        }
        let h = self.vs[i + 1] - self.vs[i];
        let a = (self.vs[i + 1] - v) / h;
        let b = (v - self.vs[i]) / h;
        a * self.phis[i]
            + b * self.phis[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }
}

/// One half-line rule together with the basis polynomials evaluated at its
/// nodes (`polys[i][n]` is `B_n` at node `i`).
#[derive(Debug)]
struct RuleData {
    rule: QuadratureRule,
    polys: Vec<Vec<f64>>,
}

impl RuleData {
    fn build(table: &RecurrenceTable, rule: QuadratureRule, max_degree: usize) -> Result<Self, OrthoError> {
        let polys = rule
            .nodes
            .iter()
            .map(|&x| orthopoly::evaluate_polys(table, x, max_degree))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RuleData { rule, polys })
    }
}

/// Quadrature context for the cross brackets `<psi_k, F>`.
struct CrossContext {
    /// positive side `v + u > 0`: `v = map_pos(w)` with `w` the rule node
    pos: RuleData,
    /// negative side, `v = map_neg(w)`
    neg: RuleData,
    prefactor: f64,
    u: f64,
}

impl CrossContext {
    /// `<psi_k, F>` for all `k`, where `F = poly * factor` matches the
    /// model (HalfSquare for BGK, None for transport).
    fn bracket(&self, basis: &BasisSet, func: &ClosedFormFn) -> DVector<f64> {
        let n_polys = basis.order() + 1;
        let mut tp = vec![0.0; n_polys];
        let mut tn = vec![0.0; n_polys];
        for (i, &w) in self.pos.rule.nodes.iter().enumerate() {
            let q = func.poly_at(w - self.u);
            let omega = self.pos.rule.weights[i] * q;
            for n in 0..n_polys {
                tp[n] += omega * self.pos.polys[i][n];
            }
        }
        for (i, &w) in self.neg.rule.nodes.iter().enumerate() {
            let q = func.poly_at(-w - self.u);
            let omega = self.neg.rule.weights[i] * q;
            for n in 0..n_polys {
                tn[n] += omega * self.neg.polys[i][n];
            }
        }
        DVector::from_iterator(
            basis.len(),
            (1..=basis.len()).map(|k| {
                let n = basis.poly_degree(k);
                self.prefactor * (tp[n] + basis.parity_sign(k) * tn[n])
            }),
        )
    }
}

/// Flux-moment vectors `<(v+u) X, psi_k>` for the four damping families.
#[derive(Debug, Clone)]
pub struct FluxVectors {
    pub plus: Vec<DVector<f64>>,
    pub minus: Vec<DVector<f64>>,
    pub zero: Vec<DVector<f64>>,
    pub linv: Vec<DVector<f64>>,
}

/// Boundary quadrature context (incoming half line only), kept at two
/// resolutions for the refinement estimate.
#[derive(Debug)]
struct BoundaryContext {
    coarse: RuleData,
    fine: RuleData,
    scale: f64,
}

/// The assembled Galerkin system for one `(model, u, N, alpha)` choice.
#[derive(Debug)]
pub struct GalerkinSystem {
    basis: BasisSet,
    damped: DampedOperator,
    quad_points: usize,
    boundary_points: usize,
    a_mat: DMatrix<f64>,
    b_mat: DMatrix<f64>,
    boundary_rows: DMatrix<f64>,
    flux: FluxVectors,
    cross_null: Vec<DVector<f64>>,
    boundary: BoundaryContext,
}

/// Flux matrix `A_{kl} = <(v+u) psi_k, psi_l>` straight from the
/// three-term recurrence; same-parity entries are exactly zero and the
/// result does not depend on `u`.
pub fn assemble_a(basis: &BasisSet) -> DMatrix<f64> {
    let k = basis.len();
    let mut a = DMatrix::zeros(k, k);
    for n in 1..=basis.order() + 1 {
        let row = 2 * n - 1;
        for (col, coeff) in basis.flux_expansion_of_odd(n) {
            a[(row - 1, col - 1)] = coeff;
            a[(col - 1, row - 1)] = coeff;
        }
    }
    a
}

impl GalerkinSystem {
    /// Assemble the full system. `quad_points` is the node count of each
    /// half-line rule (the exactness floor is `N + 3`); `boundary_points`
    /// is the incoming-data rule size, refined to double for the error
    /// estimate.
    pub fn build(
        basis: BasisSet,
        damped: DampedOperator,
        quad_points: usize,
        boundary_points: usize,
    ) -> Result<Self, AssemblyError> {
        let n = basis.order();
        let k = basis.len();
        let needed = n + 3;
        if quad_points < needed {
            return Err(AssemblyError::InsufficientQuadrature {
                points: quad_points,
                needed,
            });
        }
        let u = basis.bulk_velocity();
        let cross = build_cross_context(&basis, quad_points)?;
        let boundary = build_boundary_context(&basis, boundary_points)?;

        let a_mat = assemble_a(&basis);

        // cross brackets with the null basis: the L part of B
        let cross_null: Vec<DVector<f64>> = damped
            .model
            .null_basis()
            .iter()
            .map(|(_, x)| cross.bracket(&basis, x))
            .collect();

        // flux vectors for the damping families
        let d = &damped.decomposition;
        let flux = FluxVectors {
            plus: d
                .x_plus
                .iter()
                .map(|(_, x)| cross.bracket(&basis, &x.times_v_plus_u(u)))
                .collect(),
            minus: d
                .x_minus
                .iter()
                .map(|(_, x)| cross.bracket(&basis, &x.times_v_plus_u(u)))
                .collect(),
            zero: d
                .x_zero
                .iter()
                .map(|(_, x)| cross.bracket(&basis, &x.times_v_plus_u(u)))
                .collect(),
            linv: d
                .linv_images
                .iter()
                .map(|g| cross.bracket(&basis, &g.times_v_plus_u(u)))
                .collect(),
        };

        let mut b_mat = DMatrix::identity(k, k);
        for c in &cross_null {
            b_mat -= c * c.transpose();
        }
        for vset in [&flux.plus, &flux.minus, &flux.zero, &flux.linv] {
            for v in vset {
                b_mat += damped.alpha * v * v.transpose();
            }
        }
        b_mat = 0.5 * (&b_mat + b_mat.transpose());

        if nalgebra::linalg::Cholesky::new(b_mat.clone()).is_none() {
            let eig = b_mat.clone().symmetric_eigen();
            let min_eigenvalue = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            return Err(AssemblyError::NotPositiveDefinite { min_eigenvalue });
        }

        // even-even |v+u| Gram on the incoming half (weight w * base weight)
        let abs_rule = build_abs_rule(&basis, quad_points)?;
        let mut ee = DMatrix::zeros(n + 1, n + 1);
        for i in 0..abs_rule.rule.len() {
            let w = abs_rule.rule.nodes[i] * abs_rule.rule.weights[i];
            for kk in 0..=n {
                for jj in kk..=n {
                    ee[(kk, jj)] += w * abs_rule.polys[i][kk] * abs_rule.polys[i][jj];
                }
            }
        }
        for kk in 0..=n {
            for jj in 0..kk {
                ee[(kk, jj)] = ee[(jj, kk)];
            }
        }

        let mut boundary_rows = DMatrix::zeros(n, k);
        for j in 1..=n {
            for kk in 1..=n + 1 {
                boundary_rows[(j - 1, 2 * kk - 2)] = a_mat[(2 * kk - 2, 2 * j - 1)];
            }
            for kk in 1..=n {
                boundary_rows[(j - 1, 2 * kk - 1)] = ee[(kk - 1, j - 1)];
            }
        }

        Ok(GalerkinSystem {
            basis,
            damped,
            quad_points,
            boundary_points,
            a_mat,
            b_mat,
            boundary_rows,
            flux,
            cross_null,
            boundary,
        })
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn damped_operator(&self) -> &DampedOperator {
        &self.damped
    }

    pub fn quad_points(&self) -> usize {
        self.quad_points
    }

    pub fn boundary_points(&self) -> usize {
        self.boundary_points
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a_mat
    }

    pub fn b_matrix(&self) -> &DMatrix<f64> {
        &self.b_mat
    }

    /// The `N x (2N+1)` boundary-condition rows.
    pub fn boundary_rows(&self) -> &DMatrix<f64> {
        &self.boundary_rows
    }

    pub fn flux_vectors(&self) -> &FluxVectors {
        &self.flux
    }

    /// `<psi_k, X_a>` for the model's null basis, in null-basis order.
    pub fn null_projections(&self) -> &[DVector<f64>] {
        &self.cross_null
    }

    /// Right-hand side `r_j = 2 int_{v+u>0} (v+u) phi psi_{2j} dv` of the
    /// boundary conditions, with a quadrature refinement estimate
    /// (coarse-vs-fine max difference). Fails if the estimate exceeds
    /// `tol` scaled by the data magnitude.
    pub fn boundary_rhs(
        &self,
        phi: &IncomingData,
        tol: f64,
    ) -> Result<(DVector<f64>, f64), AssemblyError> {
        let n = self.basis.order();
        if phi.is_zero() {
            return Ok((DVector::zeros(n), 0.0));
        }
        let eval = phi.evaluator(self.damped.model.kind())?;
        let coarse = self.rhs_with(&self.boundary.coarse, &eval);
        let fine = self.rhs_with(&self.boundary.fine, &eval);
        let estimate = (&fine - &coarse).amax();
        let scale = fine.amax().max(1.0);
        if estimate > tol * scale {
            return Err(AssemblyError::QuadratureNotConverged {
                estimate,
                tol: tol * scale,
            });
        }
        Ok((fine, estimate))
    }

    fn rhs_with(&self, data: &RuleData, phi: &PhiEval<'_>) -> DVector<f64> {
        let n = self.basis.order();
        let u = self.basis.bulk_velocity();
        let mut r = DVector::zeros(n);
        for (i, &w) in data.rule.nodes.iter().enumerate() {
            let common = self.boundary.scale * data.rule.weights[i] * w * phi.eval(w - u);
            for j in 1..=n {
                r[j - 1] += common * data.polys[i][j - 1];
            }
        }
        r
    }
}

fn build_cross_context(basis: &BasisSet, g: usize) -> Result<CrossContext, AssemblyError> {
    let u = basis.bulk_velocity();
    let max_deg = basis.order() + 1;
    match basis.kind() {
        BasisKind::BgkHalfHermite => {
            let tab_pos = orthopoly::half_hermite_recurrence(u / 2.0, g, PrecisionMode::Extended)?;
            let pos_rule = orthopoly::golub_welsch(&tab_pos, g)?;
            let neg_rule = if u == 0.0 {
                pos_rule.clone()
            } else {
                let tab_neg =
                    orthopoly::half_hermite_recurrence(-u / 2.0, g, PrecisionMode::Extended)?;
                orthopoly::golub_welsch(&tab_neg, g)?
            };
            Ok(CrossContext {
                pos: RuleData::build(basis.table(), pos_rule, max_deg)?,
                neg: RuleData::build(basis.table(), neg_rule, max_deg)?,
                prefactor: (-u * u / 4.0).exp() / SQRT_2,
                u,
            })
        }
        BasisKind::NteLegendre => {
            let tab = orthopoly::shifted_legendre_recurrence(g);
            let rule = orthopoly::golub_welsch(&tab, g)?;
            let data = RuleData::build(basis.table(), rule.clone(), max_deg)?;
            let data2 = RuleData::build(basis.table(), rule, max_deg)?;
            Ok(CrossContext {
                pos: data,
                neg: data2,
                prefactor: 1.0 / SQRT_2,
                u,
            })
        }
    }
}

/// Rule for the `|v+u|` even-even Gram: plain base weight on the incoming
/// half, integrand carries the extra factor `w`.
fn build_abs_rule(basis: &BasisSet, g: usize) -> Result<RuleData, AssemblyError> {
    let rule = match basis.kind() {
        BasisKind::BgkHalfHermite => {
            let tab = orthopoly::half_hermite_recurrence(0.0, g, PrecisionMode::Extended)?;
            orthopoly::golub_welsch(&tab, g)?
        }
        BasisKind::NteLegendre => {
            let tab = orthopoly::shifted_legendre_recurrence(g);
            orthopoly::golub_welsch(&tab, g)?
        }
    };
    Ok(RuleData::build(basis.table(), rule, basis.order())?)
}

fn build_boundary_context(basis: &BasisSet, g: usize) -> Result<BoundaryContext, AssemblyError> {
    match basis.kind() {
        BasisKind::BgkHalfHermite => {
            // rule against e^{-w^2/2}: the shift-0 half-range rule scaled by sqrt(2)
            let tab = orthopoly::half_hermite_recurrence(0.0, 2 * g, PrecisionMode::Extended)?;
            let coarse = orthopoly::golub_welsch(&tab, g)?.scaled(SQRT_2);
            let fine = orthopoly::golub_welsch(&tab, 2 * g)?.scaled(SQRT_2);
            Ok(BoundaryContext {
                coarse: RuleData::build(basis.table(), coarse, basis.order())?,
                fine: RuleData::build(basis.table(), fine, basis.order())?,
                scale: SQRT_2,
            })
        }
        BasisKind::NteLegendre => {
            let tab = orthopoly::shifted_legendre_recurrence(2 * g);
            let coarse = orthopoly::golub_welsch(&tab, g)?;
            let fine = orthopoly::golub_welsch(&tab, 2 * g)?;
            Ok(BoundaryContext {
                coarse: RuleData::build(basis.table(), coarse, basis.order())?,
                fine: RuleData::build(basis.table(), fine, basis.order())?,
                scale: SQRT_2,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{null_space_decomposition, DampedOperator, KineticModel, ModelKind};
    use crate::oracle;
    use approx::assert_abs_diff_eq;

    fn bgk_system(n: usize, u: f64, alpha: f64) -> GalerkinSystem {
        let basis = BasisSet::build(BasisKind::BgkHalfHermite, n, u).unwrap();
        let model = KineticModel::new(ModelKind::Bgk);
        let d = null_space_decomposition(&model, u, 1e-12).unwrap();
        let op = DampedOperator::new(model, d, alpha);
        GalerkinSystem::build(basis, op, 2 * n + 8, 64).unwrap()
    }

    fn nte_system(n: usize, alpha: f64) -> GalerkinSystem {
        let basis = BasisSet::build(BasisKind::NteLegendre, n, 0.0).unwrap();
        let model = KineticModel::new(ModelKind::Nte);
        let d = null_space_decomposition(&model, 0.0, 1e-12).unwrap();
        let op = DampedOperator::new(model, d, alpha);
        GalerkinSystem::build(basis, op, 2 * n + 8, 64).unwrap()
    }

    #[test]
    fn a_structure_at_order_one() {
        let sys = bgk_system(1, 0.0, 0.1);
        let a = sys.a_matrix();
        let t = sys.basis().table();
        for i in 0..3 {
            assert_eq!(a[(i, i)], 0.0);
        }
        assert_abs_diff_eq!(a[(0, 1)], t.alpha(0), epsilon = 1e-15);
        assert_abs_diff_eq!(a[(1, 2)], t.beta(1).sqrt(), epsilon = 1e-15);
        assert_eq!(a[(0, 2)], 0.0);
    }

    #[test]
    fn a_is_symmetric_and_u_independent() {
        let a0 = bgk_system(6, 0.0, 0.1).a_matrix().clone();
        let a7 = bgk_system(6, 0.7, 0.1).a_matrix().clone();
        assert!((&a0 - &a7).amax() < 1e-13);
        assert!((&a0 - a0.transpose()).amax() < 1e-13);
    }

    #[test]
    fn a_matches_oracle_quadrature() {
        let sys = bgk_system(4, 0.6, 0.1);
        let b = sys.basis();
        let u = 0.6;
        for k in 1..=9usize {
            for l in 1..=9usize {
                let want = oracle::integrate(-u - 13.0, -u + 13.0, 96, |v| {
                    let p = b.eval(v).unwrap();
                    (v + u) * p[k - 1] * p[l - 1]
                });
                assert_abs_diff_eq!(sys.a_matrix()[(k - 1, l - 1)], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn a_has_one_dimensional_kernel() {
        let sys = bgk_system(4, 0.0, 0.1);
        let svd = sys.a_matrix().clone().svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-12 * smax)
            .count();
        assert_eq!(rank, 8);
    }

    #[test]
    fn parity_selection_zeros() {
        let sys = bgk_system(5, 0.4, 0.1);
        let a = sys.a_matrix();
        for k in 1..=11usize {
            for l in 1..=11usize {
                if k % 2 == l % 2 {
                    assert_eq!(a[(k - 1, l - 1)], 0.0, "k={k} l={l}");
                }
            }
        }
    }

    #[test]
    fn b_is_spd_across_u_cases() {
        let c = crate::model::BGK_SOUND_SPEED;
        for &u in &[-2.0, -c, -0.5, 0.0, 0.5, c, 2.0] {
            let sys = bgk_system(8, u, 0.1);
            assert!((sys.b_matrix() - sys.b_matrix().transpose()).amax() < 1e-13);
            assert!(nalgebra::linalg::Cholesky::new(sys.b_matrix().clone()).is_some());
        }
        let sys = nte_system(8, 0.1);
        assert!(nalgebra::linalg::Cholesky::new(sys.b_matrix().clone()).is_some());
    }

    #[test]
    fn b_symmetry_residual_n20() {
        let sys = bgk_system(20, 0.5, 0.1);
        assert!((sys.b_matrix() - sys.b_matrix().transpose()).amax() < 1e-13);
    }

    #[test]
    fn b_matches_oracle_quadrature() {
        // spot-check entries of B against direct integration of every
        // bracket in psi_k L_d psi_l, splitting each integral at the
        // basis jump v = -u
        let u = 0.5;
        let alpha = 0.1;
        let sys = bgk_system(5, u, alpha);
        let basis = sys.basis().clone();
        let split = |g: &dyn Fn(f64) -> f64| {
            oracle::integrate(-u - 13.0, -u, 64, g) + oracle::integrate(-u, -u + 13.0, 64, g)
        };
        let k_len = basis.len();
        let d = &sys.damped_operator().decomposition;
        let bracket = |func: &crate::model::ClosedFormFn, k: usize| {
            split(&|v| basis.eval(v).unwrap()[k - 1] * func.eval(v))
        };
        for &(k, l) in &[(1usize, 1usize), (2, 2), (3, 5), (4, 8), (7, 7), (2, 9)] {
            let mut want = if k == l { 1.0 } else { 0.0 };
            for (_, chi) in sys.damped_operator().model.null_basis() {
                want -= bracket(chi, k) * bracket(chi, l);
            }
            for y in d.damping_functions() {
                want += alpha * bracket(&y, k) * bracket(&y, l);
            }
            assert_abs_diff_eq!(sys.b_matrix()[(k - 1, l - 1)], want, epsilon = 1e-12);
        }
        assert!(k_len == 11);
    }

    #[test]
    fn undamped_part_has_null_row_for_nte() {
        // B minus the damping outer products is the Gram of L psi against
        // psi; its second row/column vanishes (psi_2 spans the null space)
        let sys = nte_system(3, 0.1);
        let k = sys.basis().len();
        let mut undamped = sys.b_matrix().clone();
        let alpha = sys.damped_operator().alpha;
        for vset in [
            &sys.flux_vectors().plus,
            &sys.flux_vectors().minus,
            &sys.flux_vectors().zero,
            &sys.flux_vectors().linv,
        ] {
            for v in vset {
                undamped -= alpha * v * v.transpose();
            }
        }
        for i in 0..k {
            assert_abs_diff_eq!(undamped[(1, i)], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(undamped[(i, 1)], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn boundary_rhs_zero_data() {
        let sys = bgk_system(4, 0.3, 0.1);
        let (r, est) = sys
            .boundary_rhs(&IncomingData::Builtin(BuiltinPhi::Zero), 1e-8)
            .unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
        assert_eq!(est, 0.0);
    }

    #[test]
    fn boundary_rhs_nte_linear_data() {
        // phi = v: r_j = sqrt(2) int_0^1 v^2 Phat_{j-1}(v) dv; closed form
        // sqrt(2)/3 for j = 1
        let sys = nte_system(4, 0.1);
        let (r, est) = sys
            .boundary_rhs(&IncomingData::Builtin(BuiltinPhi::V), 1e-10)
            .unwrap();
        assert!(est < 1e-14);
        assert_abs_diff_eq!(r[0], SQRT_2 / 3.0, epsilon = 1e-14);
        for j in 1..=4usize {
            let want = SQRT_2
                * oracle::integrate(0.0, 1.0, 16, |v| {
                    let p = orthopoly::evaluate_polys(sys.basis().table(), v, j).unwrap();
                    v * v * p[j - 1]
                });
            assert_abs_diff_eq!(r[j - 1], want, epsilon = 1e-13);
        }
    }

    #[test]
    fn boundary_rhs_basis_function_data() {
        // phi = psi_2 restricted to the incoming half (u = 0):
        // r_j = <|v| psi_2, psi_{2j}> = the even-even Gram column
        let sys = bgk_system(4, 0.0, 0.1);
        let m0 = sys.basis().table().m0();
        let phi = ClosedFormFn::new(vec![1.0 / (m0.sqrt() * SQRT_2)], GaussFactor::HalfSquare);
        let (r, _) = sys
            .boundary_rhs(&IncomingData::ClosedForm(phi), 1e-8)
            .unwrap();
        for j in 1..=4usize {
            let want = oracle::integrate(-13.0, 13.0, 96, |v| {
                let p = sys.basis().eval(v).unwrap();
                v.abs() * p[1] * p[2 * j - 1]
            });
            assert_abs_diff_eq!(r[j - 1], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn boundary_rhs_detects_unconverged_quadrature() {
        let sys = bgk_system(4, 0.5, 0.1);
        // a Gaussian-type mode is not polynomial against the generic
        // weight, so the refinement estimate is positive and tol = 0 trips
        let err = sys.boundary_rhs(&IncomingData::Builtin(BuiltinPhi::ChiPlus), 0.0);
        assert!(matches!(
            err,
            Err(AssemblyError::QuadratureNotConverged { .. })
        ));
    }

    #[test]
    fn boundary_rhs_chi_matches_exact_route() {
        // generic e^{-w^2/2} rule at 64 nodes vs direct oracle integration
        let u = 0.5;
        let sys = bgk_system(8, u, 0.1);
        let (r, est) = sys
            .boundary_rhs(&IncomingData::Builtin(BuiltinPhi::ChiPlus), 1e-9)
            .unwrap();
        assert!(est < 1e-12);
        let chi = BuiltinPhi::ChiPlus.resolve(ModelKind::Bgk).unwrap();
        for j in 1..=8usize {
            let want = 2.0
                * oracle::integrate(-u, -u + 13.0, 96, |v| {
                    let p = sys.basis().eval(v).unwrap();
                    (v + u) * chi.eval(v) * p[2 * j - 1]
                });
            assert_abs_diff_eq!(r[j - 1], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn tabulated_phi_roundtrip() {
        // spline table sampled from v^3 reproduces the builtin rhs closely
        let sys = bgk_system(6, 0.0, 0.1);
        let pts: Vec<(f64, f64)> = (0..400)
            .map(|i| {
                let v = 8.0 * i as f64 / 399.0;
                (v, v * v * v * (-0.5 * v * v).exp())
            })
            .collect();
        let table = TabulatedPhi::new(pts).unwrap();
        let (rt, _) = sys
            .boundary_rhs(&IncomingData::Table(table), 1e-4)
            .unwrap();
        let (rb, _) = sys
            .boundary_rhs(&IncomingData::Builtin(BuiltinPhi::VCubed), 1e-8)
            .unwrap();
        assert!((&rt - &rb).amax() < 1e-5, "{}", (&rt - &rb).amax());
    }

    #[test]
    fn tabulated_phi_validation() {
        assert!(TabulatedPhi::new(vec![(0.0, 1.0)]).is_err());
        assert!(TabulatedPhi::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
    }

    #[test]
    fn chi_builtins_require_bgk() {
        let sys = nte_system(3, 0.1);
        assert!(matches!(
            sys.boundary_rhs(&IncomingData::Builtin(BuiltinPhi::ChiPlus), 1e-8),
            Err(AssemblyError::InvalidIncoming(_))
        ));
    }

    #[test]
    fn flux_vector_parity_nte() {
        let sys = nte_system(4, 0.1);
        let z = &sys.flux_vectors().zero[0];
        assert!(z[0].abs() > 1e-3);
        for k in (2..=sys.basis().len()).step_by(2) {
            assert_abs_diff_eq!(z[k - 1], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn flux_vector_parity_bgk_zero_mode() {
        // u = 0: (v) chi_0 is odd, so even-indexed entries vanish
        let sys = bgk_system(6, 0.0, 0.1);
        let z = &sys.flux_vectors().zero[0];
        for k in (2..=sys.basis().len()).step_by(2) {
            assert_abs_diff_eq!(z[k - 1], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn flux_vector_gamma_consistency() {
        // flux vector dotted with the basis projection of X recovers the
        // analytic bracket gamma
        let u = 0.5;
        let sys = bgk_system(20, u, 0.1);
        let d = &sys.damped_operator().decomposition;
        for (i, (_, x)) in d.x_plus.iter().enumerate() {
            let proj: DVector<f64> = DVector::from_iterator(
                sys.basis().len(),
                (1..=sys.basis().len()).map(|k| {
                    oracle::integrate(-u - 13.0, -u + 13.0, 128, |v| {
                        sys.basis().eval(v).unwrap()[k - 1] * x.eval(v)
                    })
                }),
            );
            let got = sys.flux_vectors().plus[i].dot(&proj);
            assert_abs_diff_eq!(got, d.gammas_plus[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn insufficient_quadrature_rejected() {
        let basis = BasisSet::build(BasisKind::BgkHalfHermite, 8, 0.0).unwrap();
        let model = KineticModel::new(ModelKind::Bgk);
        let d = null_space_decomposition(&model, 0.0, 1e-12).unwrap();
        let op = DampedOperator::new(model, d, 0.1);
        assert!(matches!(
            GalerkinSystem::build(basis, op, 4, 64),
            Err(AssemblyError::InsufficientQuadrature { .. })
        ));
    }
}

//! Kinetic models: the collision operators, their null spaces, the
//! eigen-decomposition of the projected flux operator on the null space,
//! and the damped operator.
//!
//! Both models have projection-type collision operators `L = I - P` with
//! `P` the orthogonal projection onto the null space, so `L` acts as the
//! identity on the orthogonal complement and the pseudo-inverse images
//! needed by the damping are available in closed form.

use crate::oracle;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sound speed of the linearized BGK model, `sqrt(3/2)`.
pub const BGK_SOUND_SPEED: f64 = 1.224744871391589049;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(
        "flux bracket {bracket} lies within a decade of the zero tolerance {tol}; \
         the bulk velocity is too close to a transition for reliable classification"
    )]
    AmbiguousClassification { bracket: f64, tol: f64 },
    #[error("model requires bulk velocity u = 0, got {0}")]
    UnsupportedShift(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bgk,
    Nte,
}

/// Exponential factor carried by a closed-form velocity function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussFactor {
    /// `exp(-v^2 / 2)` (square root of the centered Maxwellian).
    HalfSquare,
    /// No factor (transport model; polynomial on `[-1, 1]`).
    None,
}

/// A function `p(v) * factor(v)` with polynomial `p`; everything the models
/// need (null modes, flux multiples, pseudo-inverse images) has this shape,
/// which is what keeps the assembly quadrature exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormFn {
    /// Coefficients of `p` in ascending powers of `v`.
    pub coeffs: Vec<f64>,
    pub factor: GaussFactor,
}

impl ClosedFormFn {
    pub fn new(coeffs: Vec<f64>, factor: GaussFactor) -> Self {
        ClosedFormFn { coeffs, factor }
    }

    pub fn poly_at(&self, v: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * v + c)
    }

    pub fn eval(&self, v: f64) -> f64 {
        let f = match self.factor {
            GaussFactor::HalfSquare => (-0.5 * v * v).exp(),
            GaussFactor::None => 1.0,
        };
        self.poly_at(v) * f
    }

    /// Multiply by `(v + u)`.
    pub fn times_v_plus_u(&self, u: f64) -> ClosedFormFn {
        let mut out = vec![0.0; self.coeffs.len() + 1];
        for (i, &c) in self.coeffs.iter().enumerate() {
            out[i + 1] += c;
            out[i] += u * c;
        }
        ClosedFormFn::new(out, self.factor)
    }

    pub fn scaled(&self, s: f64) -> ClosedFormFn {
        ClosedFormFn::new(self.coeffs.iter().map(|c| s * c).collect(), self.factor)
    }
}

/// Identity of a null mode, used when reporting end-states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    ChiPlus,
    ChiMinus,
    ChiZero,
    Constant,
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModeLabel::ChiPlus => "chi_plus",
            ModeLabel::ChiMinus => "chi_minus",
            ModeLabel::ChiZero => "chi_zero",
            ModeLabel::Constant => "constant",
        };
        f.write_str(s)
    }
}

/// A kinetic model: collision operator data and closed-form null basis.
#[derive(Debug, Clone)]
pub struct KineticModel {
    kind: ModelKind,
    null_basis: Vec<(ModeLabel, ClosedFormFn)>,
}

/// The three BGK null modes. `chi_0` pairs with flux bracket `u`,
/// `chi_(+/-)` with `u +- c`.
pub fn chi_modes() -> [(ModeLabel, ClosedFormFn); 3] {
    // 1 / (6^{1/2} pi^{1/4})
    let k = 1.0 / (6.0f64.sqrt() * std::f64::consts::PI.powf(0.25));
    let s6 = 6.0f64.sqrt();
    [
        (
            ModeLabel::ChiZero,
            ClosedFormFn::new(vec![-3.0 * k, 0.0, 2.0 * k], GaussFactor::HalfSquare),
        ),
        (
            ModeLabel::ChiPlus,
            ClosedFormFn::new(vec![0.0, s6 * k, 2.0 * k], GaussFactor::HalfSquare),
        ),
        (
            ModeLabel::ChiMinus,
            ClosedFormFn::new(vec![0.0, s6 * k, -2.0 * k], GaussFactor::HalfSquare),
        ),
    ]
}

impl KineticModel {
    pub fn new(kind: ModelKind) -> Self {
        let null_basis = match kind {
            ModelKind::Bgk => chi_modes().to_vec(),
            ModelKind::Nte => vec![(
                ModeLabel::Constant,
                ClosedFormFn::new(vec![1.0 / crate::basis::SQRT_2], GaussFactor::None),
            )],
        };
        KineticModel { kind, null_basis }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Orthonormal closed-form basis of `Null(L)`.
    pub fn null_basis(&self) -> &[(ModeLabel, ClosedFormFn)] {
        &self.null_basis
    }

    /// Sound speed; only the BGK model has one.
    pub fn sound_speed(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Bgk => Some(BGK_SOUND_SPEED),
            ModelKind::Nte => None,
        }
    }

    pub fn velocity_domain(&self) -> (f64, f64) {
        match self.kind {
            ModelKind::Bgk => (f64::NEG_INFINITY, f64::INFINITY),
            ModelKind::Nte => (-1.0, 1.0),
        }
    }

    fn integrate(&self, f: impl FnMut(f64) -> f64) -> f64 {
        match self.kind {
            ModelKind::Bgk => oracle::integrate_full_line(0.0, f),
            ModelKind::Nte => oracle::integrate(-1.0, 1.0, 64, f),
        }
    }

    /// Apply `L = I - P` to an arbitrary function, with the projection
    /// brackets computed by the verification quadrature. This is the
    /// reference route used by invariant checks; the Galerkin assembly
    /// never calls it.
    pub fn apply_l<'a>(&self, f: &'a dyn Fn(f64) -> f64) -> impl Fn(f64) -> f64 + 'a {
        let brackets: Vec<(ClosedFormFn, f64)> = self
            .null_basis
            .iter()
            .map(|(_, x)| (x.clone(), self.integrate(|v| x.eval(v) * f(v))))
            .collect();
        move |v| {
            let mut out = f(v);
            for (x, b) in &brackets {
                out -= b * x.eval(v);
            }
            out
        }
    }
}

/// Eigen-structure of the projected flux operator on `Null(L)`: modes
/// classified by the sign of `<(v+u) X, X>`, plus the pseudo-inverse
/// images `L^{-1}((v+u) X_0)` for the zero family.
#[derive(Debug, Clone)]
pub struct NullSpaceDecomposition {
    pub u: f64,
    pub x_plus: Vec<(ModeLabel, ClosedFormFn)>,
    pub x_minus: Vec<(ModeLabel, ClosedFormFn)>,
    pub x_zero: Vec<(ModeLabel, ClosedFormFn)>,
    /// `<(v+u) X, X> > 0` for the plus family.
    pub gammas_plus: Vec<f64>,
    /// `-<(v+u) X, X> > 0` for the minus family.
    pub gammas_minus: Vec<f64>,
    /// `L^{-1}((v+u) X_{0,k})`; since `L` is the identity on the
    /// orthogonal complement this equals `(v+u) X_{0,k}` itself.
    pub linv_images: Vec<ClosedFormFn>,
}

impl NullSpaceDecomposition {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.x_plus.len(), self.x_minus.len(), self.x_zero.len())
    }

    /// Modes spanning `H+ (+) H0`, the end-state space, in recovery order
    /// (plus family first, then zero family).
    pub fn recovery_modes(&self) -> Vec<(ModeLabel, ClosedFormFn)> {
        self.x_plus
            .iter()
            .chain(self.x_zero.iter())
            .cloned()
            .collect()
    }

    /// All damping multipliers `(v+u) Y` in canonical order: plus, minus,
    /// zero, then the pseudo-inverse family.
    pub fn damping_functions(&self) -> Vec<ClosedFormFn> {
        let u = self.u;
        self.x_plus
            .iter()
            .chain(self.x_minus.iter())
            .chain(self.x_zero.iter())
            .map(|(_, x)| x.times_v_plus_u(u))
            .chain(self.linv_images.iter().map(|g| g.times_v_plus_u(u)))
            .collect()
    }
}

/// Classify the null modes by the sign of the flux bracket `<(v+u)X, X>`.
///
/// For BGK the brackets are `u` and `u +- c` in closed form; for the
/// transport model (`u = 0` enforced) the single constant mode has bracket
/// zero. Brackets with `|.| <= tol` count as zero, where `tol` is
/// `tol_null` relative to the largest bracket magnitude; a bracket inside
/// `(tol, 10 tol)` is rejected as ambiguous.
pub fn null_space_decomposition(
    model: &KineticModel,
    u: f64,
    tol_null: f64,
) -> Result<NullSpaceDecomposition, ModelError> {
    assert!(tol_null > 0.0, "tol_null must be positive");
    match model.kind() {
        ModelKind::Nte => {
            if u != 0.0 {
                return Err(ModelError::UnsupportedShift(u));
            }
            let x0 = model.null_basis()[0].clone();
            let linv = x0.1.times_v_plus_u(0.0);
            Ok(NullSpaceDecomposition {
                u,
                x_plus: vec![],
                x_minus: vec![],
                x_zero: vec![x0],
                gammas_plus: vec![],
                gammas_minus: vec![],
                linv_images: vec![linv],
            })
        }
        ModelKind::Bgk => {
            let c = BGK_SOUND_SPEED;
            let modes = chi_modes();
            let brackets = [u, u + c, u - c];
            let max_mag = brackets.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            let tol = tol_null * max_mag.max(1.0);
            for &b in &brackets {
                if b.abs() > tol && b.abs() < 10.0 * tol {
                    return Err(ModelError::AmbiguousClassification { bracket: b, tol });
                }
            }
            let mut d = NullSpaceDecomposition {
                u,
                x_plus: vec![],
                x_minus: vec![],
                x_zero: vec![],
                gammas_plus: vec![],
                gammas_minus: vec![],
                linv_images: vec![],
            };
            for (mode, bracket) in modes.into_iter().zip(brackets) {
                if bracket > tol {
                    d.gammas_plus.push(bracket);
                    d.x_plus.push(mode);
                } else if bracket < -tol {
                    d.gammas_minus.push(-bracket);
                    d.x_minus.push(mode);
                } else {
                    d.linv_images.push(mode.1.times_v_plus_u(u));
                    d.x_zero.push(mode);
                }
            }
            Ok(d)
        }
    }
}

/// The damped collision operator `L_d = L + alpha * (flux damping)`.
#[derive(Debug, Clone)]
pub struct DampedOperator {
    pub model: KineticModel,
    pub decomposition: NullSpaceDecomposition,
    pub alpha: f64,
}

impl DampedOperator {
    pub fn new(model: KineticModel, decomposition: NullSpaceDecomposition, alpha: f64) -> Self {
        assert!(alpha > 0.0, "damping strength must be positive");
        DampedOperator {
            model,
            decomposition,
            alpha,
        }
    }

    /// Reference application of `L_d` (verification quadrature for the
    /// brackets); the assembly computes the same terms with exact Gauss
    /// rules instead.
    pub fn apply<'a>(&'a self, f: &'a dyn Fn(f64) -> f64) -> impl Fn(f64) -> f64 + 'a {
        let lf = self.model.apply_l(f);
        let damping: Vec<(ClosedFormFn, f64)> = self
            .decomposition
            .damping_functions()
            .into_iter()
            .map(|y| {
                let b = match self.model.kind() {
                    ModelKind::Bgk => oracle::integrate_full_line(0.0, |v| y.eval(v) * f(v)),
                    ModelKind::Nte => oracle::integrate(-1.0, 1.0, 64, |v| y.eval(v) * f(v)),
                };
                (y, b)
            })
            .collect();
        move |v| {
            let mut out = lf(v);
            for (y, b) in &damping {
                out += self.alpha * b * y.eval(v);
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    const C: f64 = BGK_SOUND_SPEED;

    #[test]
    fn sound_speed_is_sqrt_three_halves() {
        assert_eq!(C, 1.5f64.sqrt());
    }

    #[test]
    fn chi_modes_are_orthonormal() {
        let modes = chi_modes();
        for i in 0..3 {
            for j in i..3 {
                let val = oracle::integrate_full_line(0.0, |v| {
                    modes[i].1.eval(v) * modes[j].1.eval(v)
                });
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(val, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn chi_flux_brackets() {
        let u = 0.5;
        let modes = chi_modes();
        let get = |label: ModeLabel| {
            modes
                .iter()
                .find(|(l, _)| *l == label)
                .map(|(_, f)| f.clone())
                .unwrap()
        };
        let plus = get(ModeLabel::ChiPlus);
        let zero = get(ModeLabel::ChiZero);
        let bracket = |a: &ClosedFormFn, b: &ClosedFormFn| {
            oracle::integrate_full_line(0.0, |v| (v + u) * a.eval(v) * b.eval(v))
        };
        assert_abs_diff_eq!(bracket(&plus, &plus), 1.724744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(bracket(&zero, &zero), u, epsilon = 1e-12);
        assert_abs_diff_eq!(bracket(&plus, &zero), 0.0, epsilon = 1e-12);
        // odd integrand at u = 0
        let b0 = oracle::integrate_full_line(0.0, |v| v * zero.eval(v) * zero.eval(v));
        assert_abs_diff_eq!(b0, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn seven_case_classification() {
        let model = KineticModel::new(ModelKind::Bgk);
        let cases = [
            (-2.0, (0, 3, 0)),
            (-C, (0, 2, 1)),
            (-0.5, (1, 2, 0)),
            (0.0, (1, 1, 1)),
            (0.5, (2, 1, 0)),
            (C, (2, 0, 1)),
            (2.0, (3, 0, 0)),
        ];
        for (u, want) in cases {
            let d = null_space_decomposition(&model, u, 1e-12).unwrap();
            assert_eq!(d.dims(), want, "u = {u}");
            assert_eq!(d.linv_images.len(), d.x_zero.len());
        }
    }

    #[test]
    fn nte_decomposition() {
        let model = KineticModel::new(ModelKind::Nte);
        let d = null_space_decomposition(&model, 0.0, 1e-12).unwrap();
        assert_eq!(d.dims(), (0, 0, 1));
        assert!(matches!(
            null_space_decomposition(&model, 0.3, 1e-12),
            Err(ModelError::UnsupportedShift(_))
        ));
    }

    #[test]
    fn ambiguous_classification_detected() {
        let model = KineticModel::new(ModelKind::Bgk);
        let u = C + 5e-12;
        assert!(matches!(
            null_space_decomposition(&model, u, 1e-12),
            Err(ModelError::AmbiguousClassification { .. })
        ));
    }

    #[test]
    fn decomposition_invariants() {
        // orthonormality, flux-bracket diagonality and sign pattern
        let model = KineticModel::new(ModelKind::Bgk);
        for &u in &[0.0, 0.5, -C] {
            let d = null_space_decomposition(&model, u, 1e-12).unwrap();
            let all: Vec<(&ClosedFormFn, i32)> = d
                .x_plus
                .iter()
                .map(|(_, x)| (x, 1))
                .chain(d.x_minus.iter().map(|(_, x)| (x, -1)))
                .chain(d.x_zero.iter().map(|(_, x)| (x, 0)))
                .collect();
            for (i, (xi, si)) in all.iter().enumerate() {
                for (j, (xj, _)) in all.iter().enumerate() {
                    let g = oracle::integrate_full_line(0.0, |v| xi.eval(v) * xj.eval(v));
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(g, want, epsilon = 1e-12);
                    let fl =
                        oracle::integrate_full_line(0.0, |v| (v + u) * xi.eval(v) * xj.eval(v));
                    if i != j {
                        assert_abs_diff_eq!(fl, 0.0, epsilon = 1e-12);
                    } else {
                        match si {
                            1 => assert!(fl > 1e-10),
                            -1 => assert!(fl < -1e-10),
                            _ => assert_abs_diff_eq!(fl, 0.0, epsilon = 1e-12),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn linv_images_satisfy_defining_equation() {
        // L(img) = (v+u) X_0 and img is orthogonal to the null space
        let model = KineticModel::new(ModelKind::Bgk);
        for &u in &[0.0, C, -C] {
            let d = null_space_decomposition(&model, u, 1e-12).unwrap();
            for (img, (_, x0)) in d.linv_images.iter().zip(&d.x_zero) {
                let f = |v: f64| img.eval(v);
                let lf = model.apply_l(&f);
                let resid = oracle::integrate_full_line(0.0, |v| {
                    let r = lf(v) - (v + u) * x0.eval(v);
                    r * r
                })
                .sqrt();
                assert!(resid < 1e-12, "u={u}: {resid}");
                for (_, x) in model.null_basis() {
                    let dot = oracle::integrate_full_line(0.0, |v| img.eval(v) * x.eval(v));
                    assert_abs_diff_eq!(dot, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn l_annihilates_null_basis_and_is_idempotent() {
        for kind in [ModelKind::Bgk, ModelKind::Nte] {
            let model = KineticModel::new(kind);
            for (_, x) in model.null_basis() {
                let f = |v: f64| x.eval(v);
                let lf = model.apply_l(&f);
                let resid = model.integrate(|v| lf(v) * lf(v)).sqrt();
                assert!(resid < 1e-12);
            }
            // idempotence on a cubic-times-weight test function
            let probe = match kind {
                ModelKind::Bgk => {
                    ClosedFormFn::new(vec![0.0, 0.0, 0.0, 1.0], GaussFactor::HalfSquare)
                }
                ModelKind::Nte => ClosedFormFn::new(vec![0.0, 0.0, 0.0, 1.0], GaussFactor::None),
            };
            let f = |v: f64| probe.eval(v);
            let lf = model.apply_l(&f);
            let llf = model.apply_l(&lf);
            let resid = model.integrate(|v| (llf(v) - lf(v)).powi(2)).sqrt();
            assert!(resid < 1e-12, "{kind:?}: {resid}");
        }
    }

    #[test]
    fn nte_l_fixes_mean_zero_functions() {
        let model = KineticModel::new(ModelKind::Nte);
        let f = |v: f64| v;
        let lf = model.apply_l(&f);
        for &v in &[-0.9, -0.2, 0.4, 1.0] {
            assert_abs_diff_eq!(lf(v), v, epsilon = 1e-13);
        }
    }

    fn random_test_fn(seed: u64) -> ClosedFormFn {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ClosedFormFn::new(coeffs, GaussFactor::HalfSquare)
    }

    #[test]
    fn l_is_symmetric_and_nonnegative() {
        let model = KineticModel::new(ModelKind::Bgk);
        for seed in 0..8u64 {
            let g = random_test_fn(seed);
            let h = random_test_fn(seed + 100);
            let gf = |v: f64| g.eval(v);
            let hf = |v: f64| h.eval(v);
            let lg = model.apply_l(&gf);
            let lh = model.apply_l(&hf);
            let a = oracle::integrate_full_line(0.0, |v| g.eval(v) * lh(v));
            let b = oracle::integrate_full_line(0.0, |v| lg(v) * h.eval(v));
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            let q = oracle::integrate_full_line(0.0, |v| g.eval(v) * lg(v));
            assert!(q >= -1e-12);
        }
    }

    #[test]
    fn damped_operator_examples() {
        let model = KineticModel::new(ModelKind::Bgk);
        let alpha = 0.1;
        // u = 2: all three chis in the plus family; f = X_{+,1} gives
        // L_d f = alpha gamma (v+u) X since L X = 0
        let d = null_space_decomposition(&model, 2.0, 1e-12).unwrap();
        let x = d.x_plus[0].1.clone();
        let gamma = d.gammas_plus[0];
        let op = DampedOperator::new(model.clone(), d, alpha);
        let f = |v: f64| x.eval(v);
        let g = op.apply(&f);
        for &v in &[-1.0, 0.2, 1.5] {
            assert_abs_diff_eq!(g(v), alpha * gamma * (v + 2.0) * x.eval(v), epsilon = 1e-11);
        }
    }

    #[test]
    fn damped_operator_is_symmetric() {
        let model = KineticModel::new(ModelKind::Bgk);
        let d = null_space_decomposition(&model, 0.5, 1e-12).unwrap();
        let op = DampedOperator::new(model, d, 0.1);
        for seed in 0..4u64 {
            let g = random_test_fn(seed);
            let h = random_test_fn(seed + 50);
            let gf = |v: f64| g.eval(v);
            let hf = |v: f64| h.eval(v);
            let ldg = op.apply(&gf);
            let ldh = op.apply(&hf);
            let a = oracle::integrate_full_line(0.0, |v| g.eval(v) * ldh(v));
            let b = oracle::integrate_full_line(0.0, |v| ldg(v) * h.eval(v));
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn damping_vanishes_on_fully_orthogonal_functions() {
        // an odd cubic Hermite-type function orthogonal to the null space
        // and to every (v+u)-weighted mode at u = 0: L_d f = L f
        let model = KineticModel::new(ModelKind::Bgk);
        let d = null_space_decomposition(&model, 0.0, 1e-12).unwrap();
        let op = DampedOperator::new(model.clone(), d, 0.1);
        // f = (v^5 - c3 v^3 - c1 v) e^{-v^2/2}: orthogonalize against
        // v e^{-v^2/2} and v^3 e^{-v^2/2}... use Hermite H_5(v/sqrt..) o
        // simpler: f odd with <v f, even stuff> handled by parity; pick
        // f = H5-like polynomial so that <f, chi_+> = <f, chi_-> = 0 and
        // <v^2 chi_0, f> = 0, <v chi_0... all brackets vanish by parity or
        // by the Hermite orthogonality (degree 5 vs degree <= 3).
        let h5 = ClosedFormFn::new(
            vec![0.0, 15.0, 0.0, -20.0, 0.0, 4.0],
            GaussFactor::HalfSquare,
        );
        let f = |v: f64| h5.eval(v);
        let lf = model.apply_l(&f);
        let ldf = op.apply(&f);
        for &v in &[-2.0, -0.3, 0.9, 2.2] {
            assert_abs_diff_eq!(ldf(v), lf(v), epsilon = 1e-11);
        }
    }
}

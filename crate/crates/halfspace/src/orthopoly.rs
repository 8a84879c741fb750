//! Three-term recurrence coefficients and Gaussian quadrature for the two
//! weight families the solver needs: shifted half-range Hermite weights
//! `exp(-(v-s)^2)` on `[0, inf)` and the constant weight on `[0, 1]`
//! (shifted Legendre).
//!
//! The half-range Hermite coefficients come from the forward recurrence
//!
//! ```text
//! beta_{n+1}  = n + 1/2 + s*alpha_n - alpha_n^2 - beta_n        (beta_0 = 0)
//! alpha_{n+1} = s - alpha_n + (alpha_0 + ... + alpha_n) / (2 beta_{n+1})
//! ```
//!
//! seeded with `alpha_0 = m1/m0` and the variance form
//! `beta_1 = m2/m0 - (m1/m0)^2`. The recurrence loses about one decimal
//! digit per step, so anything beyond very short tables is carried in
//! scalable software fixed-point arithmetic (see [`crate::extended`]) and
//! rounded to `f64` once at the end.

use crate::extended::{self, Fx};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from table generation, evaluation, and quadrature construction.
#[derive(Debug, Error)]
pub enum OrthoError {
    /// The forward recurrence produced `beta_{n} <= 0`; the table is not
    /// usable at this length in the requested precision.
    #[error("recurrence instability: beta_{n} <= 0; shorten the table or use extended precision")]
    NonPositiveBeta { n: usize },
    #[error("degree {requested} exceeds table length {available}")]
    IndexBeyondTable { requested: usize, available: usize },
    #[error("tridiagonal eigensolver failed to converge on eigenvalue {index}")]
    EigenFailure { index: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Arithmetic used to carry the recurrence.
///
/// `Auto` resolves to `Extended`: the recurrence loses roughly a decimal
/// digit per step, so plain doubles miss the 1e-11 orthonormality target
/// already at degree four. `Double` stays available as an explicit opt-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrecisionMode {
    Double,
    Extended,
    Auto,
}

impl PrecisionMode {
    fn resolve(self) -> PrecisionMode {
        match self {
            PrecisionMode::Auto => PrecisionMode::Extended,
            other => other,
        }
    }
}

/// The first three moments of `exp(-(v-s)^2)` on the half line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub shift: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

/// Correctly rounded `erf` via the extended-precision series.
fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x.abs() > 7.0 {
        return 1.0f64.copysign(x);
    }
    const F: u32 = 160;
    extended::erf(&Fx::from_f64(x, F), F).to_f64()
}

/// Closed forms in `erf` and `exp`:
/// `m0 = sqrt(pi)/2 (1 + erf s)`, `m1 = e^{-s^2}/2 + s m0`,
/// `m2 = (s/2) e^{-s^2} + (1/2 + s^2) m0`.
pub fn gaussian_moments(s: f64) -> GaussianMoments {
    assert!(s.is_finite(), "shift must be finite");
    let m0 = 0.5 * std::f64::consts::PI.sqrt() * (1.0 + erf(s));
    let e = (-s * s).exp();
    let m1 = 0.5 * e + s * m0;
    let m2 = 0.5 * s * e + (0.5 + s * s) * m0;
    GaussianMoments { shift: s, m0, m1, m2 }
}

/// Which weight a table or rule belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    /// `exp(-(v-s)^2)` on `[0, inf)`.
    HalfGaussian,
    /// Constant weight on `[0, 1]`.
    Legendre01,
}

/// Recurrence coefficients of an orthonormal polynomial family.
#[derive(Debug, Clone)]
pub struct RecurrenceTable {
    weight: WeightKind,
    shift: f64,
    m0: f64,
    /// `alpha_0 .. alpha_{n_max}`
    alphas: Vec<f64>,
    /// `beta_1 .. beta_{n_max}`
    betas: Vec<f64>,
    precision: PrecisionMode,
}

impl RecurrenceTable {
    pub fn weight_kind(&self) -> WeightKind {
        self.weight
    }
    pub fn shift(&self) -> f64 {
        self.shift
    }
    /// Total mass of the weight, `int w dv`.
    pub fn m0(&self) -> f64 {
        self.m0
    }
    pub fn n_max(&self) -> usize {
        self.alphas.len() - 1
    }
    pub fn precision_mode(&self) -> PrecisionMode {
        self.precision
    }
    pub fn alpha(&self, n: usize) -> f64 {
        self.alphas[n]
    }
    /// `beta_n` for `n >= 1`.
    pub fn beta(&self, n: usize) -> f64 {
        assert!(n >= 1, "beta is defined for n >= 1");
        self.betas[n - 1]
    }
}

/// Coefficients for `exp(-(v-s)^2)` on the half line.
pub fn half_hermite_recurrence(
    s: f64,
    n_max: usize,
    mode: PrecisionMode,
) -> Result<RecurrenceTable, OrthoError> {
    if !s.is_finite() {
        return Err(OrthoError::InvalidInput("shift must be finite".into()));
    }
    let resolved = mode.resolve();
    let (alphas, betas, m0) = match resolved {
        PrecisionMode::Double => half_hermite_double(s, n_max)?,
        _ => half_hermite_extended(s, n_max)?,
    };
    for (i, &b) in betas.iter().enumerate() {
        if !(b > 0.0) {
            return Err(OrthoError::NonPositiveBeta { n: i + 1 });
        }
    }
    Ok(RecurrenceTable {
        weight: WeightKind::HalfGaussian,
        shift: s,
        m0,
        alphas,
        betas,
        precision: resolved,
    })
}

fn half_hermite_double(s: f64, n_max: usize) -> Result<(Vec<f64>, Vec<f64>, f64), OrthoError> {
    let m = gaussian_moments(s);
    let a0 = m.m1 / m.m0;
    let mut alphas = vec![a0];
    let mut betas = Vec::with_capacity(n_max);
    if n_max >= 1 {
        let b1 = m.m2 / m.m0 - a0 * a0;
        if !(b1 > 0.0) {
            return Err(OrthoError::NonPositiveBeta { n: 1 });
        }
        betas.push(b1);
        let mut sum = a0;
        for n in 1..=n_max {
            let b = betas[n - 1];
            let a = s - alphas[n - 1] + sum / (2.0 * b);
            alphas.push(a);
            sum += a;
            if n < n_max {
                let b_next = n as f64 + 0.5 + s * a - a * a - b;
                if !(b_next > 0.0) {
                    return Err(OrthoError::NonPositiveBeta { n: n + 1 });
                }
                betas.push(b_next);
            }
        }
    }
    Ok((alphas, betas, m.m0))
}

fn half_hermite_extended(s: f64, n_max: usize) -> Result<(Vec<f64>, Vec<f64>, f64), OrthoError> {
    // ~3.6 bits of precision are lost per step; budget generously.
    let f = 256 + 8 * (n_max as u32);
    let sfx = Fx::from_f64(s, f);
    let half = Fx::from_f64(0.5, f);
    let one = Fx::from_u64(1, f);
    let sqrt_pi = extended::pi(f).sqrt();
    let erf_s = extended::erf(&sfx, f);
    let exp_ms2 = extended::exp(&sfx.mul(&sfx).neg(), f);
    let m0 = sqrt_pi.mul(&half).mul(&one.add(&erf_s));
    let m1 = exp_ms2.mul(&half).add(&sfx.mul(&m0));
    let m2 = sfx
        .mul(&half)
        .mul(&exp_ms2)
        .add(&m0.mul(&half.add(&sfx.mul(&sfx))));

    let a0 = m1.div(&m0);
    let mut alphas = vec![a0.clone()];
    let mut betas: Vec<Fx> = Vec::with_capacity(n_max);
    if n_max >= 1 {
        let b1 = m2.div(&m0).sub(&a0.mul(&a0));
        if !b1.is_positive() {
            return Err(OrthoError::NonPositiveBeta { n: 1 });
        }
        betas.push(b1);
        let mut sum = a0;
        for n in 1..=n_max {
            let b = &betas[n - 1];
            let a = sfx.sub(&alphas[n - 1]).add(&sum.div(&b.add(b)));
            sum = sum.add(&a);
            alphas.push(a.clone());
            if n < n_max {
                let b_next = Fx::from_u64(n as u64, f)
                    .add(&half)
                    .add(&sfx.mul(&a))
                    .sub(&a.mul(&a))
                    .sub(b);
                if !b_next.is_positive() {
                    return Err(OrthoError::NonPositiveBeta { n: n + 1 });
                }
                betas.push(b_next);
            }
        }
    }
    Ok((
        alphas.iter().map(Fx::to_f64).collect(),
        betas.iter().map(Fx::to_f64).collect(),
        m0.to_f64(),
    ))
}

/// Coefficients of the orthonormal shifted Legendre family on `[0, 1]`:
/// `alpha_n = 1/2`, `beta_n = n^2 / (4 (4n^2 - 1))`, `m0 = 1`.
pub fn shifted_legendre_recurrence(n_max: usize) -> RecurrenceTable {
    let alphas = vec![0.5; n_max + 1];
    let betas = (1..=n_max)
        .map(|n| {
            let n2 = (n * n) as f64;
            n2 / (4.0 * (4.0 * n2 - 1.0))
        })
        .collect();
    RecurrenceTable {
        weight: WeightKind::Legendre01,
        shift: 0.0,
        m0: 1.0,
        alphas,
        betas,
        precision: PrecisionMode::Double,
    }
}

/// Values `B_0(v) .. B_{n_max}(v)` of the orthonormal family, by the
/// recurrence `sqrt(beta_{n+1}) B_{n+1} = (v - alpha_n) B_n - sqrt(beta_n) B_{n-1}`.
pub fn evaluate_polys(
    table: &RecurrenceTable,
    v: f64,
    n_max: usize,
) -> Result<Vec<f64>, OrthoError> {
    if n_max > table.n_max() {
        return Err(OrthoError::IndexBeyondTable {
            requested: n_max,
            available: table.n_max(),
        });
    }
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0 / table.m0.sqrt());
    if n_max >= 1 {
        out.push((v - table.alphas[0]) * out[0] / table.betas[0].sqrt());
    }
    for n in 1..n_max {
        let b_next = ((v - table.alphas[n]) * out[n] - table.betas[n - 1].sqrt() * out[n - 1])
            / table.betas[n].sqrt();
        out.push(b_next);
    }
    Ok(out)
}

/// Descriptor of the weight a quadrature rule integrates against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDescriptor {
    pub kind: WeightKind,
    pub shift: f64,
    /// A rule scaled by `c` integrates `g` against the weight `w(v/c)` with
    /// nodes and weights both multiplied by `c`.
    pub scale: f64,
}

/// A Gauss rule: `int g(v) w(v) dv ~= sum_i weights[i] g(nodes[i])`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub descriptor: WeightDescriptor,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    /// Substitute `v -> v/c`: the scaled rule integrates against `w(v/c)`.
    pub fn scaled(&self, c: f64) -> QuadratureRule {
        QuadratureRule {
            nodes: self.nodes.iter().map(|x| c * x).collect(),
            weights: self.weights.iter().map(|w| c * w).collect(),
            descriptor: WeightDescriptor {
                scale: self.descriptor.scale * c,
                ..self.descriptor
            },
        }
    }
}

/// Gauss rule from the Jacobi matrix of `table` (nodes = eigenvalues,
/// weights = `m0` times squared first eigenvector components).
pub fn golub_welsch(table: &RecurrenceTable, n_points: usize) -> Result<QuadratureRule, OrthoError> {
    if n_points == 0 {
        return Err(OrthoError::InvalidInput("rule needs at least one point".into()));
    }
    if n_points > table.alphas.len() || n_points - 1 > table.betas.len() {
        return Err(OrthoError::IndexBeyondTable {
            requested: n_points,
            available: table.n_max(),
        });
    }
    let mut diag: Vec<f64> = table.alphas[..n_points].to_vec();
    let mut sub: Vec<f64> = (0..n_points - 1).map(|i| table.betas[i].sqrt()).collect();
    sub.push(0.0);
    let mut first = vec![0.0; n_points];
    first[0] = 1.0;
    tridiag_eigen(&mut diag, &mut sub, &mut first)?;
    let weights: Vec<f64> = first.iter().map(|&z| table.m0 * z * z).collect();
    debug_assert!(weights.iter().all(|&w| w > 0.0));
    Ok(QuadratureRule {
        nodes: diag,
        weights,
        descriptor: WeightDescriptor {
            kind: table.weight,
            shift: table.shift,
            scale: 1.0,
        },
    })
}

/// Symmetric tridiagonal QL with implicit shifts, tracking only the first
/// row of the eigenvector matrix. `d` = diagonal, `e` = subdiagonal (the
/// last entry is scratch), `z` = first-row vector. On return `d` holds the
/// eigenvalues in ascending order and `z` the matching first components.
fn tridiag_eigen(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<(), OrthoError> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                if e[m].abs() <= eps * (d[m].abs() + d[m + 1].abs()) {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            if iter >= 50 {
                return Err(OrthoError::EigenFailure { index: l });
            }
            iter += 1;
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                if f.abs() >= g.abs() {
                    c = g / f;
                    r = c.hypot(1.0);
                    e[i + 1] = f * r;
                    s = 1.0 / r;
                    c *= s;
                } else {
                    s = f / g;
                    r = s.hypot(1.0);
                    e[i + 1] = g * r;
                    c = 1.0 / r;
                    s *= c;
                }
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    // selection sort keeps (node, component) pairs together deterministically
    for i in 0..n {
        let mut k = i;
        for j in i + 1..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            z.swap(i, k);
        }
    }
    Ok(())
}

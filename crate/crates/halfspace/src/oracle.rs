//! Independent verification quadratures.
//!
//! These integrators deliberately avoid the production path (recurrence
//! tables plus Golub-Welsch): they are fixed-coefficient composite
//! Gauss-Legendre panels with adaptive refinement, used by the test suites
//! and by the self-test command to check orthonormality, operator symmetry,
//! and moment identities against something the solver cannot bias.

/// 16-point Gauss-Legendre nodes and weights on [-1, 1] (tabulated
/// constants, not derived from this crate's quadrature machinery).
const GL16: [(f64, f64); 16] = [
    (-0.9894009349916499, 0.027152459411754037),
    (-0.9445750230732326, 0.062253523938647706),
    (-0.8656312023878318, 0.09515851168249259),
    (-0.755404408355003, 0.12462897125553403),
    (-0.6178762444026438, 0.14959598881657676),
    (-0.45801677765722737, 0.16915651939500262),
    (-0.2816035507792589, 0.1826034150449236),
    (-0.09501250983763745, 0.18945061045506859),
    (0.09501250983763745, 0.18945061045506859),
    (0.2816035507792589, 0.1826034150449236),
    (0.45801677765722737, 0.16915651939500262),
    (0.6178762444026438, 0.14959598881657676),
    (0.755404408355003, 0.12462897125553403),
    (0.8656312023878318, 0.09515851168249259),
    (0.9445750230732326, 0.062253523938647706),
    (0.9894009349916499, 0.027152459411754037),
];

/// Composite 16-point Gauss-Legendre over `panels` equal panels of `[a, b]`.
pub fn integrate(a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (x, w) in GL16 {
            total += w * half * f(mid + half * x);
        }
    }
    total
}

/// Adaptive variant: doubles the panel count until two successive
/// refinements agree to `tol` (relative), starting from 16 panels.
pub fn integrate_adaptive(a: f64, b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mut panels = 16;
    let mut prev = integrate(a, b, panels, &mut f);
    for _ in 0..6 {
        panels *= 2;
        let next = integrate(a, b, panels, &mut f);
        if (next - prev).abs() <= tol * next.abs().max(1.0) {
            return next;
        }
        prev = next;
    }
    prev
}

/// `int_0^inf f(v) exp(-(v-s)^2) dv`, truncated where the Gaussian factor
/// is below 1e-60 against any polynomial growth the tests use.
pub fn integrate_half_gaussian(s: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let hi = s.max(0.0) + 14.0;
    integrate(0.0, hi, 96, |v| f(v) * (-(v - s) * (v - s)).exp())
}

/// `int_{-inf}^{inf} f(v) g(v) dv` for integrands that carry Gaussian decay
/// `exp(-v^2/2)` factors themselves (model-function brackets). `center`
/// shifts the truncation window.
pub fn integrate_full_line(center: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    integrate(center - 16.0, center + 16.0, 160, &mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_exact() {
        let got = integrate(0.0, 2.0, 4, |x| 3.0 * x * x);
        assert_abs_diff_eq!(got, 8.0, epsilon = 1e-13);
    }

    #[test]
    fn gaussian_mass() {
        let got = integrate_full_line(0.0, |v| (-v * v).exp());
        assert_abs_diff_eq!(got, std::f64::consts::PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn adaptive_converges() {
        let got = integrate_adaptive(0.0, 1.0, 1e-13, |x| (4.0 * x).sin());
        let want = (1.0 - 4.0f64.cos()) / 4.0;
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }
}

//! Desk-scale invariant suites, shared between `cargo test` and the CLI
//! self-test command. Each suite re-checks a module's contract with the
//! independent verification quadrature where one applies; the whole run
//! stays well under a minute.

use crate::assembly::{BuiltinPhi, GalerkinSystem, IncomingData};
use crate::basis::{BasisKind, BasisSet};
use crate::model::{
    null_space_decomposition, DampedOperator, KineticModel, ModelKind, BGK_SOUND_SPEED,
};
use crate::oracle;
use crate::orthopoly::{self, PrecisionMode};
use crate::postprocess;
use crate::recovery::{build_auxiliary, recover};
use crate::spectral::HalfSpaceSolver;
use std::sync::Arc;

/// Tunables for fault injection; defaults reproduce the production setup.
#[derive(Debug, Clone, Copy)]
pub struct SelftestOptions {
    pub alpha: f64,
    pub tol_zero: f64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            alpha: 0.1,
            tol_zero: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
}

struct Checker {
    details: Vec<String>,
    passed: bool,
}

impl Checker {
    fn new() -> Self {
        Checker {
            details: vec![],
            passed: true,
        }
    }

    fn check(&mut self, what: &str, ok: bool, detail: String) {
        if !ok {
            self.passed = false;
        }
        self.details
            .push(format!("{} {what}: {detail}", if ok { "ok  " } else { "FAIL" }));
    }

    fn fail(&mut self, what: &str, detail: String) {
        self.passed = false;
        self.details.push(format!("FAIL {what}: {detail}"));
    }

    fn report(self, name: &'static str) -> SuiteReport {
        SuiteReport {
            name,
            passed: self.passed,
            details: self.details,
        }
    }
}

fn bgk_solver(n: usize, u: f64, opts: &SelftestOptions) -> Result<HalfSpaceSolver, crate::Error> {
    let basis = BasisSet::build(BasisKind::BgkHalfHermite, n, u)?;
    let model = KineticModel::new(ModelKind::Bgk);
    let d = null_space_decomposition(&model, u, 1e-12)?;
    let op = DampedOperator::new(model, d, opts.alpha);
    let sys = GalerkinSystem::build(basis, op, 2 * n + 8, 64)?;
    Ok(HalfSpaceSolver::with_tolerances(sys, opts.tol_zero, 1e-6)?)
}

fn nte_solver(n: usize, opts: &SelftestOptions) -> Result<HalfSpaceSolver, crate::Error> {
    let basis = BasisSet::build(BasisKind::NteLegendre, n, 0.0)?;
    let model = KineticModel::new(ModelKind::Nte);
    let d = null_space_decomposition(&model, 0.0, 1e-12)?;
    let op = DampedOperator::new(model, d, opts.alpha);
    let sys = GalerkinSystem::build(basis, op, 2 * n + 8, 64)?;
    Ok(HalfSpaceSolver::with_tolerances(sys, opts.tol_zero, 1e-6)?)
}

fn orthopoly_suite() -> SuiteReport {
    let mut c = Checker::new();
    match orthopoly::half_hermite_recurrence(0.0, 12, PrecisionMode::Extended) {
        Ok(t) => {
            let mut worst: f64 = 0.0;
            for i in 0..=12usize {
                for j in i..=12 {
                    let val = oracle::integrate_half_gaussian(0.0, |v| {
                        let b = orthopoly::evaluate_polys(&t, v, 12).unwrap();
                        b[i] * b[j]
                    });
                    let want = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((val - want).abs());
                }
            }
            c.check("orthonormality n<=12", worst < 1e-11, format!("{worst:.2e}"));
            let q = orthopoly::golub_welsch(&t, 10).unwrap();
            let got = q.integrate(|v| v.powi(5));
            c.check(
                "10-point rule on degree 5",
                (got - 1.0).abs() < 1e-13,
                format!("{:.2e}", (got - 1.0).abs()),
            );
        }
        Err(e) => c.fail("table generation", e.to_string()),
    }
    c.report("orthopoly")
}

fn basis_suite() -> SuiteReport {
    let mut c = Checker::new();
    for (kind, u) in [
        (BasisKind::BgkHalfHermite, 0.5),
        (BasisKind::NteLegendre, 0.0),
    ] {
        let b = match BasisSet::build(kind, 10, u) {
            Ok(b) => b,
            Err(e) => {
                c.fail("basis build", e.to_string());
                continue;
            }
        };
        let (lo, hi) = match kind {
            BasisKind::BgkHalfHermite => (-u - 14.0, -u + 14.0),
            BasisKind::NteLegendre => (-1.0, 1.0),
        };
        let mut worst: f64 = 0.0;
        for i in 1..=b.len() {
            for j in i..=b.len() {
                let val = oracle::integrate(lo, hi, 96, |v| {
                    let p = b.eval(v).unwrap();
                    p[i - 1] * p[j - 1]
                });
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((val - want).abs());
            }
        }
        c.check(
            match kind {
                BasisKind::BgkHalfHermite => "gram identity (half-Hermite)",
                BasisKind::NteLegendre => "gram identity (Legendre)",
            },
            worst < 1e-11,
            format!("{worst:.2e}"),
        );
    }
    c.report("basis")
}

fn model_suite() -> SuiteReport {
    let mut c = Checker::new();
    let model = KineticModel::new(ModelKind::Bgk);
    let cs = BGK_SOUND_SPEED;
    let cases = [
        (-2.0, (0, 3, 0)),
        (-cs, (0, 2, 1)),
        (-0.5, (1, 2, 0)),
        (0.0, (1, 1, 1)),
        (0.5, (2, 1, 0)),
        (cs, (2, 0, 1)),
        (2.0, (3, 0, 0)),
    ];
    let mut ok = true;
    for (u, want) in cases {
        match null_space_decomposition(&model, u, 1e-12) {
            Ok(d) if d.dims() == want => {}
            other => {
                ok = false;
                c.fail("classification", format!("u={u}: {other:?}"));
            }
        }
    }
    if ok {
        c.check("seven-case classification", true, "all rows".into());
    }
    // coercivity proxy: <f, L_d f> > 0 on random basis combinations
    let d = null_space_decomposition(&model, 0.0, 1e-12).unwrap();
    let op = DampedOperator::new(model, d, 0.1);
    let basis = BasisSet::build(BasisKind::BgkHalfHermite, 10, 0.0).unwrap();
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut rand = || {
        // xorshift-style deterministic noise, plenty for a sign check
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut min_quad = f64::INFINITY;
    for _ in 0..100 {
        let coeffs: Vec<f64> = (0..basis.len()).map(|_| rand()).collect();
        let f = |v: f64| -> f64 {
            basis
                .eval(v)
                .unwrap()
                .iter()
                .zip(&coeffs)
                .map(|(p, c)| p * c)
                .sum()
        };
        let ldf = op.apply(&f);
        let q = oracle::integrate(-14.0, 14.0, 96, |v| f(v) * ldf(v));
        min_quad = min_quad.min(q);
    }
    c.check(
        "damped coercivity proxy",
        min_quad > 0.0,
        format!("min quadratic form {min_quad:.2e}"),
    );
    c.report("model")
}

fn assembly_suite(opts: &SelftestOptions) -> SuiteReport {
    let mut c = Checker::new();
    let cs = BGK_SOUND_SPEED;
    for &u in &[-2.0, -cs, -0.5, 0.0, 0.5, cs, 2.0] {
        let basis = BasisSet::build(BasisKind::BgkHalfHermite, 8, u).unwrap();
        let model = KineticModel::new(ModelKind::Bgk);
        let d = null_space_decomposition(&model, u, 1e-12).unwrap();
        let op = DampedOperator::new(model, d, opts.alpha);
        match GalerkinSystem::build(basis, op, 24, 64) {
            Ok(sys) => {
                let asym = (sys.a_matrix() - sys.a_matrix().transpose()).amax();
                c.check(
                    "A symmetric",
                    asym < 1e-13,
                    format!("u={u}: {asym:.2e}"),
                );
                let bsym = (sys.b_matrix() - sys.b_matrix().transpose()).amax();
                c.check(
                    "B symmetric, factorizable",
                    bsym < 1e-13,
                    format!("u={u}: {bsym:.2e}"),
                );
            }
            Err(e) => c.fail("assembly", format!("u={u}: {e}")),
        }
    }
    c.report("assembly")
}

fn spectral_suite(opts: &SelftestOptions) -> SuiteReport {
    let mut c = Checker::new();
    match bgk_solver(8, 0.5, opts) {
        Ok(s) => {
            let e = s.eigen();
            c.check(
                "signature (8, 8, 1)",
                (e.n_pos, e.n_neg, e.n_zero) == (8, 8, 1),
                format!("({}, {}, {})", e.n_pos, e.n_neg, e.n_zero),
            );
            match s.solve(IncomingData::Builtin(BuiltinPhi::ChiPlus)) {
                Ok(sol) => {
                    c.check(
                        "constraint residual",
                        sol.constraint_residual < 1e-9,
                        format!("{:.2e}", sol.constraint_residual),
                    );
                    c.check(
                        "boundary residual",
                        sol.boundary_residual < 1e-9,
                        format!("{:.2e}", sol.boundary_residual),
                    );
                }
                Err(e) => c.fail("damped solve", e.to_string()),
            }
        }
        Err(e) => c.fail("solver construction", e.to_string()),
    }
    c.report("spectral")
}

fn recovery_suite(opts: &SelftestOptions) -> SuiteReport {
    let mut c = Checker::new();
    match bgk_solver(12, 0.5, opts) {
        Ok(s) => match build_auxiliary(&s) {
            Ok(aux) => {
                let aux = Arc::new(aux);
                let f = s.solve(IncomingData::Builtin(BuiltinPhi::VCubed)).unwrap();
                let scale = f.a0.amax().max(1.0);
                let rec = recover(f, aux).unwrap();
                let mut worst: f64 = 0.0;
                for &x in &[0.0, 0.5, 1.0, 5.0] {
                    let m = rec.difference_moments_at(x);
                    for v in m.plus.iter().chain(&m.minus).chain(&m.zero).chain(&m.linv) {
                        worst = worst.max(v.abs());
                    }
                }
                c.check(
                    "flux moments of f - g vanish",
                    worst < 1e-8 * scale,
                    format!("{worst:.2e}"),
                );
            }
            Err(e) => c.fail("auxiliary build", e.to_string()),
        },
        Err(e) => c.fail("solver construction", e.to_string()),
    }
    c.report("recovery")
}

fn postprocess_suite(opts: &SelftestOptions) -> SuiteReport {
    let mut c = Checker::new();
    match chandrasekhar_moments() {
        Ok((m0, m1)) => {
            c.check(
                "H-function moment identities",
                (m0 - 2.0).abs() < 5e-6 && (m1 - 2.0 / 3.0f64.sqrt()).abs() < 5e-6,
                format!("{:.2e}, {:.2e}", (m0 - 2.0).abs(), (m1 - 2.0 / 3.0f64.sqrt()).abs()),
            );
        }
        Err(e) => c.fail("H-function iteration", e.to_string()),
    }
    match nte_solver(11, opts) {
        Ok(s) => {
            let aux = Arc::new(build_auxiliary(&s).unwrap());
            let f = s.solve(IncomingData::Builtin(BuiltinPhi::V)).unwrap();
            let rec = recover(f, aux).unwrap();
            match postprocess::extrapolation_length(&rec) {
                Ok(len) => {
                    let want = 0.710434523809144;
                    c.check(
                        "extrapolation length (12 modes)",
                        (len - want).abs() < 1e-9,
                        format!("{:.2e}", (len - want).abs()),
                    );
                }
                Err(e) => c.fail("extrapolation length", e.to_string()),
            }
        }
        Err(e) => c.fail("transport solve", e.to_string()),
    }
    c.report("postprocess")
}

fn chandrasekhar_moments() -> Result<(f64, f64), crate::Error> {
    let h = postprocess::chandrasekhar_h(64, 1e-10)?;
    Ok((h.moment0(), h.moment1()))
}

/// Run every suite; any failed check marks its suite failed.
pub fn run_all(opts: SelftestOptions) -> Vec<SuiteReport> {
    vec![
        orthopoly_suite(),
        basis_suite(),
        model_suite(),
        assembly_suite(&opts),
        spectral_suite(&opts),
        recovery_suite(&opts),
        postprocess_suite(&opts),
    ]
}

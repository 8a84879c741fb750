//! Software extended-precision arithmetic for the recurrence-table
//! generation in [`crate::orthopoly`].
//!
//! The forward recurrence for shifted half-range Hermite coefficients is
//! numerically unstable: it loses roughly one decimal digit per step, so no
//! fixed hardware format reaches the table lengths the solver needs. Values
//! here are binary fixed-point numbers `m * 2^-frac_bits` with a `BigInt`
//! mantissa, and the working precision is scaled with the requested table
//! length. Everything is rounded to `f64` once, at the very end.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

/// Fixed-point number `m * 2^-f`. All operands of a binary op must share `f`.
#[derive(Clone, Debug)]
pub(crate) struct Fx {
    m: BigInt,
    f: u32,
}

fn rshift_round(x: &BigInt, k: u32) -> BigInt {
    if k == 0 {
        return x.clone();
    }
    let half = BigInt::from(1) << (k - 1);
    if x.is_negative() {
        -((-x + half) >> k)
    } else {
        (x + half) >> k
    }
}

impl Fx {
    pub fn zero(f: u32) -> Self {
        Fx {
            m: BigInt::zero(),
            f,
        }
    }

    pub fn from_u64(v: u64, f: u32) -> Self {
        Fx {
            m: BigInt::from(v) << f,
            f,
        }
    }

    pub fn from_f64(v: f64, f: u32) -> Self {
        assert!(v.is_finite());
        if v == 0.0 {
            return Fx::zero(f);
        }
        let bits = v.to_bits();
        let neg = bits >> 63 == 1;
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        // subnormals have exp == 0 and no implicit leading bit
        let (mant, e) = if exp == 0 {
            (frac, -1074i64)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        let shift = f as i64 + e;
        let mut m = BigInt::from(mant);
        if shift >= 0 {
            m <<= shift as u32;
        } else {
            m = rshift_round(&m, (-shift) as u32);
        }
        if neg {
            m = -m;
        }
        Fx { m, f }
    }

    pub fn to_f64(&self) -> f64 {
        if self.m.is_zero() {
            return 0.0;
        }
        let neg = self.m.is_negative();
        let a = self.m.abs();
        let bits = a.bits();
        let val = if bits <= 53 {
            a.to_f64().unwrap() * 2f64.powi(-(self.f as i32))
        } else {
            let shift = (bits - 53) as u32;
            let top = rshift_round(&a, shift).to_f64().unwrap();
            top * 2f64.powi(shift as i32 - self.f as i32)
        };
        if neg {
            -val
        } else {
            val
        }
    }

    pub fn is_positive(&self) -> bool {
        self.m.is_positive()
    }

    pub fn neg(&self) -> Self {
        Fx {
            m: -&self.m,
            f: self.f,
        }
    }

    pub fn add(&self, o: &Fx) -> Self {
        debug_assert_eq!(self.f, o.f);
        Fx {
            m: &self.m + &o.m,
            f: self.f,
        }
    }

    pub fn sub(&self, o: &Fx) -> Self {
        debug_assert_eq!(self.f, o.f);
        Fx {
            m: &self.m - &o.m,
            f: self.f,
        }
    }

    pub fn mul(&self, o: &Fx) -> Self {
        debug_assert_eq!(self.f, o.f);
        Fx {
            m: rshift_round(&(&self.m * &o.m), self.f),
            f: self.f,
        }
    }

    pub fn div(&self, o: &Fx) -> Self {
        debug_assert_eq!(self.f, o.f);
        assert!(!o.m.is_zero(), "fixed-point division by zero");
        Fx {
            m: (&self.m << self.f) / &o.m,
            f: self.f,
        }
    }

    pub fn div_u64(&self, d: u64) -> Self {
        Fx {
            m: &self.m / BigInt::from(d),
            f: self.f,
        }
    }

    /// Square root of a non-negative value (integer Newton via `BigInt::sqrt`).
    pub fn sqrt(&self) -> Self {
        assert!(!self.m.is_negative(), "sqrt of negative fixed-point value");
        Fx {
            m: (&self.m << self.f).sqrt(),
            f: self.f,
        }
    }

    /// Scale by 2^k.
    fn scale2(&self, k: i64) -> Self {
        let m = if k >= 0 {
            &self.m << k as u32
        } else {
            rshift_round(&self.m, (-k) as u32)
        };
        Fx { m, f: self.f }
    }

    fn with_frac_bits(&self, f: u32) -> Self {
        if f >= self.f {
            Fx {
                m: &self.m << (f - self.f),
                f,
            }
        } else {
            Fx {
                m: rshift_round(&self.m, self.f - f),
                f,
            }
        }
    }
}

/// Sum of `(-1)^k / ((2k+1) x^(2k+1))`, the Gregory series for atan(1/x).
fn atan_inv(x: u64, f: u32) -> Fx {
    let xsq = BigInt::from(x) * BigInt::from(x);
    let mut power = (BigInt::from(1) << f) / BigInt::from(x);
    let mut sum = power.clone();
    let mut k = 1u64;
    while !power.is_zero() {
        power /= &xsq;
        if power.is_zero() {
            break;
        }
        let term = &power / BigInt::from(2 * k + 1);
        if k % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
        k += 1;
    }
    Fx { m: sum, f }
}

/// pi by the Machin formula, exact integer series.
pub(crate) fn pi(f: u32) -> Fx {
    let g = f + 32;
    let a = atan_inv(5, g);
    let b = atan_inv(239, g);
    let m = BigInt::from(16) * &a.m - BigInt::from(4) * &b.m;
    Fx { m, f: g }.with_frac_bits(f)
}

/// ln 2 = 2 atanh(1/3), exact integer series.
pub(crate) fn ln2(f: u32) -> Fx {
    let g = f + 32;
    let mut power = (BigInt::from(2) << g) / BigInt::from(3);
    let mut sum = power.clone();
    let mut k = 1u64;
    while !power.is_zero() {
        power /= BigInt::from(9);
        if power.is_zero() {
            break;
        }
        sum += &power / BigInt::from(2 * k + 1);
        k += 1;
    }
    Fx { m: sum, f: g }.with_frac_bits(f)
}

/// exp(x) with ln2 argument reduction and a Taylor tail.
pub(crate) fn exp(x: &Fx, f: u32) -> Fx {
    let g = f + 64;
    let xg = x.with_frac_bits(g);
    let l2 = ln2(g);
    let k = (x.to_f64() / std::f64::consts::LN_2).round() as i64;
    let r = xg.sub(&Fx::from_f64(k as f64, g).mul(&l2));
    let mut term = Fx::from_u64(1, g);
    let mut sum = term.clone();
    for i in 1..1000u64 {
        term = term.mul(&r).div_u64(i);
        if term.m.is_zero() {
            break;
        }
        sum = sum.add(&term);
    }
    sum.scale2(k).with_frac_bits(f)
}

/// erf(x) by its Maclaurin series, with guard precision sized to the
/// cancellation (the largest term is ~e^{x^2} times the result).
pub(crate) fn erf(x: &Fx, f: u32) -> Fx {
    let xd = x.to_f64();
    let guard = (xd * xd * 1.4427).ceil() as u32 + 96;
    let g = f + guard;
    let xg = x.with_frac_bits(g);
    let x2 = xg.mul(&xg);
    let mut p = xg.clone(); // x^(2k+1) (-1)^k / k!
    let mut sum = p.clone(); // k = 0 contribution p/(2k+1) = x
    for k in 1..4000u64 {
        p = p.mul(&x2).div_u64(k).neg();
        let term = p.div_u64(2 * k + 1);
        if term.m.is_zero() {
            break;
        }
        sum = sum.add(&term);
    }
    let two_over_sqrt_pi = Fx::from_u64(2, g).div(&pi(g).sqrt());
    sum.mul(&two_over_sqrt_pi).with_frac_bits(f)
}

//! Exact rational numbers and their text forms.
//!
//! Every solver in this crate works on [`Ratio`] (arbitrary precision). The
//! decimal strings printed by the CLI are produced from the exact value by
//! long division, so they can never drift from the fraction they describe.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Ratio = num_rational::BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse {input:?} as a rational number")]
pub struct ParseRatioError {
    pub input: String,
}

pub fn int(v: i64) -> Ratio {
    Ratio::from_integer(BigInt::from(v))
}

pub fn frac(n: i64, d: i64) -> Ratio {
    Ratio::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `"p/q"`, an integer, or a finite decimal such as `"0.0625"`.
pub fn parse(input: &str) -> Result<Ratio, ParseRatioError> {
    let err = || ParseRatioError {
        input: input.to_string(),
    };
    let s = input.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Ratio::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (whole, fraction) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && fraction.is_empty() {
        return Err(err());
    }
    let digits_ok = |t: &str| t.chars().all(|c| c.is_ascii_digit());
    if !digits_ok(whole) || !digits_ok(fraction) {
        return Err(err());
    }
    let joined = format!("{whole}{fraction}");
    let numer: BigInt = if joined.is_empty() {
        BigInt::zero()
    } else {
        joined.parse().map_err(|_| err())?
    };
    let denom = num_traits::pow(BigInt::from(10), fraction.len());
    let value = Ratio::new(numer, denom);
    Ok(if neg { -value } else { value })
}

/// `p/q` form; integers print without a denominator.
/// Ordering by cross-multiplication; the generic ordering walks a continued
/// fraction and is slow on large operands.
pub fn cmp(a: &Ratio, b: &Ratio) -> std::cmp::Ordering {
    (a.numer() * b.denom()).cmp(&(b.numer() * a.denom()))
}

fn euclid_gcd(a: &BigInt, b: &BigInt) -> BigInt {
    let (mut a, mut b) = (a.abs(), b.abs());
    if a < b {
        std::mem::swap(&mut a, &mut b);
    }
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

/// `n / d` in lowest terms. Euclid's algorithm reduces a long numerator
/// over a short denominator in one division, where the generic constructor
/// takes time proportional to the longer operand's bit length squared.
pub fn quotient(n: BigInt, d: BigInt) -> Ratio {
    assert!(!d.is_zero(), "zero denominator");
    let g = euclid_gcd(&n, &d);
    let (mut n, mut d) = if g.is_one() { (n, d) } else { (n / &g, d / &g) };
    if d.is_negative() {
        n = -n;
        d = -d;
    }
    Ratio::new_raw(n, d)
}

pub fn sub(a: &Ratio, b: &Ratio) -> Ratio {
    if a.denom() == b.denom() {
        return quotient(a.numer() - b.numer(), a.denom().clone());
    }
    quotient(
        a.numer() * b.denom() - b.numer() * a.denom(),
        a.denom() * b.denom(),
    )
}

pub fn mul(a: &Ratio, b: &Ratio) -> Ratio {
    quotient(a.numer() * b.numer(), a.denom() * b.denom())
}

pub fn div(a: &Ratio, b: &Ratio) -> Ratio {
    quotient(a.numer() * b.denom(), a.denom() * b.numer())
}

pub fn to_exact_string(r: &Ratio) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Decimal expansion rounded half-away-from-zero to `places` digits after the
/// point.
pub fn to_decimal_string(r: &Ratio, places: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10), places);
    let scaled = r.abs() * Ratio::from_integer(scale.clone());
    let (q, rem) = scaled.numer().div_rem(scaled.denom());
    let twice = rem * 2u32;
    let rounded = if &twice >= scaled.denom() {
        q + 1u32
    } else {
        q
    };
    let (int_part, frac_part) = rounded.div_rem(&scale);
    let sign = if r.is_negative() && !rounded_is_zero(&int_part, &frac_part) {
        "-"
    } else {
        ""
    };
    if places == 0 {
        return format!("{sign}{int_part}");
    }
    let frac_digits = frac_part.to_string();
    format!(
        "{sign}{int_part}.{}{frac_digits}",
        "0".repeat(places - frac_digits.len())
    )
}

fn rounded_is_zero(a: &BigInt, b: &BigInt) -> bool {
    a.is_zero() && b.is_zero()
}

/// Lossy conversion used only for plotting-style output and statistics.
pub fn to_f64(r: &Ratio) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn sum<'a>(items: impl IntoIterator<Item = &'a Ratio>) -> Ratio {
    items.into_iter().fold(Ratio::zero(), |acc, x| acc + x)
}

/// A rational that (de)serializes as a `"p/q"` string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact(pub Ratio);

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_exact_string(&self.0))
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&to_exact_string(&self.0))
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => parse(&s).map(Exact).map_err(serde::de::Error::custom),
            Raw::Int(v) => Ok(Exact(int(v))),
        }
    }
}

/// Exact value paired with its decimal rendering, for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Number {
    pub exact: String,
    pub decimal: String,
}

pub const DECIMAL_PLACES: usize = 12;

impl From<&Ratio> for Number {
    fn from(r: &Ratio) -> Self {
        Number {
            exact: to_exact_string(r),
            decimal: to_decimal_string(r, DECIMAL_PLACES),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_forms() {
        assert_eq!(parse("15/208").unwrap(), frac(15, 208));
        assert_eq!(parse("3").unwrap(), int(3));
        assert_eq!(parse("0.0625").unwrap(), frac(1, 16));
        assert_eq!(parse("-1.5").unwrap(), frac(-3, 2));
        assert_eq!(parse(".5").unwrap(), frac(1, 2));
        assert!(parse("1/0").is_err());
        assert!(parse("abc").is_err());
        assert!(parse("").is_err());
        assert!(parse(".").is_err());
    }

    #[test]
    fn decimal_rounding() {
        assert_eq!(to_decimal_string(&frac(15, 208), 6), "0.072115");
        assert_eq!(to_decimal_string(&frac(15, 208), 4), "0.0721");
        assert_eq!(to_decimal_string(&frac(1, 2), 0), "1");
        assert_eq!(to_decimal_string(&frac(-1, 8), 2), "-0.13");
        assert_eq!(to_decimal_string(&frac(-1, 1000), 2), "0.00");
        assert_eq!(to_decimal_string(&int(7), 3), "7.000");
    }

    #[test]
    fn exact_string_round_trip() {
        for r in [frac(3, 104), int(0), frac(-7, 3), int(12)] {
            assert_eq!(parse(&to_exact_string(&r)).unwrap(), r);
        }
    }
}

//! Exact rational helpers shared by chain construction, the oracle and the
//! histogram machinery.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// The rational a human most plausibly meant by `x`: the shortest decimal that
/// round-trips to the same double. `0.1` becomes `1/10`, not the dyadic value.
pub fn decimal_rational(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    // Display for f64 never uses exponent notation and is round-trip exact.
    parse_decimal(&format!("{x}")).ok()
}

/// Parses `"3"`, `"-2.50"`, `"1e-3"` or `"7/12"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_decimal(num)?;
        let den = parse_decimal(den)?;
        if den.is_zero() {
            return Err(Error::Parse(format!("zero denominator in `{text}`")));
        }
        return Ok(num / den);
    }
    parse_decimal(text)
}

fn parse_decimal(text: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("`{text}` is not a decimal or rational number"));
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => {
            let exp: i64 = text[pos + 1..].parse().map_err(|_| bad())?;
            (&text[..pos], exp)
        }
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut numer: BigInt = all_digits.parse().map_err(|_| bad())?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i64;
    if scale.unsigned_abs() > 4096 {
        return Err(bad());
    }
    let power = num_traits::pow(BigInt::from(10u32), scale.unsigned_abs() as usize);
    Ok(if scale >= 0 {
        BigRational::from_integer(numer * power)
    } else {
        BigRational::new(numer, power)
    })
}

/// Correctly rounded conversion; non-representable magnitudes saturate.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(if r.is_negative() {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    })
}

/// `"p/q"` for non-integers, `"p"` for integers.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Exact test `value^2 <= bound` for nonnegative `value`.
pub fn square_le(value: &BigRational, bound: &BigRational) -> bool {
    value * value <= *bound
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn decimal_recovers_intended_value() {
        assert_eq!(decimal_rational(0.1).unwrap(), q(1, 10));
        assert_eq!(decimal_rational(0.5).unwrap(), q(1, 2));
        assert_eq!(decimal_rational(-3.0).unwrap(), q(-3, 1));
        assert_eq!(decimal_rational(1e-7).unwrap(), q(1, 10_000_000));
        assert!(decimal_rational(f64::NAN).is_none());
    }

    #[test]
    fn parses_fractions_and_exponents() {
        assert_eq!(parse_rational("7/12").unwrap(), q(7, 12));
        assert_eq!(parse_rational("2.5").unwrap(), q(5, 2));
        assert_eq!(parse_rational("1e-3").unwrap(), q(1, 1000));
        assert_eq!(parse_rational("-0.25/2").unwrap(), q(-1, 8));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn formatting() {
        assert_eq!(format_rational(&q(4, 2)), "2");
        assert_eq!(format_rational(&q(1, 3)), "1/3");
    }

    #[test]
    fn third_rounds_like_float_division() {
        assert_eq!(rational_to_f64(&q(1, 3)), 1.0 / 3.0);
        assert_eq!(rational_to_f64(&q(2, 7)), 2.0 / 7.0);
    }
}

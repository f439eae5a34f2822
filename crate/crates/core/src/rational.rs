//! Exact rational helpers: decimal-string parsing and serde adapters.
//!
//! Every numeric input in the document formats is read as a string (or a JSON
//! integer) and parsed to an exact `BigRational`. Accepted spellings are
//! integers (`2125900`), decimals (`0.01`, `-3.5`, `.5`) and fractions
//! (`1/100`, `-7/6`). Underscores are allowed as digit separators.

use num::{BigInt, BigRational, One, Signed, Zero};

use crate::error::{Error, Result};

pub fn parse_rational(input: &str) -> Result<BigRational> {
    let err = |reason: &str| Error::Number { input: input.to_string(), reason: reason.to_string() };
    let text: String = input.trim().chars().filter(|c| *c != '_').collect();
    if text.is_empty() {
        return Err(err("empty"));
    }
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_decimal(num.trim()).ok_or_else(|| err("bad numerator"))?;
        let den = parse_decimal(den.trim()).ok_or_else(|| err("bad denominator"))?;
        if den.is_zero() {
            return Err(err("zero denominator"));
        }
        return Ok(num / den);
    }
    parse_decimal(&text).ok_or_else(|| err("expected an integer, decimal or fraction"))
}

fn parse_decimal(text: &str) -> Option<BigRational> {
    let (negative, body) = match text.as_bytes().first()? {
        b'-' => (true, &text[1..]),
        b'+' => (false, &text[1..]),
        _ => (false, text),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().ok()?;
    let denom = num::pow(BigInt::from(10u32), frac_part.len());
    let value = BigRational::new(numer, denom);
    Some(if negative { -value } else { value })
}

/// Floor of a rational as a big integer.
pub fn floor_int(q: &BigRational) -> BigInt {
    q.floor().to_integer()
}

/// Round half up (towards +inf on ties).
pub fn round_half_up(q: &BigRational) -> BigInt {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    (q + half).floor().to_integer()
}

/// Fixed-point rendering with `places` decimals, truncating toward zero.
/// Used for human-facing summaries only; stored values stay exact.
pub fn to_decimal_string(q: &BigRational, places: usize) -> String {
    let scale = num::pow(BigInt::from(10u32), places);
    let scaled = (q.abs() * BigRational::from_integer(scale.clone())).trunc().to_integer();
    let int_part = &scaled / &scale;
    let frac_part = &scaled % &scale;
    let sign = if q.is_negative() && !scaled.is_zero() { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part:0>places$}")
    }
}

pub fn to_f64(q: &BigRational) -> f64 {
    use num::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum NumberRepr {
    Text(String),
    Signed(i64),
    Unsigned(u64),
}

impl NumberRepr {
    fn into_rational<E: serde::de::Error>(self) -> std::result::Result<BigRational, E> {
        match self {
            NumberRepr::Text(s) => parse_rational(&s).map_err(E::custom),
            NumberRepr::Signed(i) => Ok(BigRational::from_integer(i.into())),
            NumberRepr::Unsigned(u) => Ok(BigRational::from_integer(u.into())),
        }
    }
}

/// `#[serde(with = "rational::serde_str")]` for a single value.
pub mod serde_str {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(q)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigRational, D::Error> {
        NumberRepr::deserialize(d)?.into_rational()
    }
}

pub mod serde_vec {
    use super::*;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for q in v {
            seq.serialize_element(&q.to_string())?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<BigRational>, D::Error> {
        Vec::<NumberRepr>::deserialize(d)?.into_iter().map(NumberRepr::into_rational).collect()
    }
}

pub mod serde_opt {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match q {
            Some(q) => s.collect_str(q),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<BigRational>, D::Error> {
        Option::<NumberRepr>::deserialize(d)?.map(NumberRepr::into_rational).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn parses_common_spellings() {
        assert_eq!(parse_rational("2125900").unwrap(), q(2125900, 1));
        assert_eq!(parse_rational("0.01").unwrap(), q(1, 100));
        assert_eq!(parse_rational("1/100").unwrap(), q(1, 100));
        assert_eq!(parse_rational("-7/6").unwrap(), q(-7, 6));
        assert_eq!(parse_rational(".5").unwrap(), q(1, 2));
        assert_eq!(parse_rational("15_622_700").unwrap(), q(15622700, 1));
        assert_eq!(parse_rational(" 9.1 ").unwrap(), q(91, 10));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "abc", "1/0", "1.2.3", "-", ".", "1e3", "0x10"] {
            assert!(parse_rational(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn rounding_helpers() {
        assert_eq!(round_half_up(&q(5, 2)), BigInt::from(3));
        assert_eq!(round_half_up(&q(7, 3)), BigInt::from(2));
        assert_eq!(round_half_up(&q(-5, 2)), BigInt::from(-2));
        assert_eq!(floor_int(&q(-1, 3)), BigInt::from(-1));
        assert_eq!(to_decimal_string(&q(124010833, 10000), 2), "12401.08");
        assert_eq!(to_decimal_string(&q(-1, 2), 2), "-0.50");
        assert_eq!(to_decimal_string(&q(3, 1), 0), "3");
    }
}

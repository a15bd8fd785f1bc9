use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Polynomial coefficient: exact rational, or a double once any float enters.
///
/// Arithmetic stays exact while both operands are exact. Serialized as a JSON
/// string (`"p/q"`, `"p"`) when exact and as a JSON number otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum Coeff {
    Exact(BigRational),
    Float(f64),
}

impl Coeff {
    pub fn int(v: i64) -> Self {
        Coeff::Exact(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Coeff::Exact(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// Exact rational with the same value as the double `v`.
    pub fn exact_from_f64(v: f64) -> Result<Self> {
        BigRational::from_float(v)
            .map(Coeff::Exact)
            .ok_or_else(|| Error::invalid(format!("non-finite value {v}")))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Coeff::Exact(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coeff::Exact(r) => r.is_zero(),
            Coeff::Float(f) => *f == 0.0,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Coeff::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Coeff::Float(f) => *f,
        }
    }

    pub fn abs_f64(&self) -> f64 {
        match self {
            Coeff::Exact(r) => r.abs().to_f64().unwrap_or(f64::INFINITY),
            Coeff::Float(f) => f.abs(),
        }
    }

    pub fn zero() -> Self {
        Coeff::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Coeff::Exact(BigRational::one())
    }

    pub fn pow(&self, e: u32) -> Self {
        match self {
            Coeff::Exact(r) => Coeff::Exact(num_traits::pow(r.clone(), e as usize)),
            Coeff::Float(f) => Coeff::Float(f.powi(e as i32)),
        }
    }

    fn combine(
        self,
        rhs: Coeff,
        exact: impl FnOnce(BigRational, BigRational) -> BigRational,
        float: impl FnOnce(f64, f64) -> f64,
    ) -> Coeff {
        match (self, rhs) {
            (Coeff::Exact(a), Coeff::Exact(b)) => Coeff::Exact(exact(a, b)),
            (a, b) => Coeff::Float(float(a.to_f64(), b.to_f64())),
        }
    }
}

impl Add for Coeff {
    type Output = Coeff;
    fn add(self, rhs: Coeff) -> Coeff {
        self.combine(rhs, |a, b| a + b, |a, b| a + b)
    }
}

impl Sub for Coeff {
    type Output = Coeff;
    fn sub(self, rhs: Coeff) -> Coeff {
        self.combine(rhs, |a, b| a - b, |a, b| a - b)
    }
}

impl Mul for Coeff {
    type Output = Coeff;
    fn mul(self, rhs: Coeff) -> Coeff {
        self.combine(rhs, |a, b| a * b, |a, b| a * b)
    }
}

impl Neg for Coeff {
    type Output = Coeff;
    fn neg(self) -> Coeff {
        match self {
            Coeff::Exact(r) => Coeff::Exact(-r),
            Coeff::Float(f) => Coeff::Float(-f),
        }
    }
}

impl fmt::Display for Coeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coeff::Exact(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Coeff::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Coeff::Float(v) => write!(f, "{v:?}"),
        }
    }
}

/// Parses `"p/q"`, `"p"` or a decimal such as `"-1.25e-3"` into an exact rational.
impl FromStr for Coeff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("cannot parse coefficient {s:?}"));
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(Error::invalid(format!("zero denominator in {s:?}")));
            }
            return Ok(Coeff::Exact(BigRational::new(p, q)));
        }
        let (mantissa, exponent) = match s.find(['e', 'E']) {
            Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (negative, digits) = match mantissa.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
        if int_part.is_empty() && frac_part.is_empty()
            || !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let all_digits = format!("{int_part}{frac_part}");
        let mut value = BigRational::from_integer(all_digits.parse::<BigInt>().map_err(|_| bad())?);
        let shift = exponent - frac_part.len() as i32;
        let ten = BigRational::from_integer(BigInt::from(10));
        if shift >= 0 {
            value *= num_traits::pow(ten, shift as usize);
        } else {
            value /= num_traits::pow(ten, (-shift) as usize);
        }
        Ok(Coeff::Exact(if negative { -value } else { value }))
    }
}

impl Serialize for Coeff {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Coeff::Exact(_) => s.serialize_str(&self.to_string()),
            Coeff::Float(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Coeff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct CoeffVisitor;

        impl Visitor<'_> for CoeffVisitor {
            type Value = Coeff;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational string or a number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Coeff, E> {
                v.parse().map_err(|e: Error| E::custom(e.to_string()))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Coeff, E> {
                Ok(Coeff::Float(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Coeff, E> {
                Ok(Coeff::Float(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Coeff, E> {
                Ok(Coeff::Float(v as f64))
            }
        }

        d.deserialize_any(CoeffVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rationals_and_decimals() {
        assert_eq!("3/6".parse::<Coeff>().unwrap(), Coeff::ratio(1, 2));
        assert_eq!("-7".parse::<Coeff>().unwrap(), Coeff::int(-7));
        assert_eq!("0.25".parse::<Coeff>().unwrap(), Coeff::ratio(1, 4));
        assert_eq!("-1.5e-2".parse::<Coeff>().unwrap(), Coeff::ratio(-3, 200));
        assert_eq!("2E3".parse::<Coeff>().unwrap(), Coeff::int(2000));
        assert!("1/0".parse::<Coeff>().is_err());
        assert!("abc".parse::<Coeff>().is_err());
        assert!(".".parse::<Coeff>().is_err());
    }

    #[test]
    fn exactness_propagates() {
        let e = Coeff::ratio(1, 3) + Coeff::ratio(2, 3);
        assert_eq!(e, Coeff::one());
        let f = Coeff::ratio(1, 3) * Coeff::Float(3.0);
        assert!(!f.is_exact());
        assert_eq!(f.to_f64(), 1.0);
    }

    #[test]
    fn exact_from_f64_is_exact() {
        let c = Coeff::exact_from_f64(0.1).unwrap();
        assert_eq!(c.to_f64(), 0.1);
        assert_ne!(c, Coeff::ratio(1, 10));
    }

    #[test]
    fn json_forms() {
        assert_eq!(serde_json::to_string(&Coeff::ratio(-2, 6)).unwrap(), "\"-1/3\"");
        assert_eq!(serde_json::to_string(&Coeff::Float(0.5)).unwrap(), "0.5");
        let back: Coeff = serde_json::from_str("\"-1/3\"").unwrap();
        assert_eq!(back, Coeff::ratio(-1, 3));
        let back: Coeff = serde_json::from_str("2").unwrap();
        assert_eq!(back, Coeff::Float(2.0));
    }
}

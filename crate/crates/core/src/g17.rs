//! JSON float output with 17 significant digits (`%.17g`), so every value
//! written to a corpus, model or report file reads back bit-identically.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// Formats `x` like C's `printf("%.17g", x)`.
pub fn format(x: f64) -> String {
    assert!(x.is_finite(), "non-finite value {x} cannot be written as JSON");
    let sci = std::format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();

    if !(-4..17).contains(&exp) {
        let mut m = std::format!("{}.{}", &digits[..1], &digits[1..]);
        trim_fraction(&mut m);
        let esign = if exp < 0 { '-' } else { '+' };
        return std::format!("{sign}{m}e{esign}{:02}", exp.abs());
    }

    let mut out = if exp >= 0 {
        let point = exp as usize + 1;
        std::format!("{}.{}", &digits[..point], &digits[point..])
    } else {
        std::format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    trim_fraction(&mut out);
    std::format!("{sign}{out}")
}

fn trim_fraction(s: &mut String) {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
}

fn raw(x: f64) -> Box<RawValue> {
    RawValue::from_string(format(x)).expect("formatted float is valid JSON")
}

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    raw(*x).serialize(s)
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        x.map(raw).serialize(s)
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(|x| raw(*x)))
    }
}

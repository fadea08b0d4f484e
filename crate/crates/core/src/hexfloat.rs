//! C99-style hexadecimal floating-point text, used wherever values must
//! round-trip bit-exactly through a text file.

use crate::error::{Error, Result};

/// Formats `x` as a normalized C99 hex literal, e.g. `-0x1.8p+1` for -3.0.
/// Subnormals are written with a `0x0.` mantissa and exponent `-1022`.
pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    if biased == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if biased == 0 { (0, -1022) } else { (1, biased - 1023) };
    let mut digits = format!("{mantissa:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let exp_sign = if exp < 0 { '-' } else { '+' };
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp_sign}{}", exp.abs())
    } else {
        format!("{sign}0x{lead}.{digits}p{exp_sign}{}", exp.abs())
    }
}

/// Parses a C99 hex literal (optionally signed). Decimal text is rejected so
/// that a file cannot silently lose exactness.
pub fn parse(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    match s {
        "nan" => return Ok(f64::NAN),
        "inf" | "+inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    hexf_parse::parse_hexf64(s, false).map_err(|e| format!("{s:?}: {e}"))
}

pub(crate) fn parse_at(s: &str, line: usize) -> Result<f64> {
    parse(s).map_err(|msg| Error::Parse { line, msg })
}

/// Formats a slice as `[h, h, ...]`.
pub fn format_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| format(x)).collect();
    format!("[{}]", parts.join(","))
}

pub fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| format!("expected bracketed list, got {s:?}"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(parse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(format(1.0), "0x1p+0");
        assert_eq!(format(-3.0), "-0x1.8p+1");
        assert_eq!(format(0.1), "0x1.999999999999ap-4");
        assert_eq!(format(-0.0), "-0x0p+0");
        assert_eq!(parse("0x1.8p+1").unwrap(), 3.0);
    }

    #[test]
    fn rejects_decimal() {
        assert!(parse("1.5").is_err());
    }

    #[test]
    fn subnormal_round_trip() {
        let x = f64::from_bits(1);
        assert_eq!(parse(&format(x)).unwrap().to_bits(), 1);
    }

    proptest! {
        #[test]
        fn round_trip_bits(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = parse(&format(x)).unwrap();
            prop_assert_eq!(back.to_bits(), bits);
        }
    }
}

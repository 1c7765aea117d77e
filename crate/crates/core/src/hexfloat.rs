//! Hexadecimal floating-point literals, e.g. `-0x1.8p+1` for `-3.0`.
//!
//! [`format`] writes the shortest exact form; [`parse`] accepts any literal
//! whose value is exactly representable and rejects the rest, so a
//! write/read cycle is bit-exact for every `f64` including `-0.0`, the
//! subnormals, infinities and NaN (written `nan`, payload not preserved).

const MANTISSA_BITS: u32 = 52;
const MANTISSA_MASK: u64 = (1 << MANTISSA_BITS) - 1;
const EXP_BIAS: i64 = 1023;

pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let biased = ((bits >> MANTISSA_BITS) & 0x7ff) as i64;
    let mantissa = bits & MANTISSA_MASK;
    if biased == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if biased == 0 { (0, 1 - EXP_BIAS) } else { (1, biased - EXP_BIAS) };
    let digits = format!("{mantissa:013x}");
    let digits = digits.trim_end_matches('0');
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{exp:+}")
    }
}

pub fn parse(s: &str) -> Result<f64, String> {
    let (negative, body) = match s.as_bytes().first() {
        Some(b'-') => (true, &s[1..]),
        Some(b'+') => (false, &s[1..]),
        _ => (false, s),
    };
    let signed = |v: f64| if negative { -v } else { v };
    match body {
        "inf" => return Ok(signed(f64::INFINITY)),
        "nan" => return Ok(f64::NAN),
        _ => {}
    }
    let body = body
        .strip_prefix("0x")
        .or_else(|| body.strip_prefix("0X"))
        .ok_or_else(|| format!("'{s}' is not a hexadecimal float"))?;
    let (significand, exponent) = body
        .split_once(['p', 'P'])
        .ok_or_else(|| format!("'{s}' lacks a binary exponent"))?;
    let exponent: i64 = exponent.parse().map_err(|_| format!("bad exponent in '{s}'"))?;
    let (int_part, frac_part) = significand.split_once('.').unwrap_or((significand, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(format!("'{s}' has no digits"));
    }

    // value = mantissa · 2^(exponent − 4·frac_digits), mantissa an integer.
    let mut mantissa: u128 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        let digit = c.to_digit(16).ok_or_else(|| format!("bad digit '{c}' in '{s}'"))?;
        if mantissa >> 120 != 0 {
            return Err(format!("'{s}' has too many significant digits"));
        }
        mantissa = (mantissa << 4) | digit as u128;
    }
    if mantissa == 0 {
        return Ok(signed(0.0));
    }
    let scale = exponent - 4 * frac_part.len() as i64;
    let top = 127 - mantissa.leading_zeros() as i64;
    // Exponent of the leading bit.
    let lead_exp = scale + top;
    if lead_exp > EXP_BIAS {
        return Err(format!("'{s}' overflows f64"));
    }
    let bits = if lead_exp >= 1 - EXP_BIAS {
        let field = shift_exact(mantissa, MANTISSA_BITS as i64 - top).ok_or_else(|| inexact(s))?;
        (((lead_exp + EXP_BIAS) as u64) << MANTISSA_BITS) | (field as u64 & MANTISSA_MASK)
    } else {
        // Subnormal: value = field · 2^−1074.
        let field = shift_exact(mantissa, scale + 1074).ok_or_else(|| inexact(s))?;
        field as u64
    };
    Ok(signed(f64::from_bits(bits)))
}

fn inexact(s: &str) -> String {
    format!("'{s}' is not exactly representable as f64")
}

/// `m · 2^shift`, or `None` when a right shift would drop set bits.
fn shift_exact(m: u128, shift: i64) -> Option<u128> {
    if shift >= 0 {
        Some(m << shift)
    } else {
        let s = (-shift) as u32;
        if s >= 128 || m & ((1u128 << s) - 1) != 0 {
            None
        } else {
            Some(m >> s)
        }
    }
}

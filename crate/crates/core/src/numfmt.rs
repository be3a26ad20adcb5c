//! Decimal formatting with 17 significant digits, enough to round-trip any
//! `f64` through text exactly.

/// Formats `x` with 17 significant digits.
///
/// Plain notation for decimal exponents in `[-5, 17)`, scientific otherwise;
/// trailing zeros are kept so the digit count is fixed. Non-finite values
/// print as `inf`, `-inf` and `NaN`.
pub fn sig17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0000000000000000".into() } else { "0.0000000000000000".into() };
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci.split_once('e').expect("scientific format").1.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        return sci;
    }
    let decimals = (16 - exp).max(0) as usize;
    let plain = format!("{x:.decimals$}");
    // Rounding at the fixed position can differ from the scientific form only
    // when a carry bumps the exponent; fall back then.
    let digits = plain.chars().filter(char::is_ascii_digit).skip_while(|c| *c == '0').count();
    if digits == 17 {
        plain
    } else {
        sci
    }
}

//! `%g`-style number formatting for emitted tables.

/// Format `v` with `digits` significant digits the way C's `%.{digits}g`
/// does: fixed notation unless the decimal exponent is below -4 or at least
/// `digits`, trailing zeros removed. Non-finite values print as `inf`,
/// `-inf` and `nan`, which pgfplots and numpy both read.
pub fn format_sig(v: f64, digits: usize) -> String {
    assert!(digits >= 1, "need at least one significant digit");
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

//! Decimal formatting with a fixed number of significant digits, `%.9g` style.

/// Formats `x` with 9 significant digits, trailing zeros trimmed.
pub fn sig9(x: f64) -> String {
    sig(x, 9)
}

pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let precision = digits.max(1) - 1;
    let sci = format!("{:.*e}", precision, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..digits as i32).contains(&exp) {
        let decimals = (precision as i32 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

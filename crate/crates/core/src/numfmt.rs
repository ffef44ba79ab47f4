//! `%g`-style float rendering with a fixed number of significant digits.

/// Render `x` with `sig` significant digits, C `%g` style: fixed notation
/// when the decimal exponent is in `[-4, sig)`, scientific otherwise, and
/// trailing zeros removed. Infinities render as `inf` / `-inf`.
pub fn format_sig(x: f64, sig: usize) -> String {
    let sig = sig.max(1);
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // the exponent after rounding to `sig` digits decides the notation
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.unsigned_abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::format_sig;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (0.2083333333, "0.208333"),
            (0.6522774424948339, "0.652277"),
            (3.3333333333, "3.33333"),
            (1.0, "1"),
            (-1.0, "-1"),
            (0.12, "0.12"),
            (1.1, "1.1"),
            (123456.7, "123457"),
            (1234567.0, "1.23457e+06"),
            (0.0000123456789, "1.23457e-05"),
            (0.000001, "1e-06"),
            (0.0001, "0.0001"),
            (999999.5, "1e+06"),
            (0.0, "0"),
            (f64::INFINITY, "inf"),
        ];
        for (x, want) in cases {
            assert_eq!(format_sig(x, 6), want, "{x}");
        }
    }
}

//! Number formatting for CSV output.

/// Format `x` with `digits` significant digits, `%g`-style: fixed notation
/// for moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
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
    use super::sig;

    #[test]
    fn matches_printf_g() {
        assert_eq!(sig(0.741434838945, 9), "0.741434839");
        assert_eq!(sig(49.0, 9), "49");
        assert_eq!(sig(1.0, 9), "1");
        assert_eq!(sig(0.0, 9), "0");
        assert_eq!(sig(1234567891.0, 9), "1.23456789e9");
        assert_eq!(sig(0.00001234, 9), "1.234e-5");
        assert_eq!(sig(0.0001234, 9), "0.0001234");
        assert_eq!(sig(-21.91923844, 4), "-21.92");
        assert_eq!(sig(99999.99999, 3), "1e5");
    }

    #[test]
    fn round_trips_at_seventeen_digits() {
        for x in [0.1, 1.0 / 3.0, 0.741434838945163, 6.02e23, 1e-300] {
            assert_eq!(sig(x, 17).parse::<f64>().unwrap(), x);
        }
    }
}

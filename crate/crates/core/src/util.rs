//! Small shared helpers.

/// Format a float with six significant digits, stable across platforms.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let s = format!("{v:.5e}");
    // Render small-exponent values in plain notation for readability.
    let exp: i32 = s.split('e').nth(1).unwrap().parse().unwrap();
    if (-4..=6).contains(&exp) {
        let digits = (5 - exp).max(0) as usize;
        let plain = format!("{v:.digits$}");
        // Trim trailing zeros but keep at least one digit.
        let trimmed = plain.trim_end_matches('0').trim_end_matches('.');
        if trimmed.is_empty() || trimmed == "-" {
            "0".into()
        } else {
            trimmed.to_string()
        }
    } else {
        s
    }
}

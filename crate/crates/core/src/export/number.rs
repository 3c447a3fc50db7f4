//! Shortest round-trip number formatting for text exports.

/// Formats `v` with the fewest digits that parse back to the same value,
/// using plain notation for magnitudes in [1e-6, 1e21) and exponent
/// notation (`1.5e-7`, `2e+21`) otherwise. Negative zero prints as `0`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".to_string()
        } else if v > 0.0 {
            "Infinity".to_string()
        } else {
            "-Infinity".to_string()
        };
    }
    let magnitude = v.abs();
    if (1e-6..1e21).contains(&magnitude) {
        format!("{v}")
    } else {
        let s = format!("{v:e}");
        match s.split_once('e') {
            Some((mantissa, exp)) if !exp.starts_with('-') => format!("{mantissa}e+{exp}"),
            _ => s,
        }
    }
}

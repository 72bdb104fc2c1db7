//! Small shared helpers.

/// Formats a float with 17 significant digits, enough for an exact
/// `f64` round trip, so identical runs produce byte-identical CSV output.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

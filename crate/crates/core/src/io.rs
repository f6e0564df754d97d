//! Output formatting shared by the CSV writers.

/// Scientific notation with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

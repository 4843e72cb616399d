//! Round-trip-exact decimal formatting for f64.
//!
//! 17 significant digits uniquely identify every finite f64, so text
//! produced here parses back to the original bits. Used by the dataset CSV
//! format and the wire protocol.

use std::fmt::Write as _;

/// Formats with 17 significant digits in scientific notation.
pub fn format_f64_17(v: f64) -> String {
    let mut s = String::with_capacity(24);
    write_f64_17(&mut s, v);
    s
}

/// Appends the 17-significant-digit form of `v` to `out`.
pub fn write_f64_17(out: &mut String, v: f64) {
    debug_assert!(v.is_finite(), "formatting non-finite value");
    write!(out, "{v:.16e}").expect("write to String");
}

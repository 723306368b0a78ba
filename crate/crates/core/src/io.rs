//! Number formatting shared by the CSV writers.

use crate::error::{Error, Result};

/// 17 significant digits, which round-trips every `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 && v.is_sign_positive() {
        "0".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
}

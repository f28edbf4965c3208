//! Serialization of extended reals: JSON has no infinity, so non-finite
//! values are written as the strings "inf", "-inf" and "nan".

use serde::Serializer;

pub fn ext_real<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(ext_str(*v))
    }
}

pub(crate) fn ext_str(v: f64) -> &'static str {
    if v.is_nan() {
        "nan"
    } else if v > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

/// Shortest round-trip decimal, with the same spelling of non-finite values.
pub fn format_ext(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        ext_str(v).to_string()
    }
}

//! Number formatting shared by the JSON and CSV writers.
//!
//! Every float is written with 17 significant digits so that the text
//! round-trips to the same `f64`.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// Formats a float with 17 significant digits. Non-finite values are
/// written as `nan`, `inf` or `-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_owned()
    } else if v > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

/// A float serialized as a 17-significant-digit JSON number (`null` when
/// not finite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(fmt_f64(self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        Num(v)
    }
}

pub fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().copied().map(Num).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.057265427768849, 1e22, 0.0] {
            let text = serde_json::to_string(&Num(v)).unwrap();
            assert_eq!(text.parse::<f64>().unwrap(), v, "{text}");
            assert_eq!(serde_json::from_str::<f64>(&text).unwrap(), v);
        }
        assert_eq!(
            serde_json::to_string(&Num(0.05)).unwrap(),
            "5.0000000000000003e-2"
        );
        assert_eq!(serde_json::to_string(&Num(f64::NAN)).unwrap(), "null");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }
}

use serde::{Deserialize, Serialize};

use super::Tensor4;
use crate::error::{Error, Result};

/// Three homogenized samples spanning one parameter interval. Between the
/// samples every tensor entry is the quadratic Lagrange interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseInterval {
    pub samples: [f64; 3],
    pub tensors: [Tensor4; 3],
}

impl DatabaseInterval {
    pub fn lower(&self) -> f64 {
        self.samples[0]
    }

    pub fn upper(&self) -> f64 {
        self.samples[2]
    }

    fn weights(&self, m: f64) -> ([f64; 3], [f64; 3]) {
        let s = self.samples;
        let mut w = [0.0; 3];
        let mut dw = [0.0; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let den = (s[i] - s[j]) * (s[i] - s[k]);
            w[i] = (m - s[j]) * (m - s[k]) / den;
            dw[i] = ((m - s[j]) + (m - s[k])) / den;
        }
        (w, dw)
    }

    pub fn interpolate(&self, m: f64) -> Tensor4 {
        let (w, _) = self.weights(m);
        w[0] * self.tensors[0] + w[1] * self.tensors[1] + w[2] * self.tensors[2]
    }

    pub fn derivative(&self, m: f64) -> Tensor4 {
        let (_, dw) = self.weights(m);
        dw[0] * self.tensors[0] + dw[1] * self.tensors[1] + dw[2] * self.tensors[2]
    }
}

/// Tabulated homogenized stiffness of one material class as a function of
/// the material parameter `m`, piecewise quadratic over contiguous intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedDatabase {
    pub label: String,
    pub intervals: Vec<DatabaseInterval>,
}

impl HomogenizedDatabase {
    pub fn new(label: impl Into<String>, intervals: Vec<DatabaseInterval>) -> Result<Self> {
        let db = HomogenizedDatabase {
            label: label.into(),
            intervals,
        };
        db.validate()?;
        Ok(db)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(Error::Setup(format!("database `{}` has no intervals", self.label)));
        }
        for (k, iv) in self.intervals.iter().enumerate() {
            let s = iv.samples;
            if !(s[0] < s[1] && s[1] < s[2]) {
                return Err(Error::Setup(format!(
                    "database `{}` interval {k}: samples {s:?} must be strictly increasing",
                    self.label
                )));
            }
            if k > 0 && self.intervals[k - 1].upper() != s[0] {
                return Err(Error::Setup(format!(
                    "database `{}` intervals {} and {k} are not contiguous",
                    self.label,
                    k - 1
                )));
            }
        }
        Ok(())
    }

    pub fn lower(&self) -> f64 {
        self.intervals[0].lower()
    }

    pub fn upper(&self) -> f64 {
        self.intervals[self.intervals.len() - 1].upper()
    }

    fn interval_for(&self, m: f64) -> Result<&DatabaseInterval> {
        let (lo, hi) = (self.lower(), self.upper());
        let slack = 1e-12 * (hi - lo);
        if !(m >= lo - slack && m <= hi + slack) {
            return Err(Error::OutOfRange {
                what: format!("material parameter of `{}`", self.label),
                value: m,
                lower: lo,
                upper: hi,
            });
        }
        Ok(self
            .intervals
            .iter()
            .find(|iv| m <= iv.upper())
            .unwrap_or(&self.intervals[self.intervals.len() - 1]))
    }

    pub fn interp(&self, m: f64) -> Result<Tensor4> {
        Ok(self.interval_for(m)?.interpolate(m))
    }

    pub fn interp_derivative(&self, m: f64) -> Result<Tensor4> {
        Ok(self.interval_for(m)?.derivative(m))
    }
}

/// Quadratic interpolation of the database at `m`.
pub fn interp_database(db: &HomogenizedDatabase, m: f64) -> Result<Tensor4> {
    db.interp(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_db() -> HomogenizedDatabase {
        // entries quadratic in m, so interpolation must be exact
        let f = |m: f64| Tensor4::orthotropic(100.0 + 10.0 * m + 3.0 * m * m, 50.0 - m * m, 20.0 + m, 15.0);
        let s = [-0.6, -0.4, -0.2];
        HomogenizedDatabase::new(
            "q",
            vec![DatabaseInterval {
                samples: s,
                tensors: s.map(f),
            }],
        )
        .unwrap()
    }

    #[test]
    fn reproduces_samples_and_quadratics() {
        let db = quad_db();
        for m in [-0.6, -0.4, -0.2] {
            let t = db.interp(m).unwrap();
            assert!((t.xxxx() - (100.0 + 10.0 * m + 3.0 * m * m)).abs() < 1e-12);
        }
        let m = -0.5;
        let t = db.interp(m).unwrap();
        assert!((t.yyyy() - (50.0 - m * m)).abs() < 1e-12);
        let d = db.interp_derivative(m).unwrap();
        assert!((d.xxxx() - (10.0 + 6.0 * m)).abs() < 1e-11);
        assert!((d.xxyy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outside_range_is_rejected() {
        let db = quad_db();
        assert!(matches!(db.interp(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(db.interp(-0.7), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let db = quad_db();
        let text = serde_json::to_string(&db).unwrap();
        let back: HomogenizedDatabase = serde_json::from_str(&text).unwrap();
        assert_eq!(db, back);
    }
}

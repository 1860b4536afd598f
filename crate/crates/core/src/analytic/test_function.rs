//! Compactly supported nonnegative test functions.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// A nonnegative function with compact support.
///
/// `Sum` with no terms is the zero function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `height · 1_[lo, hi]`.
    Step { lo: f64, hi: f64, height: f64 },
    /// `height · exp(1 − 1/(1 − u²))` for `|u| < 1`, `u = (x − center)/halfwidth`.
    SmoothBump {
        center: f64,
        halfwidth: f64,
        height: f64,
    },
    Sum { terms: Vec<TestFunction> },
}

impl TestFunction {
    pub fn step(lo: f64, hi: f64, height: f64) -> Result<Self> {
        let f = TestFunction::Step { lo, hi, height };
        f.validate()?;
        Ok(f)
    }

    pub fn smooth_bump(center: f64, halfwidth: f64, height: f64) -> Result<Self> {
        let f = TestFunction::SmoothBump {
            center,
            halfwidth,
            height,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn sum(terms: Vec<TestFunction>) -> Result<Self> {
        let f = TestFunction::Sum { terms };
        f.validate()?;
        Ok(f)
    }

    pub fn zero() -> Self {
        TestFunction::Sum { terms: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::Step { lo, hi, height } => {
                ensure_finite("step lo", *lo)?;
                ensure_finite("step hi", *hi)?;
                ensure_positive("step height", *height)?;
                if hi <= lo {
                    return Err(Error::InvalidParameter(format!("step needs lo < hi (got [{lo}, {hi}])")));
                }
                Ok(())
            }
            TestFunction::SmoothBump {
                center,
                halfwidth,
                height,
            } => {
                ensure_finite("bump center", *center)?;
                ensure_positive("bump halfwidth", *halfwidth)?;
                ensure_positive("bump height", *height)
            }
            TestFunction::Sum { terms } => terms.iter().try_for_each(TestFunction::validate),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Step { lo, hi, height } => {
                if x >= lo && x <= hi {
                    height
                } else {
                    0.0
                }
            }
            TestFunction::SmoothBump {
                center,
                halfwidth,
                height,
            } => {
                let u = (x - center) / halfwidth;
                let s = 1.0 - u * u;
                if s <= 0.0 {
                    0.0
                } else {
                    height * (1.0 - 1.0 / s).exp()
                }
            }
            TestFunction::Sum { ref terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    /// `1 − e^{−f(x)}`.
    pub fn one_minus_exp(&self, x: f64) -> f64 {
        -(-self.eval(x)).exp_m1()
    }

    /// Smallest closed interval containing the support; `None` for the zero function.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            TestFunction::Step { lo, hi, .. } => Some((lo, hi)),
            TestFunction::SmoothBump {
                center, halfwidth, ..
            } => Some((center - halfwidth, center + halfwidth)),
            TestFunction::Sum { ref terms } => terms.iter().filter_map(TestFunction::support).fold(None, |acc, (a, b)| {
                Some(match acc {
                    None => (a, b),
                    Some((lo, hi)) => (lo.min(a), hi.max(b)),
                })
            }),
        }
    }

    /// `K_f` with `supp f ⊆ [−K_f, K_f]`; zero for the zero function.
    pub fn support_bound(&self) -> f64 {
        self.support().map_or(0.0, |(lo, hi)| lo.abs().max(hi.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.support().is_none()
    }

    pub fn sup(&self) -> f64 {
        match self {
            TestFunction::Step { height, .. } | TestFunction::SmoothBump { height, .. } => *height,
            TestFunction::Sum { terms } => terms.iter().map(TestFunction::sup).sum(),
        }
    }

    /// Points where the function is not smooth or peaks.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        self.collect_breakpoints(&mut pts);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn collect_breakpoints(&self, out: &mut Vec<f64>) {
        match *self {
            TestFunction::Step { lo, hi, .. } => out.extend([lo, hi]),
            TestFunction::SmoothBump {
                center, halfwidth, ..
            } => out.extend([center - halfwidth, center, center + halfwidth]),
            TestFunction::Sum { ref terms } => terms.iter().for_each(|t| t.collect_breakpoints(out)),
        }
    }

    /// For functions built only from steps: the maximal intervals on which
    /// `f` is constant and positive, as `(lo, hi, value)`.
    pub fn constant_pieces(&self) -> Option<Vec<(f64, f64, f64)>> {
        if !self.is_piecewise_constant() {
            return None;
        }
        let cuts = self.breakpoints();
        let mut pieces = Vec::new();
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let v = self.eval(mid);
            if v > 0.0 {
                pieces.push((w[0], w[1], v));
            }
        }
        Some(pieces)
    }

    fn is_piecewise_constant(&self) -> bool {
        match self {
            TestFunction::Step { .. } => true,
            TestFunction::SmoothBump { .. } => false,
            TestFunction::Sum { terms } => terms.iter().all(TestFunction::is_piecewise_constant),
        }
    }

    /// `x ↦ f(−x)`.
    pub fn reflect(&self) -> TestFunction {
        match *self {
            TestFunction::Step { lo, hi, height } => TestFunction::Step {
                lo: -hi,
                hi: -lo,
                height,
            },
            TestFunction::SmoothBump {
                center,
                halfwidth,
                height,
            } => TestFunction::SmoothBump {
                center: -center,
                halfwidth,
                height,
            },
            TestFunction::Sum { ref terms } => TestFunction::Sum {
                terms: terms.iter().map(TestFunction::reflect).collect(),
            },
        }
    }

    /// Short human-readable descriptor used in output tables.
    pub fn descriptor(&self) -> String {
        match *self {
            TestFunction::Step { lo, hi, height } => format!("step({height}@[{lo},{hi}])"),
            TestFunction::SmoothBump {
                center,
                halfwidth,
                height,
            } => format!("bump({height}@{center}±{halfwidth})"),
            TestFunction::Sum { ref terms } if terms.is_empty() => "zero".to_string(),
            TestFunction::Sum { ref terms } => {
                terms.iter().map(TestFunction::descriptor).collect::<Vec<_>>().join("+")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_eval_and_support() {
        let f = TestFunction::step(-1.0, 0.0, 2.0).unwrap();
        assert_eq!(f.eval(-0.5), 2.0);
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.support_bound(), 1.0);
        assert!(TestFunction::step(1.0, 1.0, 1.0).is_err());
        assert!(TestFunction::step(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn bump_profile() {
        let f = TestFunction::smooth_bump(1.0, 2.0, 3.0).unwrap();
        assert!((f.eval(1.0) - 3.0).abs() < 1e-15);
        assert_eq!(f.eval(3.0), 0.0);
        assert_eq!(f.eval(-1.5), 0.0);
        assert!(f.eval(2.9) > 0.0);
        assert_eq!(f.support_bound(), 3.0);
    }

    #[test]
    fn zero_function() {
        let z = TestFunction::zero();
        assert!(z.is_zero());
        assert_eq!(z.eval(0.3), 0.0);
        assert_eq!(z.support_bound(), 0.0);
        assert_eq!(z.constant_pieces().unwrap(), vec![]);
    }

    #[test]
    fn overlapping_steps_pieces() {
        let f = TestFunction::sum(vec![
            TestFunction::step(0.0, 2.0, 1.0).unwrap(),
            TestFunction::step(1.0, 3.0, 0.5).unwrap(),
        ])
        .unwrap();
        let pieces = f.constant_pieces().unwrap();
        assert_eq!(pieces, vec![(0.0, 1.0, 1.0), (1.0, 2.0, 1.5), (2.0, 3.0, 0.5)]);
        let with_bump = TestFunction::sum(vec![f.clone(), TestFunction::smooth_bump(0.0, 1.0, 1.0).unwrap()]).unwrap();
        assert!(with_bump.constant_pieces().is_none());
    }

    #[test]
    fn reflection() {
        let f = TestFunction::step(0.2, 0.9, 1.0).unwrap();
        let r = f.reflect();
        assert_eq!(r.eval(-0.5), f.eval(0.5));
        assert_eq!(r.support(), Some((-0.9, -0.2)));
    }

    #[test]
    fn serde_tagged() {
        let f = TestFunction::smooth_bump(0.0, 1.0, 2.0).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"kind\":\"smooth_bump\""));
        let back: TestFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}

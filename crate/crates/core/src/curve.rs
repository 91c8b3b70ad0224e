//! Initial yield curve: discount factors, terminal-measure ratios and simple
//! forward rates.

use crate::error::{Error, Result};

/// Discount factors P_{0,i} for i = 0..=n with P_{0,0} = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldCurve {
    discounts: Vec<f64>,
}

impl YieldCurve {
    pub fn from_discounts(discounts: Vec<f64>) -> Result<Self> {
        if discounts.len() < 2 {
            return Err(Error::InvalidParameter(
                "curve needs at least two discount factors".into(),
            ));
        }
        if discounts[0] != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "P_0 = {}, must equal 1",
                discounts[0]
            )));
        }
        for i in 1..discounts.len() {
            if !(discounts[i] > 0.0) || discounts[i] > discounts[i - 1] {
                return Err(Error::CurveNotMonotone { index: i });
            }
        }
        Ok(YieldCurve { discounts })
    }

    /// Flat-forward shorthand: P_{0,i} = (1 + L tau)^{-i}.
    pub fn flat_forward(n: usize, tau: f64, forward: f64) -> Result<Self> {
        if !(forward >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "flat forward = {forward}, must be >= 0"
            )));
        }
        let base = 1.0 + forward * tau;
        let discounts = (0..=n).map(|i| base.powi(-(i as i32))).collect();
        YieldCurve::from_discounts(discounts)
    }

    /// Number of accrual periods n.
    pub fn periods(&self) -> usize {
        self.discounts.len() - 1
    }

    pub fn discount(&self, i: usize) -> f64 {
        self.discounts[i]
    }

    /// Terminal-measure ratio P_{0,i} / P_{0,n}.
    pub fn phat(&self, i: usize) -> f64 {
        self.discounts[i] / self.discounts[self.periods()]
    }

    pub fn ln_phat(&self, i: usize) -> f64 {
        self.discounts[i].ln() - self.discounts[self.periods()].ln()
    }

    /// Simple forward rate for (t_i, t_{i+1}).
    pub fn forward(&self, i: usize, tau: f64) -> f64 {
        (self.discounts[i] / self.discounts[i + 1] - 1.0) / tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_curve_reproduces_its_forward() {
        let curve = YieldCurve::flat_forward(40, 0.25, 0.05).unwrap();
        assert_eq!(curve.periods(), 40);
        for i in 0..40 {
            assert!((curve.forward(i, 0.25) / 0.05 - 1.0).abs() < 1e-13);
        }
        assert_eq!(curve.phat(40), 1.0);
        assert!(curve.phat(0) > 1.0);
    }

    #[test]
    fn rejects_nonmonotone_or_unnormalized_curves() {
        assert!(YieldCurve::from_discounts(vec![1.0, 0.9, 0.95]).is_err());
        assert!(YieldCurve::from_discounts(vec![0.99, 0.9]).is_err());
        assert!(YieldCurve::from_discounts(vec![1.0, 0.9, -0.1]).is_err());
        assert!(YieldCurve::from_discounts(vec![1.0]).is_err());
        // flat segments (zero forward) are a valid curve
        assert!(YieldCurve::from_discounts(vec![1.0, 0.9, 0.9]).is_ok());
    }

    #[test]
    fn ln_phat_matches_ratio() {
        let curve = YieldCurve::from_discounts(vec![1.0, 0.97, 0.93, 0.9]).unwrap();
        for i in 0..=3 {
            assert!((curve.ln_phat(i) - curve.phat(i).ln()).abs() < 1e-15);
        }
    }
}

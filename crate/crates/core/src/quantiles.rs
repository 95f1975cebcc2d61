//! Reference distribution quantiles and tail probabilities.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "confidence level {level} must lie in (0, 1)"
        )))
    }
}

/// Two-sided standard normal critical value `z` with `P(|Z| <= z) = level`.
pub fn normal_critical(level: f64) -> Result<f64> {
    check_level(level)?;
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + 0.5 * level))
}

/// `level` quantile of the chi-square distribution with one degree of
/// freedom, computed as the squared two-sided normal critical value.
pub fn chi2_1_quantile(level: f64) -> Result<f64> {
    Ok(normal_critical(level)?.powi(2))
}

/// Upper-tail probability `P(X >= stat)` for `X ~ chi2(df)`.
///
/// `df = 0` is the point mass at zero: the probability is one for a zero
/// statistic (up to `tol`) and zero otherwise.
pub fn chi2_upper_tail(stat: f64, df: usize, zero_tol: f64) -> f64 {
    if df == 0 {
        return if stat <= zero_tol { 1.0 } else { 0.0 };
    }
    if stat <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    d.sf(stat)
}

/// Two-sided Student-t critical value `F^{-1}_{t,df}(1 - v/2)` for
/// significance `v`.
pub fn student_t_critical(significance: f64, df: usize) -> Result<f64> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance {significance} must lie in (0, 1)"
        )));
    }
    if df == 0 {
        return Err(Error::InvalidArgument("t quantile needs df >= 1".into()));
    }
    let t = StudentsT::new(0.0, 1.0, df as f64).expect("valid t parameters");
    Ok(t.inverse_cdf(1.0 - 0.5 * significance))
}

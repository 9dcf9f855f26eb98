//! Correlation metrics used to score quality predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SRCC, PLCC and their average.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub srcc: f64,
    pub plcc: f64,
    pub final_score: f64,
    pub n: usize,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "correlation inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid(format!(
            "correlation needs at least 2 samples, got {}",
            x.len()
        )));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {v} in correlation input")));
    }
    Ok(())
}

/// 1-based fractional ranks; tied values share the mean of their positions.
pub fn ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("ranks of an empty list"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("cannot rank non-finite value {v}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their average
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            out[idx] = avg;
        }
        start = end;
    }
    Ok(out)
}

fn has_ties(r: &[f64]) -> bool {
    r.iter().any(|v| v.fract() != 0.0) || {
        let mut seen: Vec<f64> = r.to_vec();
        seen.sort_by(f64::total_cmp);
        seen.windows(2).any(|w| w[0] == w[1])
    }
}

/// Pearson linear correlation coefficient.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the inputs is constant".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation as the Pearson correlation of fractional ranks.
/// Valid with ties.
pub fn srcc_pearson_of_ranks(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    plcc(&ranks(x)?, &ranks(y)?)
}

/// `1 − 6 Σ d_i² / (n (n² − 1))`. Only meaningful when neither input has ties.
pub fn srcc_closed_form(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (rx, ry) = (ranks(x)?, ranks(y)?);
    if has_ties(&rx) || has_ties(&ry) {
        return Err(Error::invalid("closed-form SRCC requires tie-free inputs"));
    }
    Ok(closed_form_from_ranks(&rx, &ry))
}

fn closed_form_from_ranks(rx: &[f64], ry: &[f64]) -> f64 {
    let n = rx.len() as f64;
    let d2: f64 = rx.iter().zip(ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Spearman rank correlation.
///
/// Tie-free inputs use the closed form (identical in exact arithmetic to the
/// Pearson-of-ranks route); inputs with ties use Pearson of fractional ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (rx, ry) = (ranks(x)?, ranks(y)?);
    if has_ties(&rx) || has_ties(&ry) {
        plcc(&rx, &ry)
    } else {
        Ok(closed_form_from_ranks(&rx, &ry))
    }
}

/// Assemble a report from already computed correlations.
pub fn final_score(srcc: f64, plcc: f64, n: usize) -> EvalReport {
    EvalReport {
        srcc,
        plcc,
        final_score: 0.5 * srcc + 0.5 * plcc,
        n,
    }
}

/// Score predictions against ground truth.
pub fn evaluate(pred: &[f64], target: &[f64]) -> Result<EvalReport> {
    Ok(final_score(srcc(pred, target)?, plcc(pred, target)?, pred.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[1.0, 1.0, 2.0]).unwrap(), vec![1.5, 1.5, 3.0]);
        assert_eq!(ranks(&[3.0, 1.0, 2.0]).unwrap(), vec![3.0, 1.0, 2.0]);
        assert_eq!(ranks(&[5.0, 5.0, 5.0]).unwrap(), vec![2.0, 2.0, 2.0]);
        assert!(ranks(&[]).is_err());
        assert!(ranks(&[f64::NAN]).is_err());
    }

    #[test]
    fn srcc_worked_examples() {
        let s = srcc(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap();
        assert_abs_diff_eq!(s, 0.9, epsilon = 1e-15);
        let x = [0.3, -1.0, 7.5, 2.0];
        assert_eq!(srcc(&x, &x).unwrap(), 1.0);
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(srcc(&x, &rev).unwrap(), -1.0);
        let tied = srcc(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(tied, 3f64.sqrt() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn plcc_worked_examples() {
        let x = [1.0, 2.0, 3.0, 4.5];
        let affine: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_abs_diff_eq!(plcc(&x, &affine).unwrap(), 1.0, epsilon = 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(plcc(&x, &neg).unwrap(), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(plcc(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn constant_input_is_an_error() {
        let err = plcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::UndefinedCorrelation(_)));
        assert!(matches!(
            srcc(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap_err(),
            Error::UndefinedCorrelation(_)
        ));
        assert!(srcc(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn final_score_examples() {
        assert_eq!(final_score(0.9624, 0.9624, 10).final_score, 0.9624);
        assert_eq!(final_score(1.0, 1.0, 10).final_score, 1.0);
        let team1 = final_score(0.9692, 0.9637, 10).final_score;
        assert_abs_diff_eq!(team1, 0.96645, epsilon = 1e-12);
        assert_eq!((team1 * 1e4).floor() / 1e4, 0.9664);
    }

    #[test]
    fn closed_form_refuses_ties() {
        assert!(srcc_closed_form(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }
}

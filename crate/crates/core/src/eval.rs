//! Selective-classification metrics.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub coverage: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskCoverageCurve {
    /// Strictly increasing in coverage; the last point has coverage 1.
    pub points: Vec<CurvePoint>,
    pub aurcc: f64,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape {
            op: "eval",
            left: (a, 1),
            right: (b, 1),
        });
    }
    if a == 0 {
        return Err(Error::Input("no samples".into()));
    }
    Ok(())
}

/// Empirical coverage and selective 0/1 risk.
pub fn coverage_risk(correct: &[bool], accepted: &[bool]) -> Result<(f64, f64)> {
    check_lengths(correct.len(), accepted.len())?;
    let n_acc = accepted.iter().filter(|&&a| a).count();
    if n_acc == 0 {
        return Err(Error::EmptyCoverage);
    }
    let wrong = correct.iter().zip(accepted).filter(|&(&c, &a)| a && !c).count();
    Ok((n_acc as f64 / correct.len() as f64, wrong as f64 / n_acc as f64))
}

/// Risk-coverage curve from sweeping the threshold down through every
/// distinct confidence. Samples sharing a confidence enter together.
///
/// The area is the step integral `Σ (c_i − c_{i−1}) r_i` with `c_0 = 0`,
/// i.e. each segment carries the risk at its right end.
pub fn rcc(confidences: &[f64], correct: &[bool]) -> Result<RiskCoverageCurve> {
    check_lengths(confidences.len(), correct.len())?;
    if confidences.iter().any(|c| c.is_nan()) {
        return Err(Error::Input("NaN confidence".into()));
    }
    let n = confidences.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));

    let mut points = Vec::new();
    let (mut accepted, mut wrong) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        let level = confidences[order[i]];
        while i < n && confidences[order[i]] == level {
            accepted += 1;
            if !correct[order[i]] {
                wrong += 1;
            }
            i += 1;
        }
        points.push(CurvePoint {
            coverage: accepted as f64 / n as f64,
            risk: wrong as f64 / accepted as f64,
        });
    }

    let mut area = 0.0;
    let mut prev = 0.0;
    for p in &points {
        area += (p.coverage - prev) * p.risk;
        prev = p.coverage;
    }
    Ok(RiskCoverageCurve {
        aurcc: area / prev,
        points,
    })
}

/// Lower AURCC is better; `Less` means `a` is better.
pub fn aurcc_compare(a: &RiskCoverageCurve, b: &RiskCoverageCurve) -> Ordering {
    a.aurcc.total_cmp(&b.aurcc)
}

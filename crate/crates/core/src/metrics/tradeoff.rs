use super::{MetricError, Result};

/// Area under the accuracy-versus-beyond-accuracy curve of a point set.
///
/// Both axes are min-max normalized over the points; a constant accuracy
/// axis normalizes to 1. Points sharing an `x` are merged into their mean
/// `y`, and the resulting polyline is integrated with the trapezoid rule.
pub fn tradeoff_auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(MetricError::Argument("curve points must be finite".into()));
    }
    let range = |v: &mut dyn Iterator<Item = f64>| {
        v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let (x0, x1) = range(&mut points.iter().map(|p| p.0));
    let (y0, y1) = range(&mut points.iter().map(|p| p.1));
    if points.len() < 2 || x1 <= x0 {
        return Err(MetricError::DegenerateCurve(
            "at least two distinct x values are required".into(),
        ));
    }
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| {
            let ny = if y1 > y0 { (y - y0) / (y1 - y0) } else { 1.0 };
            ((x - x0) / (x1 - x0), ny)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64, usize)> = Vec::new();
    for (x, y) in pts {
        match merged.last_mut() {
            Some(last) if last.0 == x => {
                last.1 += y;
                last.2 += 1;
            }
            _ => merged.push((x, y, 1)),
        }
    }
    let curve: Vec<(f64, f64)> = merged.into_iter().map(|(x, s, n)| (x, s / n as f64)).collect();
    Ok(curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum())
}

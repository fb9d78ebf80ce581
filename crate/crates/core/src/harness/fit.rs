/// Ordinary least squares `y ≈ intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Returns `None` for fewer than two points or constant `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    assert_eq!(x.len(), y.len(), "fit inputs differ in length");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(LinearFit { slope, intercept, r2, points: n })
}

/// Fit of `ln y` against `ln x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Fit of `ln y` against `x`.
pub fn semilog_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(x, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert!((f.r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_and_exponential_laws() {
        let x = [50.0, 100.0, 200.0, 400.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.1)).collect();
        assert!((loglog_fit(&x, &y).unwrap().slope + 1.1).abs() < 1e-12);
        let k = [1.0, 2.0, 5.0, 9.0];
        let y: Vec<f64> = k.iter().map(|v: &f64| 0.7f64.powf(*v)).collect();
        assert!((semilog_fit(&k, &y).unwrap().slope - 0.7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(linear_fit(&[1.0], &[2.0]).is_none());
        assert!(linear_fit(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }
}

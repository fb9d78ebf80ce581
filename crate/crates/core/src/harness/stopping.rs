use std::fmt;

/// Outcome of comparing an optimization-error curve with an estimation
/// error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingEstimate {
    Stop(usize),
    NoStopInRange,
}

impl fmt::Display for StoppingEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoppingEstimate::Stop(k) => write!(f, "{k}"),
            StoppingEstimate::NoStopInRange => f.write_str("no-stop-in-range"),
        }
    }
}

/// First grid `k` whose optimization error is at most the estimation error.
/// A zero estimation error can never be matched.
pub fn estimate_stopping_k(estimation_error: f64, curve: &[(usize, f64)]) -> StoppingEstimate {
    if !(estimation_error > 0.0) {
        return StoppingEstimate::NoStopInRange;
    }
    curve
        .iter()
        .find(|(_, e)| *e <= estimation_error)
        .map_or(StoppingEstimate::NoStopInRange, |(k, _)| StoppingEstimate::Stop(*k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        let zero: Vec<(usize, f64)> = (3..8).map(|k| (k, 0.0)).collect();
        assert_eq!(estimate_stopping_k(0.1, &zero), StoppingEstimate::Stop(3));
        assert_eq!(estimate_stopping_k(0.0, &zero), StoppingEstimate::NoStopInRange);
    }

    #[test]
    fn geometric_curve() {
        let curve: Vec<(usize, f64)> = (0..10).map(|k| (k, 0.5f64.powi(k as i32))).collect();
        assert_eq!(estimate_stopping_k(0.1, &curve), StoppingEstimate::Stop(4));
        assert_eq!(estimate_stopping_k(1e-6, &curve), StoppingEstimate::NoStopInRange);
    }
}

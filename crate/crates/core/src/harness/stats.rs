//! Summary statistics over trial records.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean (sample standard deviation over `sqrt(n)`).
/// Zero for fewer than two values.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Mean and standard error of the `k` largest values (all of them if fewer).
pub fn top_k_mean(values: &[f64], k: usize) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.truncate(k);
    (mean(&sorted), standard_error(&sorted))
}

/// Fraction of `true` flags.
pub fn rate(flags: impl IntoIterator<Item = bool>) -> f64 {
    let (hits, total) = flags
        .into_iter()
        .fold((0usize, 0usize), |(h, t), f| (h + usize::from(f), t + 1));
    if total == 0 {
        return f64::NAN;
    }
    hits as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_five() {
        let v = [0.5, 0.9, 0.1, 0.8, 0.95, 0.7, 0.85];
        let (m, e) = top_k_mean(&v, 5);
        let best = [0.95, 0.9, 0.85, 0.8, 0.7];
        assert!((m - mean(&best)).abs() < 1e-15);
        assert!((e - standard_error(&best)).abs() < 1e-15);
        assert_eq!(top_k_mean(&[0.3], 5), (0.3, 0.0));
    }

    #[test]
    fn standard_error_by_hand() {
        // sample variance of 1, 2, 3 is 1
        assert!((standard_error(&[1.0, 2.0, 3.0]) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rates() {
        assert_eq!(rate([true, false, true, true]), 0.75);
        assert!(rate(Vec::<bool>::new()).is_nan());
    }
}

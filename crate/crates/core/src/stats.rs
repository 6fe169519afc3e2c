//! Small statistics helpers: sample moments, a Kolmogorov-Smirnov test
//! against a geometric (thermal occupation) distribution, and simple
//! unweighted linear regression used by the oracle checks.

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Kolmogorov-Smirnov test of integer samples against a geometric
/// occupation distribution p(n) = nbar^n/(nbar+1)^(n+1) with the given
/// mean. Uses the asymptotic Kolmogorov p-value, which is conservative
/// for discrete distributions.
pub fn ks_geometric(samples: &[u64], nbar: f64) -> KsTest {
    let n = samples.len();
    assert!(n > 0 && nbar >= 0.0);
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let q = nbar / (nbar + 1.0);
    // CDF of the geometric: F(k) = 1 - q^(k+1)
    let cdf = |k: u64| 1.0 - q.powi(k as i32 + 1);
    let mut d: f64 = 0.0;
    let nf = n as f64;
    let mut i = 0usize;
    while i < n {
        let k = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == k {
            j += 1;
        }
        let f_lo = i as f64 / nf;
        let f_hi = j as f64 / nf;
        let fk = if q == 0.0 { 1.0 } else { cdf(k) };
        let f_prev = if k == 0 || q == 0.0 { 0.0 } else { cdf(k - 1) };
        d = d.max((f_hi - fk).abs()).max((f_prev - f_lo).abs());
        i = j;
    }
    KsTest {
        statistic: d,
        p_value: kolmogorov_survival(nf.sqrt() * d),
        n,
    }
}

/// Asymptotic Kolmogorov survival function Q(x) = 2 Σ (-1)^(k-1) exp(-2k²x²).
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Ordinary least-squares slope and intercept with slope standard error
/// (residual-based). Used as the independent oracle for mean-growth checks.
pub fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let xb = mean(xs);
    let yb = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - xb).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xb) * (y - yb)).sum();
    let slope = sxy / sxx;
    let intercept = yb - slope * xb;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_se = (ss_res / (n - 2.0) / sxx).sqrt();
    (slope, intercept, slope_se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample_geometric(nbar: f64, n: usize, rng: &mut ChaCha12Rng) -> Vec<u64> {
        use rand::Rng;
        let q = nbar / (nbar + 1.0);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if q == 0.0 {
                    0
                } else {
                    (u.ln() / q.ln()).floor() as u64
                }
            })
            .collect()
    }

    #[test]
    fn ks_accepts_matching_geometric() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let samples = sample_geometric(2.5, 10_000, &mut rng);
        let m = samples.iter().sum::<u64>() as f64 / samples.len() as f64;
        let t = ks_geometric(&samples, m);
        assert!(t.p_value > 0.01, "p = {}", t.p_value);
    }

    #[test]
    fn ks_rejects_wrong_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let samples = sample_geometric(2.5, 10_000, &mut rng);
        let t = ks_geometric(&samples, 5.0);
        assert!(t.p_value < 1e-6, "p = {}", t.p_value);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let (m, b, _) = ols_line(&xs, &ys);
        assert!((m - 3.0).abs() < 1e-12);
        assert!((b + 1.0).abs() < 1e-12);
    }
}

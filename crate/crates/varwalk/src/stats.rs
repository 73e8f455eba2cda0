//! Small statistics helpers shared by the ensemble harness and the
//! diffusion validator: binomial confidence intervals, least squares on
//! log-log data, compensated summation, and order statistics.

use crate::error::{Error, Result};

/// z-quantile for two-sided 95% coverage.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at 95% confidence.
///
/// Stays inside [0, 1] and remains informative at p̂ ∈ {0, 1}, unlike the
/// normal-approximation interval.
pub fn wilson_interval(successes: u64, trials: u64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::invalid("wilson interval requires at least one trial"));
    }
    if successes > trials {
        return Err(Error::invalid("wilson interval: successes exceed trials"));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (Z95 / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

/// Ordinary least-squares line fit, returning (slope, intercept,
/// slope standard error). Needs ≥ 2 points with non-identical abscissae.
pub fn ols_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("ols_line: mismatched lengths"));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::degenerate_fit("ols_line needs at least two points"));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::degenerate_fit("ols_line: all abscissae identical"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let mut ss_res = 0.0;
        for (&x, &y) in xs.iter().zip(ys) {
            let r = y - (intercept + slope * x);
            ss_res += r * r;
        }
        (ss_res / ((nf - 2.0) * sxx)).sqrt()
    } else {
        0.0
    };
    Ok((slope, intercept, stderr))
}

/// Least-squares quadratic fit `y ≈ c0 + c1·x + c2·x²`, returning
/// (c0, c1, c2). Used to measure curvature of convergence profiles.
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("quadratic_fit: mismatched lengths"));
    }
    if xs.len() < 3 {
        return Err(Error::degenerate_fit("quadratic_fit needs at least three points"));
    }
    // Normal equations for the 3x3 system; sizes here are tiny.
    let n = xs.len() as f64;
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let x2 = x * x;
        s1 += x;
        s2 += x2;
        s3 += x2 * x;
        s4 += x2 * x2;
        t0 += y;
        t1 += x * y;
        t2 += x2 * y;
    }
    let m = [[n, s1, s2], [s1, s2, s3], [s2, s3, s4]];
    let b = [t0, t1, t2];
    solve3(m, b).map(|c| (c[0], c[1], c[2]))
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Result<[f64; 3]> {
    // Gaussian elimination with partial pivoting.
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-300 {
            return Err(Error::degenerate_fit("quadratic_fit: singular normal equations"));
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in (row + 1)..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Ok(x)
}

/// Compensated (Kahan) summation; the quadrature sums in the diffusion
/// validator must hold ~1e-12 relative accuracy over millions of terms.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Median of a sample (average of middle pair for even sizes).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("median of empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("mean of empty sample"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wilson_stays_in_unit_interval_at_extremes() {
        let (lo, hi) = wilson_interval(0, 50).unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.2);
        let (lo, hi) = wilson_interval(50, 50).unwrap();
        assert!(lo > 0.8 && lo < 1.0);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn wilson_rejects_bad_input() {
        assert!(wilson_interval(1, 0).is_err());
        assert!(wilson_interval(5, 4).is_err());
    }

    #[test]
    fn wilson_coverage_near_nominal() {
        // Empirical coverage for p = 0.3, n = 100 over 10^4 replicates must
        // land in [0.93, 0.97].
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let p = 0.3;
        let n = 100u64;
        let mut covered = 0u64;
        let reps = 10_000;
        for _ in 0..reps {
            let mut k = 0u64;
            for _ in 0..n {
                if rng.random::<f64>() < p {
                    k += 1;
                }
            }
            let (lo, hi) = wilson_interval(k, n).unwrap();
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        let cov = covered as f64 / reps as f64;
        assert!((0.93..=0.97).contains(&cov), "coverage {cov}");
    }

    #[test]
    fn ols_recovers_exact_line() {
        let xs: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.5 * x - 2.0).collect();
        let (slope, intercept, stderr) = ols_line(&xs, &ys).unwrap();
        assert!((slope - 3.5).abs() < 1e-12);
        assert!((intercept + 2.0).abs() < 1e-12);
        assert!(stderr < 1e-12);
    }

    #[test]
    fn ols_recovers_power_law_on_log_axes() {
        let ns: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
        let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
        let ys: Vec<f64> = ns.iter().map(|n| (2.0 * n.powf(-0.5)).ln()).collect();
        let (slope, _, _) = ols_line(&xs, &ys).unwrap();
        assert!((slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn ols_degenerate_cases() {
        assert!(ols_line(&[1.0], &[2.0]).is_err());
        assert!(ols_line(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn quadratic_fit_exact() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 0.5 * x + 0.25 * x * x).collect();
        let (c0, c1, c2) = quadratic_fit(&xs, &ys).unwrap();
        assert!((c0 - 1.0).abs() < 1e-9);
        assert!((c1 + 0.5).abs() < 1e-9);
        assert!((c2 - 0.25).abs() < 1e-9);
    }

    #[test]
    fn kahan_beats_naive_on_adversarial_stream() {
        // 1 followed by many tiny terms that naive summation drops entirely.
        let tiny = 1e-16;
        let count = 10_000_000usize;
        let stream = std::iter::once(1.0).chain(std::iter::repeat(tiny).take(count));
        let sum = kahan_sum(stream);
        let exact = 1.0 + tiny * count as f64;
        assert!((sum - exact).abs() / exact < 1e-15, "{sum} vs {exact}");
    }

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
        assert_eq!(mean(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert!(median(&[]).is_err());
        assert!(mean(&[]).is_err());
    }
}

//! Small statistics toolbox shared by the estimators and their diagnostics:
//! moments, autocorrelations, least squares, two-sample tests and a distance
//! correlation permutation test.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Unbiased sample variance.
pub fn variance<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    ss / T::of_usize(xs.len() - 1)
}

pub fn std_dev<T: Scalar>(xs: &[T]) -> T {
    variance(xs).sqrt()
}

/// Standard error of the sample mean.
pub fn standard_error<T: Scalar>(xs: &[T]) -> T {
    (variance(xs) / T::of_usize(xs.len())).sqrt()
}

/// Sample autocorrelation at the given lag.
pub fn autocorrelation<T: Scalar>(xs: &[T], lag: usize) -> T {
    let n = xs.len();
    assert!(lag < n);
    let m = mean(xs);
    let mut num = T::zero();
    for i in 0..n - lag {
        num = num + (xs[i] - m) * (xs[i + lag] - m);
    }
    let mut den = T::zero();
    for &x in xs {
        den = den + (x - m) * (x - m);
    }
    num / den
}

/// `log(sum exp(x_i))` without overflow.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let s: T = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Total variation distance between two probability vectors.
pub fn total_variation<T: Scalar>(p: &[T], q: &[T]) -> T {
    let sum: T = p.iter().zip(q.iter()).map(|(&a, &b)| (a - b).abs()).sum();
    sum / T::of(2.0)
}

/// Ordinary least squares `y ~ intercept + slope x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub slope_se: T,
    /// Half-width of the 95% confidence interval for the slope.
    pub slope_ci95: T,
    pub n: usize,
}

pub fn fit_line<T: Scalar>(x: &[T], y: &[T]) -> Result<LineFit<T>> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::InsufficientData(format!(
            "least squares needs >= 3 matched points, got {n}"
        )));
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if !(sxx > T::zero()) {
        return Err(Error::InsufficientData("degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = syy - slope * sxy;
    let r_squared = if syy > T::zero() {
        T::one() - ss_res / syy
    } else {
        T::one()
    };
    let df = n - 2;
    let var_slope = (ss_res / T::of_usize(df)).max(T::zero()) / sxx;
    let slope_se = var_slope.sqrt();
    let tq = if df > 0 {
        StudentsT::new(0.0, 1.0, df as f64)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(1.96)
    } else {
        1.96
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        slope_se,
        slope_ci95: slope_se * T::of(tq),
        n,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d = T::zero();
    while i < n && j < m {
        let xa = a[i];
        let xb = b[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        let fa = T::of_usize(i) / T::of_usize(n);
        let fb = T::of_usize(j) / T::of_usize(m);
        d = d.max((fa - fb).abs());
    }
    d
}

/// Smirnov rejection threshold for the two-sample KS test at `level`.
pub fn ks_threshold<T: Scalar>(n: usize, m: usize, level: f64) -> T {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    T::of(c) * ((T::of_usize(n + m)) / (T::of_usize(n) * T::of_usize(m))).sqrt()
}

/// Two-sample KS test; true when the samples are compatible at `level`.
pub fn ks_two_sample_pass<T: Scalar>(a: &[T], b: &[T], level: f64) -> bool {
    ks_statistic(a, b) <= ks_threshold::<T>(a.len(), b.len(), level)
}

/// Chi-square goodness-of-fit p-value for observed counts against expected
/// counts (expected mass re-scaled to the observed total; cells with small
/// expectation are pooled).
pub fn chi_square_pvalue<T: Scalar>(observed: &[f64], expected: &[T]) -> Result<f64> {
    if observed.len() != expected.len() {
        return Err(Error::InsufficientData("count arrays differ in length".into()));
    }
    let total_obs: f64 = observed.iter().sum();
    let total_exp: f64 = expected.iter().map(|&e| e.as_f64()).sum();
    if total_obs <= 0.0 || total_exp <= 0.0 {
        return Err(Error::InsufficientData("empty counts".into()));
    }
    // pool cells until every expected count is at least 5
    let mut obs_pooled = Vec::new();
    let mut exp_pooled = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (o, e) in observed.iter().zip(expected.iter()) {
        acc_o += *o;
        acc_e += e.as_f64() / total_exp * total_obs;
        if acc_e >= 5.0 {
            obs_pooled.push(acc_o);
            exp_pooled.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 {
        if let (Some(o), Some(e)) = (obs_pooled.last_mut(), exp_pooled.last_mut()) {
            *o += acc_o;
            *e += acc_e;
        } else {
            obs_pooled.push(acc_o);
            exp_pooled.push(acc_e);
        }
    }
    if obs_pooled.len() < 2 {
        return Err(Error::InsufficientData("fewer than 2 cells after pooling".into()));
    }
    let stat: f64 = obs_pooled
        .iter()
        .zip(exp_pooled.iter())
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = (obs_pooled.len() - 1) as f64;
    let dist = ChiSquared::new(df).map_err(|e| Error::InsufficientData(e.to_string()))?;
    Ok(1.0 - dist.cdf(stat))
}

/// Batch-means mean and standard error over `n_batches` contiguous batches.
pub fn batch_means<T: Scalar>(xs: &[T], n_batches: usize) -> Result<(T, T)> {
    if xs.len() < 2 * n_batches {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill {n_batches} batches",
            xs.len()
        )));
    }
    let size = xs.len() / n_batches;
    let batches: Vec<T> = (0..n_batches)
        .map(|b| mean(&xs[b * size..(b + 1) * size]))
        .collect();
    let m = mean(&batches);
    let se = standard_error(&batches);
    Ok((m, se))
}

fn distance_matrix<T: Scalar>(xs: &[T]) -> Vec<T> {
    let n = xs.len();
    let mut d = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (xs[i] - xs[j]).abs();
        }
    }
    d
}

fn double_centre<T: Scalar>(d: &mut [T], n: usize) {
    let mut row_means = vec![T::zero(); n];
    let mut grand = T::zero();
    for i in 0..n {
        let mut s = T::zero();
        for j in 0..n {
            s = s + d[i * n + j];
        }
        row_means[i] = s / T::of_usize(n);
        grand = grand + s;
    }
    grand = grand / T::of_usize(n * n);
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = d[i * n + j] - row_means[i] - row_means[j] + grand;
        }
    }
}

fn dcov_from_centred<T: Scalar>(a: &[T], b: &[T], n: usize) -> T {
    let mut s = T::zero();
    for i in 0..n * n {
        s = s + a[i] * b[i];
    }
    (s / T::of_usize(n * n)).max(T::zero())
}

/// Distance correlation permutation test for independence of paired samples.
///
/// Returns the permutation p-value of the observed distance correlation;
/// subsamples to `max_n` points for tractability.
pub fn distance_correlation_pvalue<T: Scalar>(
    xs: &[T],
    ys: &[T],
    max_n: usize,
    n_permutations: usize,
    seed: u64,
) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 8 {
        return Err(Error::InsufficientData("need >= 8 pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len().min(max_n);
    let stride = xs.len() / n;
    let xv: Vec<T> = (0..n).map(|i| xs[i * stride]).collect();
    let yv: Vec<T> = (0..n).map(|i| ys[i * stride]).collect();

    let mut da = distance_matrix(&xv);
    double_centre(&mut da, n);
    let dcor = |b_raw: &[T]| -> T {
        let mut db = distance_matrix(b_raw);
        double_centre(&mut db, n);
        let v = dcov_from_centred(&da, &db, n);
        let va = dcov_from_centred(&da, &da, n);
        let vb = dcov_from_centred(&db, &db, n);
        if va > T::zero() && vb > T::zero() {
            (v / (va * vb).sqrt()).sqrt()
        } else {
            T::zero()
        }
    };
    let observed = dcor(&yv);
    let mut exceed = 1usize; // add-one permutation p-value
    let mut perm = yv.clone();
    for _ in 0..n_permutations {
        perm.shuffle(&mut rng);
        if dcor(&perm) >= observed {
            exceed += 1;
        }
    }
    Ok(exceed as f64 / (n_permutations + 1) as f64)
}

/// Bootstrap standard error of the sample mean of `f(x_i)`.
pub fn bootstrap_se<T: Scalar>(xs: &[T], n_boot: usize, seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let mut means = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let mut s = T::zero();
        for _ in 0..n {
            let idx = rand::Rng::gen_range(&mut rng, 0..n);
            s = s + xs[idx];
        }
        means.push(s / T::of_usize(n));
    }
    std_dev(&means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn moments_and_autocorr() {
        let xs = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_abs_diff_eq!(mean(&xs), 3.0);
        assert_abs_diff_eq!(variance(&xs), 2.5);
        // perfectly linear sequence has lag-1 autocorrelation 0.4 around mean
        assert_abs_diff_eq!(autocorrelation(&xs, 0), 1.0);
    }

    #[test]
    fn log_sum_exp_stable() {
        let xs = vec![1000.0, 1000.0];
        assert_abs_diff_eq!(log_sum_exp(&xs), 1000.0 + 2.0f64.ln(), epsilon = 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn line_fit_exact() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 - 0.7 * v).collect();
        let fit = fit_line(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ks_detects_shift_and_accepts_same_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>()).collect();
        let c: Vec<f64> = (0..4000).map(|_| rng.gen::<f64>() + 0.2).collect();
        assert!(ks_two_sample_pass(&a, &b, 1e-3));
        assert!(!ks_two_sample_pass(&a, &c, 1e-3));
    }

    #[test]
    fn chi_square_uniform_counts() {
        let expected = vec![0.25f64; 4];
        let observed = vec![260.0, 245.0, 250.0, 245.0];
        let p = chi_square_pvalue(&observed, &expected).unwrap();
        assert!(p > 0.1, "p = {p}");
        let skewed = vec![700.0, 100.0, 100.0, 100.0];
        let p = chi_square_pvalue(&skewed, &expected).unwrap();
        assert!(p < 1e-6);
    }

    #[test]
    fn distance_correlation_flags_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..400).map(|_| rng.gen::<f64>() - 0.5).collect();
        let indep: Vec<f64> = (0..400).map(|_| rng.gen::<f64>() - 0.5).collect();
        let dep: Vec<f64> = xs.iter().map(|&x| x * x).collect();
        let p_indep = distance_correlation_pvalue(&xs, &indep, 200, 99, 1).unwrap();
        let p_dep = distance_correlation_pvalue(&xs, &dep, 200, 99, 1).unwrap();
        assert!(p_indep > 0.01, "independent pair rejected: p = {p_indep}");
        assert!(p_dep <= 0.01, "quadratic dependence missed: p = {p_dep}");
    }

    #[test]
    fn batch_means_recovers_mean() {
        let xs: Vec<f64> = (0..3000).map(|i| (i % 10) as f64).collect();
        let (m, se) = batch_means(&xs, 30).unwrap();
        assert_abs_diff_eq!(m, 4.5, epsilon = 1e-12);
        assert!(se < 0.01);
    }
}

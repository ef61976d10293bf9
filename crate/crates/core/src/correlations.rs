//! Pair-correlation estimators for the stationary point process: a
//! Palm/renewal-identity estimator and a direct ergodic-average estimator,
//! plus the exponential-moment growth-rate diagnostic.
//!
//! For disjoint bounded intervals `A` and `B + t`,
//! `E[Phi(A) Phi(B+t)] = (1/E[Z]) int_A E_pi[#{n != 0 : X_n in B + t - x}] dx`;
//! the `x`-integral is 64-point Gauss-Legendre over `A` and the inner count
//! is taken directly on simulated stationary paths (two-sided whenever the
//! window can reach non-positive values, using the time-reversed kernel for
//! the backward branch).

use crate::chains::{Sampler, SpacingPath};
use crate::error::{Error, Result};
use crate::renewal::{fit_decay, DecayOutcome, DeviationSeries};
use crate::scalar::Scalar;
use crate::stats;
use rayon::prelude::*;

/// Gauss-Legendre points for the x-integral over `A`.
const X_QUAD_POINTS: usize = 64;

/// Batches for the ergodic estimator's standard errors.
const N_BATCHES: usize = 30;

/// Covariance of point counts in shifted windows.
#[derive(Debug, Clone)]
pub struct CovarianceCurve<T> {
    pub interval_a: (T, T),
    pub interval_b: (T, T),
    pub t_grid: Vec<T>,
    /// `E[Phi(A) Phi(B+t)]` estimates (raw product moment).
    pub raw_hat: Vec<T>,
    /// Covariance estimates.
    pub cov_hat: Vec<T>,
    pub stderr: Vec<T>,
    /// Estimated intensity `1/E[Z_1]`.
    pub intensity_hat: T,
    pub estimator: &'static str,
}

fn check_intervals<T: Scalar>(a: (T, T), b: (T, T), t_grid: &[T]) -> Result<()> {
    if !(a.1 > a.0) || !(b.1 > b.0) {
        return Err(Error::Precondition("intervals must have positive length".into()));
    }
    if t_grid.is_empty() {
        return Err(Error::Config("empty shift grid".into()));
    }
    for &t in t_grid {
        let (b_lo, b_hi) = (b.0 + t, b.1 + t);
        if a.0 <= b_hi && b_lo <= a.1 {
            return Err(Error::Precondition(format!(
                "A = [{}, {}] and B + {t} = [{b_lo}, {b_hi}] overlap",
                a.0, a.1
            )));
        }
    }
    Ok(())
}

fn gauss_legendre_on<T: Scalar>(lo: T, hi: T, n: usize) -> (Vec<T>, Vec<T>) {
    let grid = crate::quad::QuadratureGrid::<T>::gauss_legendre(lo, hi, 1, n, 1)
        .expect("interval quadrature");
    (grid.nodes().to_vec(), grid.weights().to_vec())
}

fn count_in<T: Scalar>(sorted: &[T], lo: T, hi: T) -> usize {
    let a = sorted.partition_point(|&v| v < lo);
    let b = sorted.partition_point(|&v| v <= hi);
    b - a
}

/// Palm/renewal-identity estimator of `E[Phi(A) Phi(B+t)]` and the
/// covariance, over a grid of shifts.
pub fn second_moment_palm<T: Scalar>(
    sampler: &Sampler<T>,
    a: (T, T),
    b: (T, T),
    t_grid: &[T],
    n_replicas: usize,
    seed: u64,
) -> Result<CovarianceCurve<T>> {
    check_intervals(a, b, t_grid)?;
    if n_replicas < 2 {
        return Err(Error::Config("need at least 2 replicas".into()));
    }
    let mean_z = sampler.mean_spacing();
    let (xg, wg) = gauss_legendre_on(a.0, a.1, X_QUAD_POINTS);

    let t_max = t_grid.iter().fold(T::neg_infinity(), |m, &t| m.max(t));
    let t_min = t_grid.iter().fold(T::infinity(), |m, &t| m.min(t));
    let margin = T::of(20.0) * mean_z;
    let fwd_horizon = (b.1 + t_max - a.0).max(T::zero()) + margin;
    let lowest_window = b.0 + t_min - a.1;
    let need_backward = !sampler.positive_spacings() || lowest_window <= T::zero();
    let back_horizon = lowest_window.min(T::zero()) - margin;
    let cap = 100_000_000usize;

    let n_t = t_grid.len();
    let sums: Vec<Vec<T>> = (0..n_replicas)
        .into_par_iter()
        .map(|rep| -> Result<Vec<T>> {
            let (fwd_x, back_x) = if need_backward {
                let two = sampler.sample_two_sided(fwd_horizon, back_horizon, cap, seed, rep as u64)?;
                (two.fwd.x, two.x_back)
            } else {
                let path = sampler.sample_until(fwd_horizon, cap, seed, rep as u64)?;
                (path.x, Vec::new())
            };
            // positions with n >= 1 (exclude the origin atom X_0 = 0)
            let mut fwd = fwd_x[1..].to_vec();
            fwd.sort_by(|u, v| u.partial_cmp(v).unwrap());
            let mut back = back_x;
            back.sort_by(|u, v| u.partial_cmp(v).unwrap());
            let mut s = vec![T::zero(); n_t];
            for (ti, &t) in t_grid.iter().enumerate() {
                let mut acc = T::zero();
                for g in 0..xg.len() {
                    let lo = b.0 + t - xg[g];
                    let hi = b.1 + t - xg[g];
                    let mut c = count_in(&fwd, lo, hi);
                    if need_backward {
                        c += count_in(&back, lo, hi);
                    }
                    acc = acc + wg[g] * T::of_usize(c);
                }
                s[ti] = acc;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;

    let len_a = a.1 - a.0;
    let len_b = b.1 - b.0;
    let mean_product = len_a * len_b / (mean_z * mean_z);
    let mut raw_hat = vec![T::zero(); n_t];
    let mut cov_hat = vec![T::zero(); n_t];
    let mut stderr = vec![T::zero(); n_t];
    for ti in 0..n_t {
        let col: Vec<T> = sums.iter().map(|s| s[ti] / mean_z).collect();
        raw_hat[ti] = stats::mean(&col);
        cov_hat[ti] = raw_hat[ti] - mean_product;
        stderr[ti] = stats::standard_error(&col);
    }
    Ok(CovarianceCurve {
        interval_a: a,
        interval_b: b,
        t_grid: t_grid.to_vec(),
        raw_hat,
        cov_hat,
        stderr,
        intensity_hat: mean_z.recip(),
        estimator: "palm-renewal",
    })
}

/// Occupation time `int_{s_lo}^{s_hi} Phi(I + s) ds` for sorted points.
fn occupation<T: Scalar>(points: &[T], interval: (T, T), s_lo: T, s_hi: T) -> T {
    // point p contributes |[p - i_hi, p - i_lo] cap [s_lo, s_hi]|
    let mut total = T::zero();
    let lo_idx = points.partition_point(|&p| p < s_lo + interval.0);
    let hi_idx = points.partition_point(|&p| p <= s_hi + interval.1);
    for &p in &points[lo_idx..hi_idx] {
        let lo = (p - interval.1).max(s_lo);
        let hi = (p - interval.0).min(s_hi);
        if hi > lo {
            total = total + (hi - lo);
        }
    }
    total
}

/// `int_{s_lo}^{s_hi} Phi(A + s) Phi(B + t + s) ds` by a sweep over pairs.
fn pair_products<T: Scalar>(points: &[T], a: (T, T), b: (T, T), t: T, s_lo: T, s_hi: T) -> T {
    let mut total = T::zero();
    let i_lo = points.partition_point(|&p| p < s_lo + a.0);
    let i_hi = points.partition_point(|&p| p <= s_hi + a.1);
    for &pi in &points[i_lo..i_hi] {
        let si_lo = (pi - a.1).max(s_lo);
        let si_hi = (pi - a.0).min(s_hi);
        if si_hi <= si_lo {
            continue;
        }
        let j_lo = points.partition_point(|&p| p < si_lo + t + b.0);
        let j_hi = points.partition_point(|&p| p <= si_hi + t + b.1);
        for &pj in &points[j_lo..j_hi] {
            let lo = si_lo.max(pj - t - b.1);
            let hi = si_hi.min(pj - t - b.0);
            if hi > lo {
                total = total + (hi - lo);
            }
        }
    }
    total
}

/// Ergodic-average estimator of the covariance over a window `[0, window_t]`
/// of a single long path, with batch-means standard errors.
pub fn second_moment_ergodic<T: Scalar>(
    path: &SpacingPath<T>,
    a: (T, T),
    b: (T, T),
    t_grid: &[T],
    window_t: T,
) -> Result<CovarianceCurve<T>> {
    check_intervals(a, b, t_grid)?;
    let t_max = t_grid.iter().fold(T::neg_infinity(), |m, &t| m.max(t));
    let span_needed = window_t + t_max + b.1.max(a.1) + T::one();
    let x_max = path.x.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    if x_max < span_needed {
        return Err(Error::InsufficientData(format!(
            "path spans {x_max}, need at least {span_needed} for window {window_t}"
        )));
    }
    let mut points = path.x.clone();
    points.sort_by(|u, v| u.partial_cmp(v).unwrap());

    let n_t = t_grid.len();
    let batch_width = window_t / T::of_usize(N_BATCHES);
    let mut raw_hat = vec![T::zero(); n_t];
    let mut cov_hat = vec![T::zero(); n_t];
    let mut stderr = vec![T::zero(); n_t];
    for (ti, &t) in t_grid.iter().enumerate() {
        let mut batch_cov = Vec::with_capacity(N_BATCHES);
        let mut batch_raw = Vec::with_capacity(N_BATCHES);
        for bi in 0..N_BATCHES {
            let s_lo = batch_width * T::of_usize(bi);
            let s_hi = s_lo + batch_width;
            let prod = pair_products(&points, a, b, t, s_lo, s_hi) / batch_width;
            let occ_a = occupation(&points, a, s_lo, s_hi) / batch_width;
            let occ_b = occupation(&points, b, s_lo, s_hi) / batch_width;
            batch_raw.push(prod);
            batch_cov.push(prod - occ_a * occ_b);
        }
        raw_hat[ti] = stats::mean(&batch_raw);
        cov_hat[ti] = stats::mean(&batch_cov);
        stderr[ti] = stats::standard_error(&batch_cov);
    }
    let intensity_hat =
        T::of_usize(count_in(&points, T::zero(), window_t)) / window_t;
    Ok(CovarianceCurve {
        interval_a: a,
        interval_b: b,
        t_grid: t_grid.to_vec(),
        raw_hat,
        cov_hat,
        stderr,
        intensity_hat,
        estimator: "ergodic-average",
    })
}

/// Exponential-moment growth-rate estimates at one `delta`.
#[derive(Debug, Clone, Copy)]
pub struct AlphaEstimate<T> {
    pub delta: T,
    /// `(1/n) log mean exp(delta X_n)`.
    pub alpha: T,
    /// Same at `n/2`, as a convergence diagnostic.
    pub alpha_half: T,
    pub n: usize,
}

impl<T: Scalar> AlphaEstimate<T> {
    pub fn convergence_gap(&self) -> T {
        (self.alpha - self.alpha_half).abs()
    }
}

/// Estimate the growth rate `alpha(delta) = (1/n) log E_pi[exp(delta X_n)]`
/// by replica averaging; the average is taken in log space (log-sum-exp), so
/// large exponents rescale exactly.
pub fn growth_rate_alpha<T: Scalar>(
    sampler: &Sampler<T>,
    delta_grid: &[T],
    n: usize,
    n_replicas: usize,
    seed: u64,
) -> Result<Vec<AlphaEstimate<T>>> {
    if n < 2 {
        return Err(Error::Precondition("need n >= 2 steps".into()));
    }
    if n_replicas < 2 {
        return Err(Error::Config("need at least 2 replicas".into()));
    }
    let endpoints: Vec<(T, T)> = (0..n_replicas)
        .into_par_iter()
        .map(|rep| -> Result<(T, T)> {
            let path = sampler.sample_n(n, seed, rep as u64)?;
            Ok((path.x[n / 2], path.x[n]))
        })
        .collect::<Result<Vec<_>>>()?;
    let log_n = T::of_usize(n_replicas).ln();
    Ok(delta_grid
        .iter()
        .map(|&delta| {
            let full: Vec<T> = endpoints.iter().map(|&(_, x)| delta * x).collect();
            let half: Vec<T> = endpoints.iter().map(|&(h, _)| delta * h).collect();
            AlphaEstimate {
                delta,
                alpha: (stats::log_sum_exp(&full) - log_n) / T::of_usize(n),
                alpha_half: (stats::log_sum_exp(&half) - log_n) / T::of_usize(n / 2),
                n,
            }
        })
        .collect())
}

/// Exponential fit of `|cov_hat|` against the shift, sharing the renewal
/// module's noise-floor policy.
pub fn fit_covariance_decay<T: Scalar>(curve: &CovarianceCurve<T>) -> Result<DecayOutcome<T>> {
    let series = DeviationSeries {
        t: curve.t_grid.clone(),
        deviation: curve.cov_hat.clone(),
        stderr: curve.stderr.clone(),
        limit: T::zero(),
    };
    fit_decay(&series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::RenewalLaw;

    fn lattice_path(n: usize) -> SpacingPath<f64> {
        let z = vec![1.0; n];
        let mut x = vec![0.0];
        for &s in &z {
            x.push(x.last().unwrap() + s);
        }
        SpacingPath {
            seed: 0,
            stream_id: 0,
            model_tag: "lattice".into(),
            init_label: "deterministic".into(),
            z,
            x,
            block_len: 1,
        }
    }

    #[test]
    fn lattice_product_moment_is_one_at_integer_shifts() {
        let path = lattice_path(200);
        let a = (0.0, 0.999);
        let curve =
            second_moment_ergodic(&path, a, a, &[2.0, 3.0, 5.0], 120.0).unwrap();
        for (i, &raw) in curve.raw_hat.iter().enumerate() {
            assert!(
                (raw - 1.0).abs() < 1e-9,
                "t = {}: raw {raw}",
                curve.t_grid[i]
            );
            assert!(curve.cov_hat[i].abs() < 1e-9);
        }
        assert!((curve.intensity_hat - 1.0).abs() < 0.02);
    }

    #[test]
    fn poisson_covariance_vanishes_both_estimators() {
        let sampler = Sampler::renewal(RenewalLaw::Exponential { rate: 1.0 }).unwrap();
        let t_grid = [2.0, 5.0, 10.0];
        let a = (0.0, 1.0);
        let palm = second_moment_palm(&sampler, a, a, &t_grid, 3000, 17).unwrap();
        for i in 0..t_grid.len() {
            assert!(
                palm.cov_hat[i].abs() <= 4.0 * palm.stderr[i],
                "palm t = {}: cov {} se {}",
                t_grid[i],
                palm.cov_hat[i],
                palm.stderr[i]
            );
        }
        let path = sampler.sample_until(4200.0, 10_000_000, 3, 0).unwrap();
        let erg = second_moment_ergodic(&path, a, a, &t_grid, 4000.0).unwrap();
        for i in 0..t_grid.len() {
            assert!(
                erg.cov_hat[i].abs() <= 4.0 * erg.stderr[i],
                "ergodic t = {}: cov {} se {}",
                t_grid[i],
                erg.cov_hat[i],
                erg.stderr[i]
            );
        }
    }

    #[test]
    fn overlapping_windows_rejected() {
        let sampler = Sampler::renewal(RenewalLaw::Exponential { rate: 1.0 }).unwrap();
        let r = second_moment_palm(&sampler, (0.0, 1.0), (0.0, 1.0), &[0.5], 10, 0);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn alpha_zero_is_exact_and_positive_deltas_finite() {
        let sampler = Sampler::renewal(RenewalLaw::Uniform { lo: 0.9, hi: 1.1 }).unwrap();
        let est = growth_rate_alpha(&sampler, &[0.0, 0.1], 64, 2000, 5).unwrap();
        assert_eq!(est[0].alpha, 0.0);
        assert_eq!(est[0].alpha_half, 0.0);
        // uniform[0.9, 1.1]: alpha(0.1) = log E[exp(0.1 Z)] ~ 0.1 + 0.1^2 var/2
        let expect = (0.1f64 * 1.0) + 0.1f64.powi(2) * (0.2f64.powi(2) / 12.0) / 2.0;
        assert!(
            (est[1].alpha - expect).abs() < 5e-3,
            "alpha {} vs {expect}",
            est[1].alpha
        );
        assert!(est[1].convergence_gap() < 5e-3);
    }

    #[test]
    fn covariance_fit_recovers_synthetic_rate() {
        let t_grid: Vec<f64> = (1..=12).map(|i| i as f64).collect();
        let curve = CovarianceCurve {
            interval_a: (0.0, 1.0),
            interval_b: (0.0, 1.0),
            cov_hat: t_grid.iter().map(|&t| 0.3 * (-0.5 * t).exp()).collect(),
            raw_hat: vec![0.0; t_grid.len()],
            stderr: vec![1e-8; t_grid.len()],
            t_grid,
            intensity_hat: 1.0,
            estimator: "palm-renewal",
        };
        match fit_covariance_decay(&curve).unwrap() {
            DecayOutcome::Fit(fit) => {
                assert!(fit.rate >= 0.45 && fit.rate <= 0.55, "rate {}", fit.rate);
            }
            DecayOutcome::BelowNoise { .. } => panic!("synthetic curve is above noise"),
        }
    }
}

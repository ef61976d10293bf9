//! Discretized transfer operator: kernel assembly on a truncated grid,
//! Krein-Rutman principal eigenpair, spacing transition kernel with its
//! stationary law, Gibbs free energy, mean spacing and pressure inversion.
//!
//! The Nystrom discretization replaces the integral operator
//! `(Kf)(z) = int K(z, z') f(z') dz'` by the matrix `A = K diag(w)` on the
//! tensor quadrature grid. All eigen quantities below refer to that matrix;
//! the reported residual is the per-node relative defect
//! `max_i |(A phi)_i - lambda phi_i| / (lambda phi_i)`, which is also the
//! exact row-sum defect of the un-renormalized transition matrix.

use crate::error::{Error, Result};
use crate::linalg::{dot_w, norm_w, Mat};
use crate::models::{v_intra, w_cross, HarmonicParams, PairPotential};
use crate::quad::QuadratureGrid;
use crate::scalar::{tol_stationary, tol_strict, Scalar};
use rayon::prelude::*;

/// How to lay the quadrature grid for a Gibbs model.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec<T> {
    /// Total 1-D node count (rounded up to a whole number of panels).
    pub n_nodes: usize,
    /// Gauss-Legendre degree per panel.
    pub panel_degree: usize,
    /// Truncation point; `None` picks `r_hc + 40 / (beta p)`, which covers
    /// the `exp(-beta p z)` kernel tail to below 1e-17.
    pub z_max: Option<T>,
}

impl<T: Scalar> Default for GridSpec<T> {
    fn default() -> Self {
        GridSpec {
            n_nodes: 512,
            panel_degree: 8,
            z_max: None,
        }
    }
}

impl<T: Scalar> GridSpec<T> {
    pub fn with_nodes(n_nodes: usize) -> Self {
        GridSpec {
            n_nodes,
            ..Self::default()
        }
    }

    /// Build the grid for a Gibbs model at inverse temperature `beta` and
    /// pressure `p`.
    pub fn build_gibbs(&self, potential: &PairPotential<T>, beta: T, p: T) -> Result<QuadratureGrid<T>> {
        if !(beta > T::zero()) || !(p > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "need beta > 0 and p > 0, got ({beta}, {p})"
            )));
        }
        let r_hc = potential.r_hc();
        let z_max = self
            .z_max
            .unwrap_or_else(|| r_hc + T::of(40.0) / (beta * p));
        let degree = self.panel_degree.max(1);
        let panels = self.n_nodes.div_ceil(degree).max(1);
        QuadratureGrid::gauss_legendre(r_hc, z_max, panels, degree, potential.k())
    }
}

/// Assemble the discretized transfer kernel
/// `K(z, z') = exp(-beta (V_p(z)/2 + W(z; z') + V_p(z')/2))`
/// over the tensor grid, `V_p` including the pressure term.
pub fn assemble_kernel<T: Scalar>(
    potential: &PairPotential<T>,
    beta: T,
    p: T,
    grid: &QuadratureGrid<T>,
) -> Result<Mat<T>> {
    if grid.k() != potential.k() {
        return Err(Error::GridMismatch(format!(
            "grid dimension {} != potential block dimension {}",
            grid.k(),
            potential.k()
        )));
    }
    if grid.lo() < potential.r_hc() {
        return Err(Error::GridMismatch(
            "grid reaches below the hard core".into(),
        ));
    }
    let n = grid.n_states();
    let states: Vec<Vec<T>> = (0..n).map(|s| grid.state_nodes(s)).collect();
    let half_vp: Vec<T> = states
        .iter()
        .enumerate()
        .map(|(s, z)| (v_intra(potential, z) + p * grid.state_sum(s)) * T::of(0.5))
        .collect();

    let mut rows: Vec<Vec<T>> = Vec::with_capacity(n);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let zi = &states[i];
            (0..n)
                .map(|j| {
                    let w = w_cross(potential, zi, &states[j]);
                    (-beta * (half_vp[i] + w + half_vp[j])).exp()
                })
                .collect::<Vec<T>>()
        })
        .collect_into_vec(&mut rows);

    let mut kernel = Mat::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        kernel.row_mut(i).copy_from_slice(&row);
    }
    Ok(kernel)
}

/// Dominant eigenpair of the discretized transfer operator.
#[derive(Debug, Clone)]
pub struct PrincipalEigen<T> {
    /// Dominant eigenvalue of the Nystrom matrix.
    pub lambda0: T,
    /// Right eigenfunction on the tensor grid, strictly positive,
    /// normalized so that `<phi0, psi0>_w = 1`.
    pub phi0: Vec<T>,
    /// Left eigenfunction `psi0 = phi0 o s` (component order reversal).
    pub psi0: Vec<T>,
    /// Per-node relative defect of the eigen-relation.
    pub residual: T,
    /// `<phi0, psi0>` quadrature inner product after normalization.
    pub normalization: T,
    /// `|lambda1| / lambda0` when a second-eigenvalue run was requested.
    pub gap_ratio: Option<T>,
    /// Iterations used by the power method.
    pub iterations: usize,
    /// Residual tolerance the solve was run with.
    pub tol: T,
}

/// Options for the power iteration.
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions<T> {
    pub tol: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for EigenOptions<T> {
    fn default() -> Self {
        EigenOptions {
            tol: tol_strict::<T>(),
            max_iterations: 100_000,
        }
    }
}

fn weighted_matvec<T: Scalar>(kernel: &Mat<T>, weights: &[T], x: &[T]) -> Vec<T> {
    let xw: Vec<T> = weights.iter().zip(x.iter()).map(|(&w, &v)| w * v).collect();
    kernel.matvec(&xw)
}

/// Power iteration with quadrature-weighted inner products.
pub fn principal_eigen<T: Scalar>(
    kernel: &Mat<T>,
    grid: &QuadratureGrid<T>,
) -> Result<PrincipalEigen<T>> {
    principal_eigen_with(kernel, grid, EigenOptions::default())
}

pub fn principal_eigen_with<T: Scalar>(
    kernel: &Mat<T>,
    grid: &QuadratureGrid<T>,
    opts: EigenOptions<T>,
) -> Result<PrincipalEigen<T>> {
    let n = grid.n_states();
    if kernel.rows() != n || kernel.cols() != n {
        return Err(Error::GridMismatch(format!(
            "kernel is {}x{} but grid has {} states",
            kernel.rows(),
            kernel.cols(),
            n
        )));
    }
    let weights: Vec<T> = (0..n).map(|s| grid.state_weight(s)).collect();
    let mut x = vec![T::one(); n];
    let mut lambda = T::one();
    let mut residual = T::infinity();
    let mut iterations = 0;
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let y = weighted_matvec(kernel, &weights, &x);
        lambda = dot_w(&weights, &x, &y) / dot_w(&weights, &x, &x);
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::EigenNoConvergence {
                residual: residual.as_f64(),
                iterations,
                tol: opts.tol.as_f64(),
            });
        }
        residual = (0..n)
            .map(|i| (y[i] / (lambda * x[i]) - T::one()).abs())
            .fold(T::zero(), T::max);
        // renormalize by the max component to keep the iterate in range
        let m = y.iter().fold(T::zero(), |a, &b| a.max(b));
        x = y.iter().map(|&v| v / m).collect();
        if residual <= opts.tol {
            break;
        }
    }
    if residual > opts.tol {
        return Err(Error::EigenNoConvergence {
            residual: residual.as_f64(),
            iterations,
            tol: opts.tol.as_f64(),
        });
    }
    if x.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::Inconsistency(
            "principal eigenfunction not strictly positive".into(),
        ));
    }
    // normalize <phi, phi o s>_w = 1
    let x_rev: Vec<T> = (0..n).map(|i| x[grid.reverse_state(i)]).collect();
    let c = dot_w(&weights, &x, &x_rev).sqrt();
    let phi0: Vec<T> = x.iter().map(|&v| v / c).collect();
    let psi0: Vec<T> = (0..n).map(|i| phi0[grid.reverse_state(i)]).collect();
    let normalization = dot_w(&weights, &phi0, &psi0);
    Ok(PrincipalEigen {
        lambda0: lambda,
        phi0,
        psi0,
        residual,
        normalization,
        gap_ratio: None,
        iterations,
        tol: opts.tol,
    })
}

/// Estimate `|lambda1| / lambda0` by orthogonal iteration on a 2-dimensional
/// block under the quadrature inner product.
pub fn spectral_gap_ratio<T: Scalar>(
    kernel: &Mat<T>,
    grid: &QuadratureGrid<T>,
    eigen: &PrincipalEigen<T>,
) -> T {
    let n = grid.n_states();
    let weights: Vec<T> = (0..n).map(|s| grid.state_weight(s)).collect();
    let mut v1 = eigen.phi0.clone();
    let nv1 = norm_w(&weights, &v1);
    v1.iter_mut().for_each(|v| *v = *v / nv1);
    let mut v2: Vec<T> = (0..n)
        .map(|i| if i % 2 == 0 { T::one() } else { -T::one() })
        .collect();
    let mut last = T::infinity();
    let mut ratio = T::zero();
    for it in 0..300 {
        let u1 = weighted_matvec(kernel, &weights, &v1);
        let u2 = weighted_matvec(kernel, &weights, &v2);
        // weighted QR of [u1 u2]
        let r11 = norm_w(&weights, &u1);
        let q1: Vec<T> = u1.iter().map(|&v| v / r11).collect();
        let r12 = dot_w(&weights, &q1, &u2);
        let mut q2: Vec<T> = u2
            .iter()
            .zip(q1.iter())
            .map(|(&u, &q)| u - r12 * q)
            .collect();
        let r22 = norm_w(&weights, &q2);
        if !(r22 > T::zero()) {
            return T::zero(); // exactly rank one
        }
        q2.iter_mut().for_each(|v| *v = *v / r22);
        v1 = q1;
        v2 = q2;
        if it % 5 == 4 {
            let a1 = weighted_matvec(kernel, &weights, &v1);
            let a2 = weighted_matvec(kernel, &weights, &v2);
            let b11 = dot_w(&weights, &v1, &a1);
            let b12 = dot_w(&weights, &v1, &a2);
            let b21 = dot_w(&weights, &v2, &a1);
            let b22 = dot_w(&weights, &v2, &a2);
            let tr = b11 + b22;
            let det = b11 * b22 - b12 * b21;
            let disc = tr * tr / T::of(4.0) - det;
            let (m_hi, m_lo) = if disc >= T::zero() {
                let root = disc.sqrt();
                let l1 = tr / T::of(2.0) + root;
                let l2 = tr / T::of(2.0) - root;
                (l1.abs().max(l2.abs()), l1.abs().min(l2.abs()))
            } else {
                let modulus = det.abs().sqrt();
                (modulus, modulus)
            };
            ratio = if m_hi > T::zero() { m_lo / m_hi } else { T::zero() };
            if (ratio - last).abs() <= T::of(1e-8) + ratio * T::of(1e-6) {
                return ratio;
            }
            last = ratio;
        }
    }
    ratio
}

/// Row-stochastic spacing transition kernel with its stationary vector.
#[derive(Debug, Clone)]
pub struct TransitionModel<T> {
    matrix: Mat<T>,
    pi: Vec<T>,
    grid: QuadratureGrid<T>,
    beta: T,
    pressure: Option<T>,
    residual: T,
    tag: String,
}

impl<T: Scalar> TransitionModel<T> {
    /// Build `P(z_i -> z_j) = K_ij phi_j w_j / (lambda0 phi_i)` from a
    /// converged eigenpair, renormalizing rows to exact stochasticity.
    pub fn from_eigen(
        eigen: &PrincipalEigen<T>,
        kernel: &Mat<T>,
        grid: &QuadratureGrid<T>,
        beta: T,
        pressure: Option<T>,
        tag: impl Into<String>,
    ) -> Result<Self> {
        if eigen.residual > eigen.tol {
            return Err(Error::Precondition(format!(
                "eigen residual {} above tolerance {}",
                eigen.residual, eigen.tol
            )));
        }
        let n = grid.n_states();
        let mut matrix = Mat::zeros(n, n);
        let max_dev = T::of(100.0) * eigen.residual.max(T::epsilon() * T::of(16.0));
        for i in 0..n {
            let mut sum = T::zero();
            {
                let row = matrix.row_mut(i);
                for j in 0..n {
                    let v = kernel.get(i, j) * eigen.phi0[j] * grid.state_weight(j)
                        / (eigen.lambda0 * eigen.phi0[i]);
                    row[j] = v;
                    sum = sum + v;
                }
            }
            if (sum - T::one()).abs() > max_dev {
                return Err(Error::Inconsistency(format!(
                    "row {i} sums to {sum}, deviating more than 100x the eigen residual"
                )));
            }
            let row = matrix.row_mut(i);
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        let mut pi: Vec<T> = (0..n)
            .map(|s| grid.state_weight(s) * eigen.phi0[s] * eigen.psi0[s])
            .collect();
        let total: T = pi.iter().copied().sum();
        pi.iter_mut().for_each(|v| *v = *v / total);
        Ok(TransitionModel {
            matrix,
            pi,
            grid: grid.clone(),
            beta,
            pressure,
            residual: eigen.residual,
            tag: tag.into(),
        })
    }

    /// Wrap explicit rows and a stationary vector (synthetic chains,
    /// discretized AR(1) kernels). Rows are renormalized; `pi` must be a
    /// probability vector stationary for the renormalized rows.
    pub fn from_rows(
        grid: QuadratureGrid<T>,
        mut matrix: Mat<T>,
        mut pi: Vec<T>,
        beta: T,
        pressure: Option<T>,
        tag: impl Into<String>,
    ) -> Result<Self> {
        let n = grid.n_states();
        if matrix.rows() != n || matrix.cols() != n || pi.len() != n {
            return Err(Error::GridMismatch("rows/pi size mismatch with grid".into()));
        }
        for i in 0..n {
            let row = matrix.row_mut(i);
            if row.iter().any(|&v| v < T::zero()) {
                return Err(Error::InvalidParameter(format!("negative mass in row {i}")));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > T::of(1e-6) {
                return Err(Error::InvalidParameter(format!(
                    "row {i} sums to {sum}, not a probability row"
                )));
            }
            row.iter_mut().for_each(|v| *v = *v / sum);
        }
        let total: T = pi.iter().copied().sum();
        pi.iter_mut().for_each(|v| *v = *v / total);
        let model = TransitionModel {
            matrix,
            pi,
            grid,
            beta,
            pressure,
            residual: T::zero(),
            tag: tag.into(),
        };
        let gap = model.stationary_gap();
        if gap > T::of(1e-8).max(tol_stationary::<T>()) {
            return Err(Error::Inconsistency(format!(
                "pi is not stationary for the given rows (l1 gap {gap})"
            )));
        }
        Ok(TransitionModel {
            residual: gap,
            ..model
        })
    }

    pub fn n_states(&self) -> usize {
        self.grid.n_states()
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.matrix.row(i)
    }

    pub fn pi(&self) -> &[T] {
        &self.pi
    }

    pub fn grid(&self) -> &QuadratureGrid<T> {
        &self.grid
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn pressure(&self) -> Option<T> {
        self.pressure
    }

    pub fn residual(&self) -> T {
        self.residual
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// `||pi P - pi||_1` on the grid.
    pub fn stationary_gap(&self) -> T {
        let pi_p = self.matrix.vecmat(&self.pi);
        pi_p.iter()
            .zip(self.pi.iter())
            .map(|(&a, &b)| (a - b).abs())
            .sum()
    }

    /// Mean spacing under the stationary law, averaging block components.
    pub fn mean_spacing_pi(&self) -> T {
        (0..self.n_states())
            .map(|s| self.pi[s] * self.grid.state_mean(s))
            .sum()
    }

    /// Stationary mass of a state subset.
    pub fn pi_mass(&self, states: impl Iterator<Item = usize>) -> T {
        states.map(|s| self.pi[s]).sum()
    }

    /// Time-reversed transition matrix `P*(i, j) = pi_j P(j, i) / pi_i`,
    /// rows renormalized. For reversible chains this equals `P`.
    pub fn reversed_matrix(&self) -> Mat<T> {
        let n = self.n_states();
        let mut rev = Mat::zeros(n, n);
        for i in 0..n {
            let mut sum = T::zero();
            {
                let row = rev.row_mut(i);
                for j in 0..n {
                    let v = self.pi[j] * self.matrix.get(j, i) / self.pi[i];
                    row[j] = v;
                    sum = sum + v;
                }
            }
            let row = rev.row_mut(i);
            row.iter_mut().for_each(|v| *v = *v / sum);
        }
        rev
    }
}

/// Gibbs free energy `g(p) = (1/k) log lambda0(beta, p)`.
pub fn gibbs_free_energy<T: Scalar>(
    potential: &PairPotential<T>,
    beta: T,
    p: T,
    spec: &GridSpec<T>,
) -> Result<T> {
    let grid = spec.build_gibbs(potential, beta, p)?;
    let kernel = assemble_kernel(potential, beta, p, &grid)?;
    let eigen = principal_eigen(&kernel, &grid)?;
    Ok(eigen.lambda0.ln() / T::of_usize(potential.k()))
}

/// Mean spacing computed along two routes that must agree.
#[derive(Debug, Clone, Copy)]
pub struct MeanSpacing<T> {
    /// `-(1/beta) d g / d p` by central finite difference.
    pub finite_diff: T,
    /// `E_pi[mean block component]` from the stationary law.
    pub stationary: T,
}

impl<T: Scalar> MeanSpacing<T> {
    /// The value used downstream (stationary-law route).
    pub fn ell(&self) -> T {
        self.stationary
    }
}

/// Mean spacing `ell(p)`, via the pressure derivative of the free energy and
/// via the stationary expectation; errors when the two disagree beyond
/// `max(1e-6, 5 residual)`, which signals a too-coarse discretization.
pub fn mean_spacing<T: Scalar>(
    potential: &PairPotential<T>,
    beta: T,
    p: T,
    spec: &GridSpec<T>,
) -> Result<MeanSpacing<T>> {
    let grid = spec.build_gibbs(potential, beta, p)?;
    let kernel = assemble_kernel(potential, beta, p, &grid)?;
    let eigen = principal_eigen(&kernel, &grid)?;
    let model = TransitionModel::from_eigen(&eigen, &kernel, &grid, beta, Some(p), "gibbs")?;
    let stationary = model.mean_spacing_pi();

    let h = T::of(1e-4) * p;
    let g_plus = gibbs_free_energy(potential, beta, p + h, spec)?;
    let g_minus = gibbs_free_energy(potential, beta, p - h, spec)?;
    let finite_diff = -(g_plus - g_minus) / (T::of(2.0) * h) / beta;

    let tol = T::of(1e-6).max(T::of(5.0) * eigen.residual);
    if (finite_diff - stationary).abs() > tol {
        return Err(Error::Inconsistency(format!(
            "mean spacing routes disagree: finite-diff {finite_diff} vs stationary {stationary} (tol {tol})"
        )));
    }
    Ok(MeanSpacing {
        finite_diff,
        stationary,
    })
}

fn ell_stationary<T: Scalar>(
    potential: &PairPotential<T>,
    beta: T,
    p: T,
    spec: &GridSpec<T>,
) -> Result<T> {
    let grid = spec.build_gibbs(potential, beta, p)?;
    let kernel = assemble_kernel(potential, beta, p, &grid)?;
    let eigen = principal_eigen(&kernel, &grid)?;
    let model = TransitionModel::from_eigen(&eigen, &kernel, &grid, beta, Some(p), "gibbs")?;
    Ok(model.mean_spacing_pi())
}

const PRESSURE_CAP: f64 = 1e8;

/// Solve `ell(p) = 1 / target_intensity` for the pressure by bisection.
pub fn solve_pressure<T: Scalar>(
    potential: &PairPotential<T>,
    beta: T,
    target_intensity: T,
    spec: &GridSpec<T>,
) -> Result<T> {
    let r_hc = potential.r_hc();
    if !(target_intensity > T::zero()) || target_intensity >= r_hc.recip() {
        return Err(Error::InfeasibleDensity(format!(
            "target intensity {target_intensity} outside (0, 1/r_hc = {})",
            r_hc.recip()
        )));
    }
    let target_ell = target_intensity.recip();
    let cap = T::of(PRESSURE_CAP);
    let floor = T::of(1.0 / PRESSURE_CAP);

    // ell is strictly decreasing in p; bracket by doubling/halving from 1.
    let mut p = T::one();
    let mut ell = ell_stationary(potential, beta, p, spec)?;
    let (mut lo, mut hi);
    if ell > target_ell {
        // need larger pressure
        loop {
            let p_next = p * T::of(2.0);
            if p_next > cap {
                return Err(Error::SearchFailure(format!(
                    "pressure exceeded cap {cap} while bracketing intensity {target_intensity}"
                )));
            }
            let e = ell_stationary(potential, beta, p_next, spec)?;
            if e <= target_ell {
                lo = p;
                hi = p_next;
                break;
            }
            p = p_next;
        }
    } else {
        loop {
            let p_next = p / T::of(2.0);
            if p_next < floor {
                return Err(Error::SearchFailure(format!(
                    "pressure fell below {floor} while bracketing intensity {target_intensity}"
                )));
            }
            let e = ell_stationary(potential, beta, p_next, spec)?;
            if e >= target_ell {
                lo = p_next;
                hi = p;
                break;
            }
            p = p_next;
        }
        ell = ell_stationary(potential, beta, lo, spec)?;
        let _ = ell;
    }
    // bisection to relative 1e-6 in p (with headroom)
    let rel_tol = T::of(1e-7);
    while (hi - lo) > rel_tol * hi {
        let mid = (lo + hi) / T::of(2.0);
        let e = ell_stationary(potential, beta, mid, spec)?;
        if e > target_ell {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / T::of(2.0))
}

/// Upper bound for the exponential-moment growth rate of the spacing sums:
/// `(1/k) log(lambda0(p - 2 theta / beta) / lambda0(p))` for
/// `0 < theta < beta p / 2`.
///
/// Tilting by `exp(theta sum z)` lowers the effective pressure, so the bound
/// uses the eigenvalue at the reduced pressure; it is nonnegative and
/// increasing in `theta`.
pub fn exp_moment_growth_bound<T: Scalar>(
    potential: &PairPotential<T>,
    beta: T,
    p: T,
    theta: T,
    spec: &GridSpec<T>,
) -> Result<T> {
    if !(theta > T::zero()) || theta >= beta * p / T::of(2.0) {
        return Err(Error::Precondition(format!(
            "theta {theta} outside (0, beta p / 2 = {})",
            beta * p / T::of(2.0)
        )));
    }
    let g_tilted = gibbs_free_energy(potential, beta, p - T::of(2.0) * theta / beta, spec)?;
    let g_base = gibbs_free_energy(potential, beta, p, spec)?;
    Ok(g_tilted - g_base)
}

/// Discretize the harmonic-chain AR(1) transition kernel on a Gauss-Legendre
/// grid spanning `half_width_sds` stationary deviations around the mean.
pub fn harmonic_transition<T: Scalar>(
    params: &HarmonicParams<T>,
    n_nodes: usize,
    panel_degree: usize,
    half_width_sds: T,
) -> Result<TransitionModel<T>> {
    if !(half_width_sds > T::zero()) {
        return Err(Error::InvalidParameter("grid half-width must be positive".into()));
    }
    let lo = params.a - half_width_sds * params.stat_sd;
    let hi = params.a + half_width_sds * params.stat_sd;
    let degree = panel_degree.max(1);
    let panels = n_nodes.div_ceil(degree).max(1);
    let grid = QuadratureGrid::gauss_legendre(lo, hi, panels, degree, 1)?;
    let n = grid.n_points();
    let norm_pdf = |x: T, mean: T, sd: T| {
        let zscore = (x - mean) / sd;
        (-zscore * zscore / T::of(2.0)).exp() / (sd * (T::of(2.0) * T::PI()).sqrt())
    };
    let mut matrix = Mat::zeros(n, n);
    for i in 0..n {
        let mean = params.a + params.rho_ar * (grid.node(i) - params.a);
        let mut sum = T::zero();
        {
            let row = matrix.row_mut(i);
            for j in 0..n {
                let v = grid.weight(j) * norm_pdf(grid.node(j), mean, params.noise_sd);
                row[j] = v;
                sum = sum + v;
            }
        }
        let row = matrix.row_mut(i);
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
    let mut pi: Vec<T> = (0..n)
        .map(|j| grid.weight(j) * norm_pdf(grid.node(j), params.a, params.stat_sd))
        .collect();
    let total: T = pi.iter().copied().sum();
    pi.iter_mut().for_each(|v| *v = *v / total);
    let model = TransitionModel {
        matrix,
        pi,
        grid,
        beta: params.beta,
        pressure: None,
        residual: T::zero(),
        tag: "harmonic".into(),
    };
    let gap = model.stationary_gap();
    Ok(TransitionModel {
        residual: gap,
        ..model
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::harmonic_derive;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn hard_rod_setup(
        n_nodes: usize,
        z_max: f64,
        p: f64,
    ) -> (QuadratureGrid<f64>, Mat<f64>, PrincipalEigen<f64>) {
        let pot = PairPotential::hard_rod(1.0).unwrap();
        let spec = GridSpec {
            n_nodes,
            panel_degree: 8,
            z_max: Some(z_max),
        };
        let grid = spec.build_gibbs(&pot, 1.0, p).unwrap();
        let kernel = assemble_kernel(&pot, 1.0, p, &grid).unwrap();
        let eigen = principal_eigen(&kernel, &grid).unwrap();
        (grid, kernel, eigen)
    }

    #[test]
    fn kernel_entry_square_well_example() {
        // hand evaluation: V_p(1.2) = v(1.2) + 1.2 = 0.7, W = v(2.4) = -0.5
        let pot = PairPotential::square_well(1.0, 2.5, -0.5).unwrap();
        let grid = QuadratureGrid::gauss_legendre(1.0, 3.0, 1, 4, 1).unwrap();
        let kernel = assemble_kernel(&pot, 1.0, 1.0, &grid).unwrap();
        // evaluate the same formula directly (grid nodes do not land on 1.2)
        let (v, w) = crate::models::v_total(&pot, &[1.2], &[1.2]).unwrap();
        let entry = (-(0.5 * (v + 1.2) + w + 0.5 * (v + 1.2))).exp();
        assert_abs_diff_eq!(entry, (-0.2f64).exp(), epsilon = 1e-15);
        assert!(kernel.get(0, 0) > 0.0);
    }

    #[test]
    fn kernel_strictly_positive_and_rank_one_for_hard_rod() {
        let (grid, kernel, _) = hard_rod_setup(64, 21.0, 1.0);
        let n = grid.n_points();
        for i in 0..n {
            for j in 0..n {
                assert!(kernel.get(i, j) > 0.0);
                // rank one: K_ij = u_i u_j with u = exp(-z/2)
                let expect = (-(grid.node(i) + grid.node(j)) / 2.0).exp();
                assert_relative_eq!(kernel.get(i, j), expect, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn hard_rod_eigenvalue_matches_analytic() {
        let (grid, _, eigen) = hard_rod_setup(512, 41.0, 1.0);
        assert_abs_diff_eq!(eigen.lambda0, (-1.0f64).exp(), epsilon = 1e-10);
        // phi0 proportional to exp(-z/2)
        let ratios: Vec<f64> = (0..grid.n_points())
            .map(|i| eigen.phi0[i] / (-grid.node(i) / 2.0).exp())
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        for r in ratios {
            assert_relative_eq!(r, mean, max_relative = 1e-8);
        }
        assert_abs_diff_eq!(eigen.normalization, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_kernel_sanity() {
        let grid = QuadratureGrid::midpoint(0.0, 16.0, 16, 1).unwrap();
        assert!(grid.weights().iter().all(|&w| w == 1.0));
        let kernel = Mat::identity(16);
        let eigen = principal_eigen(&kernel, &grid).unwrap();
        assert_abs_diff_eq!(eigen.lambda0, 1.0, epsilon = 1e-12);
        let first = eigen.phi0[0];
        for &v in &eigen.phi0 {
            assert_relative_eq!(v, first, max_relative = 1e-10);
        }
    }

    #[test]
    fn kernel_inversion_symmetry_k2() {
        let pot = PairPotential::square_well(1.0, 3.5, -0.4).unwrap();
        assert_eq!(pot.k(), 2);
        let grid = QuadratureGrid::gauss_legendre(1.0, 6.0, 2, 4, 2).unwrap();
        let kernel = assemble_kernel(&pot, 1.0, 1.0, &grid).unwrap();
        for i in 0..grid.n_states() {
            for j in 0..grid.n_states() {
                let si = grid.reverse_state(i);
                let sj = grid.reverse_state(j);
                assert_eq!(kernel.get(i, j), kernel.get(sj, si));
            }
        }
    }

    #[test]
    fn spectral_gap_vanishes_for_rank_one() {
        let (grid, kernel, eigen) = hard_rod_setup(64, 21.0, 1.0);
        let ratio = spectral_gap_ratio(&kernel, &grid, &eigen);
        assert!(ratio < 1e-10, "rank-one kernel has no second eigenvalue, got {ratio}");
    }

    #[test]
    fn hard_rod_transition_rows_are_shifted_exponential() {
        let (grid, kernel, eigen) = hard_rod_setup(256, 41.0, 1.0);
        let model =
            TransitionModel::from_eigen(&eigen, &kernel, &grid, 1.0, Some(1.0), "hard_rod").unwrap();
        // oracle: direct normalization of exp(-beta p z) on the grid
        let mut q: Vec<f64> = (0..grid.n_points())
            .map(|j| (-grid.node(j)).exp() * grid.weight(j))
            .collect();
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        for i in [0usize, 17, 128, 255] {
            for j in 0..grid.n_points() {
                assert_abs_diff_eq!(model.row(i)[j], q[j], epsilon = 1e-12);
            }
        }
        // i.i.d. chain: every row identical
        for j in 0..grid.n_points() {
            assert_eq!(model.row(3)[j], model.row(200)[j]);
        }
    }

    #[test]
    fn transition_stationarity_and_detailed_balance() {
        let pot = PairPotential::square_well(1.0, 2.5, -0.5).unwrap();
        let spec = GridSpec::with_nodes(256);
        let grid = spec.build_gibbs(&pot, 1.0, 1.0).unwrap();
        let kernel = assemble_kernel(&pot, 1.0, 1.0, &grid).unwrap();
        let eigen = principal_eigen(&kernel, &grid).unwrap();
        let model =
            TransitionModel::from_eigen(&eigen, &kernel, &grid, 1.0, Some(1.0), "square_well")
                .unwrap();
        assert!(model.stationary_gap() <= 1e-10, "gap {}", model.stationary_gap());
        // k = 1 kernels are symmetric, so the chain is reversible
        let n = model.n_states();
        for i in (0..n).step_by(37) {
            for j in (0..n).step_by(41) {
                let a = model.pi()[i] * model.row(i)[j];
                let b = model.pi()[j] * model.row(j)[i];
                assert_abs_diff_eq!(a, b, epsilon = 1e-10 * (a.abs() + 1.0));
            }
        }
        // rows sum to one exactly after renormalization
        for i in 0..n {
            let s: f64 = model.row(i).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reversal_conjugated_kernel_gives_same_pi() {
        let pot = PairPotential::square_well(1.0, 3.5, -0.4).unwrap();
        let grid = QuadratureGrid::gauss_legendre(1.0, 9.0, 3, 8, 2).unwrap();
        let kernel = assemble_kernel(&pot, 1.0, 1.0, &grid).unwrap();
        let eigen = principal_eigen(&kernel, &grid).unwrap();
        let model = TransitionModel::from_eigen(&eigen, &kernel, &grid, 1.0, Some(1.0), "sw2").unwrap();
        // s-conjugated kernel: K'(i, j) = K(s(i), s(j))
        let n = grid.n_states();
        let conj = Mat::from_fn(n, n, |i, j| {
            kernel.get(grid.reverse_state(i), grid.reverse_state(j))
        });
        let eigen_c = principal_eigen(&conj, &grid).unwrap();
        let model_c = TransitionModel::from_eigen(&eigen_c, &conj, &grid, 1.0, Some(1.0), "sw2r").unwrap();
        assert_relative_eq!(eigen.lambda0, eigen_c.lambda0, max_relative = 1e-12);
        let diff: f64 = model
            .pi()
            .iter()
            .zip(model_c.pi().iter())
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        assert!(diff <= 1e-10, "pi mismatch {diff}");
    }

    #[test]
    fn free_energy_hard_rod_analytic() {
        let pot = PairPotential::hard_rod(1.0).unwrap();
        let spec = GridSpec::with_nodes(256);
        let mut last = f64::INFINITY;
        for p in [0.5, 1.0, 2.0, 4.0] {
            let g = gibbs_free_energy(&pot, 1.0, p, &spec).unwrap();
            assert_abs_diff_eq!(g, -p - p.ln(), epsilon = 1e-10);
            assert!(g < last, "g must decrease in p");
            last = g;
        }
    }

    #[test]
    fn free_energy_slope_brackets_mean_spacing() {
        let pot = PairPotential::square_well(1.0, 2.5, -0.5).unwrap();
        let spec = GridSpec::with_nodes(128);
        let (p, dp) = (1.0, 0.05);
        let g0 = gibbs_free_energy(&pot, 1.0, p, &spec).unwrap();
        let g1 = gibbs_free_energy(&pot, 1.0, p + dp, &spec).unwrap();
        let ell = mean_spacing(&pot, 1.0, p, &spec).unwrap();
        let ell_hi = mean_spacing(&pot, 1.0, p + dp, &spec).unwrap();
        // concavity: -ell(p) dp <= g(p+dp) - g(p) <= -ell(p+dp) dp
        assert!(g1 - g0 <= -ell_hi.ell() * dp + 1e-12);
        assert!(g1 - g0 >= -ell.ell() * dp - 1e-12);
    }

    #[test]
    fn mean_spacing_hard_rod() {
        let pot = PairPotential::hard_rod(1.0).unwrap();
        let spec = GridSpec::with_nodes(256);
        let ms = mean_spacing(&pot, 1.0, 1.0, &spec).unwrap();
        assert_abs_diff_eq!(ms.stationary, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(ms.finite_diff, 2.0, epsilon = 1e-7);
        // ell decreases toward r_hc as p grows
        let mut last = ms.stationary;
        for p in [4.0, 8.0, 16.0] {
            let e = mean_spacing(&pot, 1.0, p, &spec).unwrap().ell();
            assert!(e < last && e > 1.0);
            last = e;
        }
    }

    #[test]
    fn pressure_inversion_hard_rod() {
        let pot = PairPotential::hard_rod(1.0).unwrap();
        let spec = GridSpec::with_nodes(192);
        let p = solve_pressure(&pot, 1.0, 0.5, &spec).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn pressure_inversion_square_well_self_consistent() {
        let pot = PairPotential::square_well(1.0, 2.5, -0.5).unwrap();
        let spec = GridSpec::with_nodes(128);
        let p = solve_pressure(&pot, 1.0, 0.4, &spec).unwrap();
        let ell = mean_spacing(&pot, 1.0, p, &spec).unwrap().ell();
        assert_abs_diff_eq!(ell * 0.4, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn pressure_inversion_rejects_infeasible() {
        let pot = PairPotential::hard_rod(1.0).unwrap();
        let spec = GridSpec::with_nodes(64);
        assert!(matches!(
            solve_pressure(&pot, 1.0, 1.0, &spec),
            Err(Error::InfeasibleDensity(_))
        ));
        // close packing: required pressure beyond the cap
        assert!(matches!(
            solve_pressure(&pot, 1.0, 1.0 - 1e-12, &spec),
            Err(Error::SearchFailure(_))
        ));
    }

    #[test]
    fn exp_moment_bound_hard_rod() {
        let pot = PairPotential::hard_rod(1.0).unwrap();
        let spec = GridSpec::with_nodes(256);
        // frozen oracle: log(lambda0(0.5)/lambda0(1)) = 0.5 + log 2
        let b = exp_moment_growth_bound(&pot, 1.0, 1.0, 0.25, &spec).unwrap();
        assert_abs_diff_eq!(b, 1.193147180559945, epsilon = 1e-9);
        // continuity at zero
        let b0 = exp_moment_growth_bound(&pot, 1.0, 1.0, 1e-6, &spec).unwrap();
        assert!(b0.abs() < 1e-4);
        // monotone increasing in theta
        let mut last = 0.0;
        for theta in [0.05, 0.1, 0.2, 0.3, 0.4] {
            let b = exp_moment_growth_bound(&pot, 1.0, 1.0, theta, &spec).unwrap();
            assert!(b > last);
            last = b;
        }
        assert!(exp_moment_growth_bound(&pot, 1.0, 1.0, 0.5, &spec).is_err());
        assert!(exp_moment_growth_bound(&pot, 1.0, 1.0, -0.1, &spec).is_err());
    }

    #[test]
    fn truncation_insensitive_at_default_z_max() {
        let pot = PairPotential::hard_rod(1.0).unwrap();
        let base = hard_rod_setup(512, 41.0, 1.0).2.lambda0;
        let longer = hard_rod_setup(768, 61.0, 1.0).2.lambda0;
        assert!((base - longer).abs() < 1e-10);
        let pot_sw = PairPotential::square_well(1.0, 2.5, -0.5).unwrap();
        let l = |z_max: f64, n: usize| {
            let spec = GridSpec {
                n_nodes: n,
                panel_degree: 8,
                z_max: Some(z_max),
            };
            let grid = spec.build_gibbs(&pot_sw, 1.0, 1.0).unwrap();
            let kernel = assemble_kernel(&pot_sw, 1.0, 1.0, &grid).unwrap();
            principal_eigen(&kernel, &grid).unwrap().lambda0
        };
        // keep the panel layout fixed while extending the truncation
        assert!((l(41.0, 512) - l(61.5, 768)).abs() < 1e-10);
    }

    #[test]
    fn refinement_converges() {
        // analytic kernel: doubling the nodes moves lambda0 by less than
        // 10x the residual
        let l256 = hard_rod_setup(256, 41.0, 1.0).2;
        let l512 = hard_rod_setup(512, 41.0, 1.0).2;
        assert!((l256.lambda0 - l512.lambda0).abs() <= 10.0 * l512.residual.max(l256.residual));
        // discontinuous well: refinement still contracts the change
        let pot = PairPotential::square_well(1.0, 2.5, -0.5).unwrap();
        let l = |n: usize| {
            let spec = GridSpec {
                n_nodes: n,
                panel_degree: 8,
                z_max: Some(41.0),
            };
            let grid = spec.build_gibbs(&pot, 1.0, 1.0).unwrap();
            let kernel = assemble_kernel(&pot, 1.0, 1.0, &grid).unwrap();
            principal_eigen(&kernel, &grid).unwrap().lambda0
        };
        let (a, b, c) = (l(128), l(256), l(512));
        assert!((c - b).abs() < (b - a).abs());
    }

    #[test]
    fn harmonic_transition_stationary() {
        let params = harmonic_derive(1.0, 0.3, 1.0, 1.0).unwrap();
        let model = harmonic_transition(&params, 160, 8, 8.0).unwrap();
        assert!(model.stationary_gap() <= 1e-10, "gap {}", model.stationary_gap());
        assert_abs_diff_eq!(model.mean_spacing_pi(), 1.0, epsilon = 1e-10);
        // reversible: time reversal leaves the matrix unchanged
        let rev = model.reversed_matrix();
        let n = model.n_states();
        for i in (0..n).step_by(13) {
            for j in (0..n).step_by(17) {
                assert_abs_diff_eq!(
                    rev.get(i, j),
                    model.matrix().get(i, j),
                    epsilon = 1e-9 * (model.matrix().get(i, j) + 1.0)
                );
            }
        }
    }

    #[test]
    fn from_rows_validates() {
        let grid = QuadratureGrid::midpoint(0.0, 4.0, 4, 1).unwrap();
        let row = vec![0.25f64; 4];
        let m = Mat::from_fn(4, 4, |_, j| row[j]);
        let model = TransitionModel::from_rows(grid.clone(), m, row.clone(), 1.0, None, "iid").unwrap();
        assert!(model.stationary_gap() <= 1e-15);
        // non-stationary pi rejected
        let m2 = Mat::from_fn(4, 4, |_, j| row[j]);
        assert!(TransitionModel::from_rows(
            grid,
            m2,
            vec![0.7, 0.1, 0.1, 0.1],
            1.0,
            None,
            "bad"
        )
        .is_err());
    }
}

//! Spacing models: hard-core finite-range pair potentials and the harmonic
//! chain, with their closed-form constants.
//!
//! A pair potential here is hard core below `r_hc` (encoded as a flag, never
//! as an infinite float), finite on `(r_hc, range_r]` and exactly zero beyond
//! the range. The block size `m` and the chain dimension `k = m - 1` (with
//! `k = 1` when `m = 1`) come from the range-to-core ratio: `range_r <
//! (m + 1) * r_hc`, so that blocks of `k` consecutive spacings interact with
//! at most the neighbouring block.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Functional form of the finite part of a pair potential on `(r_hc, range_r]`.
#[derive(Debug, Clone)]
pub enum PotentialForm<T> {
    /// Constant value `depth` on the whole interval.
    SquareWell { depth: T },
    /// Piecewise-linear interpolation through `(nodes, values)`; flat beyond
    /// the first/last node within the interval.
    Table { nodes: Vec<T>, values: Vec<T> },
}

/// Hard-core, finite-range pair interaction.
#[derive(Debug, Clone)]
pub struct PairPotential<T> {
    r_hc: T,
    range_r: T,
    lower_bound: T,
    block_m: usize,
    k: usize,
    form: PotentialForm<T>,
}

fn minimal_block_m<T: Scalar>(r_hc: T, range_r: T) -> usize {
    let q = (range_r / r_hc).as_f64();
    let mut m = (q.floor() as usize).max(1);
    while T::of_usize(m + 1) * r_hc <= range_r {
        m += 1;
    }
    m
}

impl<T: Scalar> PairPotential<T> {
    fn new(r_hc: T, range_r: T, lower_bound: T, form: PotentialForm<T>) -> Result<Self> {
        if !(r_hc > T::zero()) || !r_hc.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "hard core must be positive and finite, got {r_hc}"
            )));
        }
        if !(range_r > r_hc) || !range_r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "range {range_r} must satisfy r_hc {r_hc} < range < inf"
            )));
        }
        if !lower_bound.is_finite() {
            return Err(Error::InvalidParameter(
                "potential must be bounded below by a finite value".into(),
            ));
        }
        let block_m = minimal_block_m(r_hc, range_r);
        let k = if block_m >= 2 { block_m - 1 } else { 1 };
        debug_assert!(T::of_usize(k + 2) * r_hc >= range_r);
        Ok(PairPotential {
            r_hc,
            range_r,
            lower_bound,
            block_m,
            k,
            form,
        })
    }

    /// Constant-depth well on `(r_hc, range_r]`.
    pub fn square_well(r_hc: T, range_r: T, depth: T) -> Result<Self> {
        if !depth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "square-well depth must be finite, got {depth}"
            )));
        }
        Self::new(r_hc, range_r, depth, PotentialForm::SquareWell { depth })
    }

    /// Pure hard rod: no interaction beyond the core.
    pub fn hard_rod(r_hc: T) -> Result<Self> {
        // Any range in (r_hc, 2 r_hc) gives m = 1, k = 1 and v = 0.
        Self::square_well(r_hc, r_hc * T::of(1.5), T::zero())
    }

    /// Piecewise-linear tabulated potential on `(r_hc, range_r]`.
    pub fn table(r_hc: T, range_r: T, nodes: Vec<T>, values: Vec<T>) -> Result<Self> {
        if nodes.len() != values.len() || nodes.is_empty() {
            return Err(Error::InvalidParameter(
                "table needs matching, non-empty node/value arrays".into(),
            ));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "table nodes must be strictly increasing".into(),
            ));
        }
        if nodes[0] <= r_hc || *nodes.last().unwrap() > range_r {
            return Err(Error::InvalidParameter(
                "table nodes must lie in (r_hc, range_r]".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("table values must be finite".into()));
        }
        let lower = values.iter().fold(values[0], |a, &b| a.min(b));
        Self::new(r_hc, range_r, lower, PotentialForm::Table { nodes, values })
    }

    /// Override the block size upward (larger `m`, hence larger `k`, is
    /// always admissible).
    pub fn with_block_m(mut self, m: usize) -> Result<Self> {
        let minimal = minimal_block_m(self.r_hc, self.range_r);
        if m < minimal {
            return Err(Error::InvalidParameter(format!(
                "block_m {m} below minimal admissible {minimal}"
            )));
        }
        self.block_m = m;
        self.k = if m >= 2 { m - 1 } else { 1 };
        Ok(self)
    }

    pub fn r_hc(&self) -> T {
        self.r_hc
    }

    pub fn range_r(&self) -> T {
        self.range_r
    }

    pub fn lower_bound(&self) -> T {
        self.lower_bound
    }

    pub fn block_m(&self) -> usize {
        self.block_m
    }

    /// Markov block dimension of the spacing chain.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn form(&self) -> &PotentialForm<T> {
        &self.form
    }

    /// True if `r` is inside the hard core.
    pub fn is_hard_core(&self, r: T) -> bool {
        r <= self.r_hc
    }

    /// Finite part of the potential; exactly zero beyond the range.
    ///
    /// Callers must keep `r` outside the hard core.
    pub fn eval(&self, r: T) -> T {
        debug_assert!(r > self.r_hc, "eval inside hard core");
        if r > self.range_r {
            return T::zero();
        }
        match &self.form {
            PotentialForm::SquareWell { depth } => *depth,
            PotentialForm::Table { nodes, values } => {
                if r <= nodes[0] {
                    return values[0];
                }
                if r >= *nodes.last().unwrap() {
                    return *values.last().unwrap();
                }
                let idx = nodes.partition_point(|&n| n < r);
                let (x0, x1) = (nodes[idx - 1], nodes[idx]);
                let (y0, y1) = (values[idx - 1], values[idx]);
                y0 + (y1 - y0) * (r - x0) / (x1 - x0)
            }
        }
    }
}

/// Interaction energy of a block and its coupling to the next block.
///
/// Returns `(v_intra, w_cross)` where `v_intra` is the within-block pair sum
/// (without any pressure term) and `w_cross` couples the block `spacings` to
/// the following block `primed`. Terms whose separation exceeds the range
/// contribute exactly zero.
pub fn v_total<T: Scalar>(
    potential: &PairPotential<T>,
    spacings: &[T],
    primed: &[T],
) -> Result<(T, T)> {
    let k = potential.k();
    if spacings.len() != k || primed.len() != k {
        return Err(Error::GridMismatch(format!(
            "expected blocks of length k = {k}, got {} and {}",
            spacings.len(),
            primed.len()
        )));
    }
    for &z in spacings.iter().chain(primed.iter()) {
        if potential.is_hard_core(z) {
            return Err(Error::HardCore {
                spacing: z.as_f64(),
                r_hc: potential.r_hc().as_f64(),
            });
        }
    }
    Ok((
        v_intra(potential, spacings),
        w_cross(potential, spacings, primed),
    ))
}

/// Within-block pair sum over all contiguous spacing windows.
pub(crate) fn v_intra<T: Scalar>(potential: &PairPotential<T>, z: &[T]) -> T {
    let range = potential.range_r();
    let mut total = T::zero();
    for a in 0..z.len() {
        let mut arg = T::zero();
        for b in a..z.len() {
            arg = arg + z[b];
            if arg > range {
                break; // longer windows only grow
            }
            total = total + potential.eval(arg);
        }
    }
    total
}

/// Cross-block pair sum `sum_{i,j} v(z_i + .. + z_k + z'_1 + .. + z'_j)`.
pub(crate) fn w_cross<T: Scalar>(potential: &PairPotential<T>, z: &[T], zp: &[T]) -> T {
    let range = potential.range_r();
    let k = z.len();
    let mut total = T::zero();
    // suffix sums of z, built from the rightmost spacing out
    let mut suffix = T::zero();
    for i in (0..k).rev() {
        suffix = suffix + z[i];
        if suffix > range {
            break;
        }
        let mut arg = suffix;
        for j in 0..k {
            arg = arg + zp[j];
            if arg > range {
                break;
            }
            total = total + potential.eval(arg);
        }
    }
    total
}

/// Harmonic chain with nearest and next-nearest neighbour springs, and the
/// derived AR(1) representation of its spacing chain.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicParams<T> {
    pub k1: T,
    pub k2: T,
    pub a: T,
    pub beta: T,
    /// `sqrt((k1/2 + k2)^2 - k2^2)`
    pub c: T,
    /// `k1/2 + k2 + c`
    pub gamma: T,
    /// AR(1) coefficient `-k2 / gamma`
    pub rho_ar: T,
    /// Innovation standard deviation `1 / sqrt(beta * gamma)`
    pub noise_sd: T,
    /// Stationary standard deviation `1 / sqrt(2 * beta * c)`
    pub stat_sd: T,
}

/// Derive all closed-form constants of the harmonic spacing chain.
///
/// `k2 = 0` is admitted and degenerates to i.i.d. `N(a, 1/(beta k1))`
/// spacings.
pub fn harmonic_derive<T: Scalar>(k1: T, k2: T, a: T, beta: T) -> Result<HarmonicParams<T>> {
    if !(k1 > T::zero()) || !(a > T::zero()) || !(beta > T::zero()) || k2 < T::zero() {
        return Err(Error::InvalidParameter(format!(
            "need k1 > 0, k2 >= 0, a > 0, beta > 0; got ({k1}, {k2}, {a}, {beta})"
        )));
    }
    let half_sum = k1 / T::of(2.0) + k2;
    let c = (half_sum * half_sum - k2 * k2).sqrt();
    let gamma = half_sum + c;
    let rho_ar = -k2 / gamma;
    let noise_sd = (beta * gamma).sqrt().recip();
    let stat_sd = (T::of(2.0) * beta * c).sqrt().recip();
    Ok(HarmonicParams {
        k1,
        k2,
        a,
        beta,
        c,
        gamma,
        rho_ar,
        noise_sd,
        stat_sd,
    })
}

impl<T: Scalar> HarmonicParams<T> {
    /// Long-run variance of the spacing average,
    /// `stat_sd^2 (1 + rho) / (1 - rho)`; used for standard errors of path
    /// means.
    pub fn long_run_variance(&self) -> T {
        self.stat_sd * self.stat_sd * (T::one() + self.rho_ar) / (T::one() - self.rho_ar)
    }
}

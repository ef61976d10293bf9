//! Spacing-chain samplers: the grid kernel chain for Gibbs models, the exact
//! Gaussian AR(1) sampler for the harmonic chain, and i.i.d. renewal
//! baselines.
//!
//! Randomness comes from a counter-based generator keyed by
//! `(seed, stream_id)`, so distinct streams can be sampled concurrently and
//! any fixed key reproduces its path bit for bit. Grid states are emitted as
//! spacings by jittering uniformly within the node's quadrature cell, which
//! keeps the simulated spacing laws absolutely continuous.

use crate::error::{Error, Result};
use crate::models::HarmonicParams;
use crate::quad::QuadratureGrid;
use crate::scalar::{std_normal, uniform_co, uniform_oc, Scalar};
use crate::transfer::TransitionModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Law of the first emitted spacing block.
#[derive(Debug, Clone)]
pub enum InitLaw<T> {
    /// Draw the first block from the stationary law.
    Stationary,
    /// Start from a fixed spacing value (mapped to its grid cell for grid
    /// chains).
    PointMass(T),
    /// Draw the first block from an explicit state distribution (the
    /// minorising measure `nu`, typically). Grid chains only.
    StateDistribution(Vec<T>),
}

impl<T> InitLaw<T> {
    pub fn label(&self) -> &'static str {
        match self {
            InitLaw::Stationary => "stationary",
            InitLaw::PointMass(_) => "point-mass",
            InitLaw::StateDistribution(_) => "nu",
        }
    }
}

/// A simulated spacing path with its provenance.
#[derive(Debug, Clone)]
pub struct SpacingPath<T> {
    pub seed: u64,
    pub stream_id: u64,
    pub model_tag: String,
    pub init_label: String,
    /// Spacings `Z_1 .. Z_n`.
    pub z: Vec<T>,
    /// Positions `X_0 = 0, X_j = X_{j-1} + Z_j`.
    pub x: Vec<T>,
    /// Block length of the driving chain (`k` for Gibbs grids, 1 otherwise).
    pub block_len: usize,
}

impl<T: Scalar> SpacingPath<T> {
    fn from_spacings(
        z: Vec<T>,
        seed: u64,
        stream_id: u64,
        model_tag: String,
        init_label: String,
        block_len: usize,
    ) -> Self {
        let mut x = Vec::with_capacity(z.len() + 1);
        x.push(T::zero());
        for &s in &z {
            x.push(*x.last().unwrap() + s);
        }
        SpacingPath {
            seed,
            stream_id,
            model_tag,
            init_label,
            z,
            x,
            block_len,
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// A two-sided stationary path sharing the first block's window.
///
/// The forward part carries `X_0 = 0, X_1, ...`; `x_back[j]` is `X_{-(j+1)}`
/// and `z_back[j]` is `Z_{-j}` (so `z_back[0] = Z_0`). Backward steps use the
/// time-reversed kernel, which for reversible chains is the forward kernel.
#[derive(Debug, Clone)]
pub struct TwoSidedPath<T> {
    pub fwd: SpacingPath<T>,
    pub z_back: Vec<T>,
    pub x_back: Vec<T>,
}

/// Named i.i.d. spacing laws for renewal baselines.
#[derive(Debug, Clone, Copy)]
pub enum RenewalLaw<T> {
    Exponential { rate: T },
    ShiftedExponential { shift: T, rate: T },
    Uniform { lo: T, hi: T },
}

impl<T: Scalar> RenewalLaw<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RenewalLaw::Exponential { rate } | RenewalLaw::ShiftedExponential { rate, .. } => {
                if !(rate > T::zero()) {
                    return Err(Error::InvalidParameter(format!("rate {rate} must be > 0")));
                }
            }
            RenewalLaw::Uniform { lo, hi } => {
                if !(hi > lo) {
                    return Err(Error::InvalidParameter(format!(
                        "uniform law needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> T {
        match *self {
            RenewalLaw::Exponential { rate } => rate.recip(),
            RenewalLaw::ShiftedExponential { shift, rate } => shift + rate.recip(),
            RenewalLaw::Uniform { lo, hi } => (lo + hi) / T::of(2.0),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> T {
        match *self {
            RenewalLaw::Exponential { rate } => -uniform_oc::<T, _>(rng).ln() / rate,
            RenewalLaw::ShiftedExponential { shift, rate } => {
                shift - uniform_oc::<T, _>(rng).ln() / rate
            }
            RenewalLaw::Uniform { lo, hi } => lo + uniform_co::<T, _>(rng) * (hi - lo),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            RenewalLaw::Exponential { .. } => "renewal-exponential",
            RenewalLaw::ShiftedExponential { .. } => "renewal-shifted-exponential",
            RenewalLaw::Uniform { .. } => "renewal-uniform",
        }
    }
}

fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

fn cdf_rows<T: Scalar>(rows: &crate::linalg::Mat<T>) -> Vec<T> {
    let n = rows.rows();
    let mut cdf = vec![T::zero(); n * n];
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..n {
            acc = acc + rows.get(i, j);
            cdf[i * n + j] = acc;
        }
        cdf[i * n + n - 1] = T::one().max(acc);
    }
    cdf
}

fn cdf_vec<T: Scalar>(p: &[T]) -> Vec<T> {
    let mut acc = T::zero();
    let mut cdf: Vec<T> = p
        .iter()
        .map(|&v| {
            acc = acc + v;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = T::one().max(*last);
    }
    cdf
}

fn sample_cdf<T: Scalar>(cdf: &[T], u: T) -> usize {
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

/// Prepared sampler for any of the three model families.
#[derive(Debug, Clone)]
pub struct Sampler<T> {
    kind: SamplerKind<T>,
    tag: String,
    mean_spacing: T,
}

#[derive(Debug, Clone)]
enum SamplerKind<T> {
    Grid(Box<GridChain<T>>),
    Harmonic {
        params: HarmonicParams<T>,
        init: InitLaw<T>,
    },
    Renewal(RenewalLaw<T>),
}

#[derive(Debug, Clone)]
struct GridChain<T> {
    grid: QuadratureGrid<T>,
    cdf: Vec<T>,
    rev_cdf: Vec<T>,
    pi_cdf: Vec<T>,
    init: InitLaw<T>,
}

impl<T: Scalar> GridChain<T> {
    fn n(&self) -> usize {
        self.grid.n_states()
    }

    fn row_cdf(&self, i: usize) -> &[T] {
        &self.cdf[i * self.n()..(i + 1) * self.n()]
    }

    fn rev_row_cdf(&self, i: usize) -> &[T] {
        &self.rev_cdf[i * self.n()..(i + 1) * self.n()]
    }

    fn init_state(&self, rng: &mut ChaCha8Rng) -> Result<usize> {
        match &self.init {
            InitLaw::Stationary => Ok(sample_cdf(&self.pi_cdf, uniform_co(rng))),
            InitLaw::PointMass(z) => {
                let idx = self.grid.locate(*z);
                let mut multi = [0usize; crate::quad::MAX_K];
                multi[..self.grid.k()].fill(idx);
                Ok(self.grid.state_index(&multi))
            }
            InitLaw::StateDistribution(nu) => {
                if nu.len() != self.n() {
                    return Err(Error::GridMismatch(
                        "init distribution length differs from state count".into(),
                    ));
                }
                Ok(sample_cdf(&cdf_vec(nu), uniform_co(rng)))
            }
        }
    }

    /// Jitter the state's components within their quadrature cells.
    fn emit(&self, state: usize, rng: &mut ChaCha8Rng, out: &mut Vec<T>) {
        let multi = self.grid.multi_index(state);
        for d in 0..self.grid.k() {
            let (lo, hi) = self.grid.cell(multi[d]);
            out.push(lo + uniform_oc::<T, _>(rng) * (hi - lo));
        }
    }

    /// Same cells, components emitted in reverse order (backward direction).
    fn emit_reversed(&self, state: usize, rng: &mut ChaCha8Rng, out: &mut Vec<T>) {
        let multi = self.grid.multi_index(state);
        for d in (0..self.grid.k()).rev() {
            let (lo, hi) = self.grid.cell(multi[d]);
            out.push(lo + uniform_oc::<T, _>(rng) * (hi - lo));
        }
    }
}

impl<T: Scalar> Sampler<T> {
    /// Grid chain sampler over a transition model.
    pub fn gibbs(model: &TransitionModel<T>, init: InitLaw<T>) -> Self {
        let chain = GridChain {
            grid: model.grid().clone(),
            cdf: cdf_rows(model.matrix()),
            rev_cdf: cdf_rows(&model.reversed_matrix()),
            pi_cdf: cdf_vec(model.pi()),
            init,
        };
        Sampler {
            tag: model.tag().to_string(),
            mean_spacing: model.mean_spacing_pi(),
            kind: SamplerKind::Grid(Box::new(chain)),
        }
    }

    /// Exact AR(1) sampler for the harmonic chain.
    pub fn harmonic(params: HarmonicParams<T>, init: InitLaw<T>) -> Self {
        Sampler {
            tag: "harmonic".into(),
            mean_spacing: params.a,
            kind: SamplerKind::Harmonic { params, init },
        }
    }

    /// I.i.d. renewal baseline.
    pub fn renewal(law: RenewalLaw<T>) -> Result<Self> {
        law.validate()?;
        Ok(Sampler {
            tag: law.tag().into(),
            mean_spacing: law.mean(),
            kind: SamplerKind::Renewal(law),
        })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Mean spacing of the stationary law (model-level, not path-level).
    pub fn mean_spacing(&self) -> T {
        self.mean_spacing
    }

    /// True when the model cannot produce non-positive spacings.
    pub fn positive_spacings(&self) -> bool {
        match &self.kind {
            SamplerKind::Grid(c) => c.grid.lo() >= T::zero(),
            SamplerKind::Harmonic { .. } => false,
            SamplerKind::Renewal(law) => match *law {
                RenewalLaw::Exponential { .. } => true,
                RenewalLaw::ShiftedExponential { shift, .. } => shift >= T::zero(),
                RenewalLaw::Uniform { lo, .. } => lo >= T::zero(),
            },
        }
    }

    pub fn block_len(&self) -> usize {
        match &self.kind {
            SamplerKind::Grid(c) => c.grid.k(),
            _ => 1,
        }
    }

    pub fn init_label(&self) -> &'static str {
        match &self.kind {
            SamplerKind::Grid(c) => c.init.label(),
            SamplerKind::Harmonic { init, .. } => init.label(),
            SamplerKind::Renewal(_) => "iid",
        }
    }

    /// Sample exactly `n` spacings.
    pub fn sample_n(&self, n: usize, seed: u64, stream_id: u64) -> Result<SpacingPath<T>> {
        if n == 0 {
            return Err(Error::Precondition("need n >= 1 spacings".into()));
        }
        let mut rng = stream_rng(seed, stream_id);
        let z = self.generate(&mut rng, |z, _| z.len() >= n)?;
        let mut z = z;
        z.truncate(n);
        Ok(SpacingPath::from_spacings(
            z,
            seed,
            stream_id,
            self.tag.clone(),
            self.init_label().into(),
            self.block_len(),
        ))
    }

    /// Sample until the walk exceeds `x_exceed` (positive-drift horizon).
    pub fn sample_until(
        &self,
        x_exceed: T,
        cap: usize,
        seed: u64,
        stream_id: u64,
    ) -> Result<SpacingPath<T>> {
        let mut rng = stream_rng(seed, stream_id);
        let z = self.generate(&mut rng, |z, x| !z.is_empty() && *x > x_exceed)?;
        if z.len() >= cap {
            return Err(Error::Config(format!(
                "path hit the {cap}-step cap before reaching {x_exceed}"
            )));
        }
        Ok(SpacingPath::from_spacings(
            z,
            seed,
            stream_id,
            self.tag.clone(),
            self.init_label().into(),
            self.block_len(),
        ))
    }

    fn generate(
        &self,
        rng: &mut ChaCha8Rng,
        done: impl Fn(&[T], &T) -> bool,
    ) -> Result<Vec<T>> {
        let cap = 100_000_000usize;
        let mut z: Vec<T> = Vec::new();
        let mut x = T::zero();
        match &self.kind {
            SamplerKind::Grid(chain) => {
                let mut state = chain.init_state(rng)?;
                loop {
                    let before = z.len();
                    chain.emit(state, rng, &mut z);
                    for &s in &z[before..] {
                        x = x + s;
                    }
                    if done(&z, &x) || z.len() >= cap {
                        break;
                    }
                    state = sample_cdf(chain.row_cdf(state), uniform_co(rng));
                }
            }
            SamplerKind::Harmonic { params, init } => {
                let mut current = match init {
                    InitLaw::Stationary => {
                        params.a + params.stat_sd * std_normal::<T, _>(rng)
                    }
                    InitLaw::PointMass(z0) => *z0,
                    InitLaw::StateDistribution(_) => {
                        return Err(Error::Precondition(
                            "state-distribution init applies to grid chains only".into(),
                        ))
                    }
                };
                loop {
                    z.push(current);
                    x = x + current;
                    if done(&z, &x) || z.len() >= cap {
                        break;
                    }
                    current = params.a
                        + params.rho_ar * (current - params.a)
                        + params.noise_sd * std_normal::<T, _>(rng);
                }
            }
            SamplerKind::Renewal(law) => loop {
                let s = law.draw(rng);
                z.push(s);
                x = x + s;
                if done(&z, &x) || z.len() >= cap {
                    break;
                }
            },
        }
        Ok(z)
    }

    /// Stationary two-sided path: forward until `X > fwd_exceed`, backward
    /// until `X < back_below`, sharing the first block.
    pub fn sample_two_sided(
        &self,
        fwd_exceed: T,
        back_below: T,
        cap: usize,
        seed: u64,
        stream_id: u64,
    ) -> Result<TwoSidedPath<T>> {
        let mut rng = stream_rng(seed, stream_id);
        let (z_fwd, z_back) = match &self.kind {
            SamplerKind::Grid(chain) => {
                if !matches!(chain.init, InitLaw::Stationary) {
                    return Err(Error::Precondition(
                        "two-sided sampling requires stationary init".into(),
                    ));
                }
                let first = chain.init_state(&mut rng)?;
                let mut z_fwd: Vec<T> = Vec::new();
                let mut x = T::zero();
                let mut state = first;
                loop {
                    let before = z_fwd.len();
                    chain.emit(state, &mut rng, &mut z_fwd);
                    for &s in &z_fwd[before..] {
                        x = x + s;
                    }
                    if (x > fwd_exceed && !z_fwd.is_empty()) || z_fwd.len() >= cap {
                        break;
                    }
                    state = sample_cdf(chain.row_cdf(state), uniform_co(&mut rng));
                }
                // backward via the time-reversed kernel
                let mut z_back: Vec<T> = Vec::new();
                let mut xb = T::zero();
                let mut bstate = first;
                loop {
                    bstate = sample_cdf(chain.rev_row_cdf(bstate), uniform_co(&mut rng));
                    let before = z_back.len();
                    chain.emit_reversed(bstate, &mut rng, &mut z_back);
                    for &s in &z_back[before..] {
                        xb = xb - s;
                    }
                    if xb < back_below || z_back.len() >= cap {
                        break;
                    }
                }
                (z_fwd, z_back)
            }
            SamplerKind::Harmonic { params, init } => {
                if !matches!(init, InitLaw::Stationary) {
                    return Err(Error::Precondition(
                        "two-sided sampling requires stationary init".into(),
                    ));
                }
                let first = params.a + params.stat_sd * std_normal::<T, _>(&mut rng);
                let step = |from: T, rng: &mut ChaCha8Rng| {
                    params.a + params.rho_ar * (from - params.a)
                        + params.noise_sd * std_normal::<T, _>(rng)
                };
                let mut z_fwd = vec![first];
                let mut x = first;
                let mut current = first;
                while x <= fwd_exceed && z_fwd.len() < cap {
                    current = step(current, &mut rng);
                    z_fwd.push(current);
                    x = x + current;
                }
                // reversible: backward transitions use the same kernel
                let mut z_back: Vec<T> = Vec::new();
                let mut xb = T::zero();
                let mut bcurrent = first;
                while xb >= back_below && z_back.len() < cap {
                    bcurrent = step(bcurrent, &mut rng);
                    z_back.push(bcurrent);
                    xb = xb - bcurrent;
                }
                (z_fwd, z_back)
            }
            SamplerKind::Renewal(law) => {
                let mut z_fwd: Vec<T> = Vec::new();
                let mut x = T::zero();
                loop {
                    let s = law.draw(&mut rng);
                    z_fwd.push(s);
                    x = x + s;
                    if x > fwd_exceed || z_fwd.len() >= cap {
                        break;
                    }
                }
                let mut z_back: Vec<T> = Vec::new();
                let mut xb = T::zero();
                while xb >= back_below && z_back.len() < cap {
                    let s = law.draw(&mut rng);
                    z_back.push(s);
                    xb = xb - s;
                }
                (z_fwd, z_back)
            }
        };
        let fwd = SpacingPath::from_spacings(
            z_fwd,
            seed,
            stream_id,
            self.tag.clone(),
            self.init_label().into(),
            self.block_len(),
        );
        let mut x_back = Vec::with_capacity(z_back.len());
        let mut acc = T::zero();
        for &s in &z_back {
            acc = acc - s;
            x_back.push(acc);
        }
        Ok(TwoSidedPath {
            fwd,
            z_back,
            x_back,
        })
    }
}

/// Sample a Gibbs spacing path from a discretized transition model.
pub fn sample_gibbs_path<T: Scalar>(
    model: &TransitionModel<T>,
    n: usize,
    init: InitLaw<T>,
    seed: u64,
    stream_id: u64,
) -> Result<SpacingPath<T>> {
    Sampler::gibbs(model, init).sample_n(n, seed, stream_id)
}

/// Sample a harmonic-chain spacing path (exact AR(1)).
pub fn sample_harmonic_path<T: Scalar>(
    params: &HarmonicParams<T>,
    n: usize,
    init: InitLaw<T>,
    seed: u64,
    stream_id: u64,
) -> Result<SpacingPath<T>> {
    Sampler::harmonic(*params, init).sample_n(n, seed, stream_id)
}

/// Sample an i.i.d. renewal path.
pub fn sample_renewal_path<T: Scalar>(
    law: RenewalLaw<T>,
    n: usize,
    seed: u64,
    stream_id: u64,
) -> Result<SpacingPath<T>> {
    Sampler::renewal(law)?.sample_n(n, seed, stream_id)
}

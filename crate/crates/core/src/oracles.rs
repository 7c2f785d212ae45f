//! Stochastic first-order oracles.
//!
//! Agents are indexed `0..n` here (row `i` of the stacked state belongs to
//! graph node `i + 1`). Every stochastic draw is keyed by `(seed, agent,
//! iteration)`, see [`crate::rng`].

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Stream};

/// A finite-sum problem `f = (1/n) sum_i f_i` split across `n` agents.
pub trait Oracle: Sync {
    fn agents(&self) -> usize;

    fn dim(&self) -> usize;

    fn local_value(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64;

    fn local_gradient(&self, agent: usize, x: ArrayView1<'_, f64>) -> Array1<f64>;

    /// One unbiased draw of `grad f_i(x)` using `rng`.
    fn sample_gradient(
        &self,
        agent: usize,
        x: ArrayView1<'_, f64>,
        rng: &mut ChaCha8Rng,
    ) -> Array1<f64>;

    /// Smoothness constant `L` (exact or an upper estimate).
    fn smoothness(&self) -> f64;

    fn strong_convexity(&self) -> Option<f64> {
        None
    }

    fn minimizer(&self) -> Option<&Array1<f64>> {
        None
    }

    fn optimal_value(&self) -> Option<f64> {
        None
    }

    fn value(&self, x: ArrayView1<'_, f64>) -> f64 {
        let n = self.agents();
        (0..n).map(|i| self.local_value(i, x)).sum::<f64>() / n as f64
    }

    fn gradient(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.agents();
        let mut g = Array1::zeros(self.dim());
        for i in 0..n {
            g += &self.local_gradient(i, x);
        }
        g / n as f64
    }
}

/// A stochastic gradient together with the key of the draw that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub agent: usize,
    pub iteration: u64,
    pub value: Array1<f64>,
}

/// Draws the stochastic gradient of agent `agent` keyed by `(seed, agent, iteration)`.
pub fn stochastic_gradient<O: Oracle + ?Sized>(
    oracle: &O,
    agent: usize,
    x: ArrayView1<'_, f64>,
    seed: u64,
    iteration: u64,
) -> GradientSample {
    let mut rng = keyed_rng(seed, Stream::Gradient, agent, iteration);
    GradientSample {
        agent,
        iteration,
        value: oracle.sample_gradient(agent, x, &mut rng),
    }
}

/// Row `i` is `grad f_i(X[i])`.
pub fn full_gradient<O: Oracle + ?Sized>(oracle: &O, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    for (i, (mut row, xi)) in out.outer_iter_mut().zip(x.outer_iter()).enumerate() {
        row.assign(&oracle.local_gradient(i, xi));
    }
    out
}

fn normal_vec(rng: &mut ChaCha8Rng, p: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(p, |_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Parameters of the heterogeneous logistic-regression generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub n: usize,
    pub p: usize,
    /// Samples per agent.
    pub samples: usize,
    /// Weight of the nonconvex regularizer `sum_k x_k^2 / (1 + x_k^2)`.
    pub reg: f64,
    /// Standard deviation of the per-agent model perturbation.
    pub heterogeneity: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
}

fn default_batch() -> usize {
    1
}

impl LogisticParams {
    /// The full-size configuration from the experiments section.
    pub fn reference() -> Self {
        Self {
            n: 20,
            p: 400,
            samples: 500,
            reg: 0.01,
            heterogeneity: 0.2,
            batch: 1,
        }
    }
}

/// Logistic regression with nonconvex regularization, one local dataset per
/// agent:
///
/// `f_i(x) = (1/J) sum_j ln(1 + exp(-y_ij h_ij^T x)) + R sum_k x_k^2 / (1 + x_k^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProblem {
    params: LogisticParams,
    /// Per agent, `J x p` feature matrix.
    features: Vec<Array2<f64>>,
    /// Per agent, labels in `{-1, +1}`.
    labels: Vec<Array1<f64>>,
    /// Per agent, the model that generated the labels.
    local_models: Vec<Array1<f64>>,
    smoothness: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Generates a heterogeneous logistic dataset deterministically from `seed`.
///
/// A common model `x~ ~ N(0, I)` is perturbed per agent by `N(0, s^2 I)`;
/// features are standard normal and `y = +1` with probability
/// `sigmoid(h^T x~_i)`.
pub fn gen_logistic(params: LogisticParams, seed: u64) -> Result<LogisticProblem> {
    let LogisticParams {
        n,
        p,
        samples,
        batch,
        ..
    } = params;
    if n == 0 || p == 0 || samples == 0 {
        return Err(Error::InvalidSize("logistic sizes must be >= 1".into()));
    }
    if batch == 0 || batch > samples {
        return Err(Error::InvalidParameter(format!(
            "batch size {batch} outside 1..={samples}"
        )));
    }
    if !(params.reg >= 0.0) || !(params.heterogeneity >= 0.0) {
        return Err(Error::InvalidParameter(
            "regularization and heterogeneity must be nonnegative".into(),
        ));
    }
    let mut common_rng = keyed_rng(seed, Stream::Dataset, usize::MAX, 0);
    let common = normal_vec(&mut common_rng, p, 1.0);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut local_models = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = keyed_rng(seed, Stream::Dataset, i, 0);
        let model = &common + &normal_vec(&mut rng, p, params.heterogeneity);
        let h = Array2::from_shape_fn((samples, p), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let y = Array1::from_iter(h.outer_iter().map(|row| {
            let z: f64 = rng.random();
            if z <= sigmoid(row.dot(&model)) {
                1.0
            } else {
                -1.0
            }
        }));
        features.push(h);
        labels.push(y);
        local_models.push(model);
    }
    LogisticProblem::from_parts(params, features, labels, local_models)
}

impl LogisticProblem {
    /// Assembles a problem from explicit data, estimating `L` as
    /// `max_i ||H_i||_2^2 / (4J) + 2R`.
    pub fn from_parts(
        params: LogisticParams,
        features: Vec<Array2<f64>>,
        labels: Vec<Array1<f64>>,
        local_models: Vec<Array1<f64>>,
    ) -> Result<Self> {
        let n = features.len();
        if n != params.n || labels.len() != n || local_models.len() != n {
            return Err(Error::DimensionMismatch(
                "agent count differs across parts".into(),
            ));
        }
        for (h, y) in features.iter().zip(&labels) {
            if h.dim() != (params.samples, params.p) || y.len() != params.samples {
                return Err(Error::DimensionMismatch("local dataset shape".into()));
            }
            if y.iter().any(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::InvalidParameter("labels must be -1 or +1".into()));
            }
        }
        let gram_bound = features
            .iter()
            .map(|h| {
                let s = crate::mixing::power_iteration_norm(h, 300, 1e-10);
                s * s / (4.0 * params.samples as f64)
            })
            .fold(0.0, f64::max);
        Ok(Self {
            smoothness: gram_bound + 2.0 * params.reg,
            params,
            features,
            labels,
            local_models,
        })
    }

    pub fn params(&self) -> &LogisticParams {
        &self.params
    }

    pub fn features(&self, agent: usize) -> &Array2<f64> {
        &self.features[agent]
    }

    pub fn labels(&self, agent: usize) -> &Array1<f64> {
        &self.labels[agent]
    }

    pub fn local_model(&self, agent: usize) -> &Array1<f64> {
        &self.local_models[agent]
    }

    /// Same data, different mini-batch size.
    pub fn with_batch(mut self, batch: usize) -> Result<Self> {
        if batch == 0 || batch > self.params.samples {
            return Err(Error::InvalidParameter(format!(
                "batch size {batch} outside 1..={}",
                self.params.samples
            )));
        }
        self.params.batch = batch;
        Ok(self)
    }

    fn regularizer_gradient(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let r = self.params.reg;
        x.mapv(|v| {
            let d = 1.0 + v * v;
            2.0 * r * v / (d * d)
        })
    }

    // data-term gradient averaged over the given sample indices
    fn data_gradient(
        &self,
        agent: usize,
        x: ArrayView1<'_, f64>,
        idx: impl Iterator<Item = usize>,
    ) -> Array1<f64> {
        let h = &self.features[agent];
        let y = &self.labels[agent];
        let mut g = Array1::zeros(self.params.p);
        let mut count = 0usize;
        for j in idx {
            let row = h.row(j);
            let margin = y[j] * row.dot(&x);
            // d/dx ln(1 + exp(-m)) = -y h / (1 + exp(m))
            let coef = -y[j] * sigmoid(-margin);
            g.scaled_add(coef, &row);
            count += 1;
        }
        g / count as f64
    }

    /// Writes the dataset in a versioned little-endian binary format.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        let p = &self.params;
        for v in [p.n, p.p, p.samples, p.batch] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in [p.reg, p.heterogeneity] {
            out.write_all(&v.to_le_bytes())?;
        }
        for i in 0..p.n {
            for arr in [self.local_models[i].view(), self.labels[i].view()] {
                for v in arr {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            for v in self.features[i].iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut read_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = read_u64(&mut input)? as usize;
        let p = read_u64(&mut input)? as usize;
        let samples = read_u64(&mut input)? as usize;
        let batch = read_u64(&mut input)? as usize;
        let reg = f64::from_bits(read_u64(&mut input)?);
        let heterogeneity = f64::from_bits(read_u64(&mut input)?);
        if n.checked_mul(samples)
            .and_then(|v| v.checked_mul(p))
            .is_none_or(|v| v > 1 << 32)
        {
            return Err(Error::Snapshot("implausible dimensions".into()));
        }
        let read_f64s = |input: &mut R, len: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; len * 8];
            input.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut models = Vec::with_capacity(n);
        for _ in 0..n {
            models.push(Array1::from(read_f64s(&mut input, p)?));
            labels.push(Array1::from(read_f64s(&mut input, samples)?));
            let flat = read_f64s(&mut input, samples * p)?;
            features.push(
                Array2::from_shape_vec((samples, p), flat)
                    .map_err(|e| Error::Snapshot(e.to_string()))?,
            );
        }
        let params = LogisticParams {
            n,
            p,
            samples,
            reg,
            heterogeneity,
            batch,
        };
        Self::from_parts(params, features, labels, models)
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"STPPLOG\0";
const SNAPSHOT_VERSION: u32 = 1;

impl Oracle for LogisticProblem {
    fn agents(&self) -> usize {
        self.params.n
    }

    fn dim(&self) -> usize {
        self.params.p
    }

    fn local_value(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        let h = &self.features[agent];
        let y = &self.labels[agent];
        let data: f64 = h
            .outer_iter()
            .zip(y)
            .map(|(row, &yj)| softplus(-yj * row.dot(&x)))
            .sum::<f64>()
            / self.params.samples as f64;
        let reg: f64 = x.iter().map(|&v| v * v / (1.0 + v * v)).sum();
        data + self.params.reg * reg
    }

    fn local_gradient(&self, agent: usize, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.data_gradient(agent, x, 0..self.params.samples) + self.regularizer_gradient(x)
    }

    /// Mini-batch of `batch` distinct samples drawn uniformly without
    /// replacement (visited in ascending order), plus the full regularizer
    /// gradient.
    fn sample_gradient(
        &self,
        agent: usize,
        x: ArrayView1<'_, f64>,
        rng: &mut ChaCha8Rng,
    ) -> Array1<f64> {
        let mut idx =
            rand::seq::index::sample(rng, self.params.samples, self.params.batch).into_vec();
        idx.sort_unstable();
        self.data_gradient(agent, x, idx.into_iter()) + self.regularizer_gradient(x)
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }
}

/// Parameters of the quadratic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticParams {
    pub n: usize,
    pub p: usize,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// Spread of the local minimizers around a common center; zero makes
    /// every agent identical.
    pub heterogeneity: f64,
    /// Total standard deviation of the additive gradient noise.
    pub sigma: f64,
}

/// `f_i(x) = 1/2 (x - b_i)^T A_i (x - b_i)` with diagonal `A_i`, plus additive
/// `N(0, sigma^2 / p I)` gradient noise.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    curvature: Vec<Array1<f64>>,
    centers: Vec<Array1<f64>>,
    sigma: f64,
    mu: f64,
    l: f64,
    minimizer: Array1<f64>,
    optimal_value: f64,
}

/// Random strongly convex quadratic.
///
/// Coordinates 0 and 1 of every `A_i` are pinned to `mu` and `L` (when
/// `p >= 2`) so the average objective has exactly these constants; the
/// remaining diagonal entries are uniform on `[mu, L]`, drawn per agent when
/// `heterogeneity > 0` and shared otherwise. `b_i = c + heterogeneity * v_i`
/// with `c, v_i ~ N(0, I)`.
pub fn gen_quadratic(params: QuadraticParams, seed: u64) -> Result<QuadraticProblem> {
    let QuadraticParams {
        n,
        p,
        mu,
        l,
        heterogeneity,
        sigma,
    } = params;
    if n == 0 || p == 0 {
        return Err(Error::InvalidSize("quadratic sizes must be >= 1".into()));
    }
    if !(mu > 0.0) || !(mu <= l) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < mu <= L, got mu = {mu}, L = {l}"
        )));
    }
    if !(heterogeneity >= 0.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(
            "heterogeneity and sigma must be nonnegative".into(),
        ));
    }
    let spectrum = |rng: &mut ChaCha8Rng| {
        Array1::from_shape_fn(p, |k| match k {
            0 => mu,
            1 => l,
            _ => mu + (l - mu) * rng.random::<f64>(),
        })
    };
    let mut common_rng = keyed_rng(seed, Stream::Dataset, usize::MAX, 0);
    let center = normal_vec(&mut common_rng, p, 1.0);
    let shared = spectrum(&mut common_rng);
    let mut curvature = Vec::with_capacity(n);
    let mut centers = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = keyed_rng(seed, Stream::Dataset, i, 0);
        if heterogeneity > 0.0 {
            curvature.push(spectrum(&mut rng));
            centers.push(&center + &normal_vec(&mut rng, p, heterogeneity));
        } else {
            curvature.push(shared.clone());
            centers.push(center.clone());
        }
    }
    QuadraticProblem::new(curvature, centers, sigma)
}

impl QuadraticProblem {
    /// Builds a problem from explicit diagonals and centers; `mu` and `L`
    /// are read off the diagonals.
    pub fn new(curvature: Vec<Array1<f64>>, centers: Vec<Array1<f64>>, sigma: f64) -> Result<Self> {
        let n = curvature.len();
        if n == 0 || centers.len() != n {
            return Err(Error::DimensionMismatch(
                "need one curvature and one center per agent".into(),
            ));
        }
        let p = curvature[0].len();
        if curvature.iter().chain(&centers).any(|v| v.len() != p) || p == 0 {
            return Err(Error::DimensionMismatch(
                "all vectors must share one dimension".into(),
            ));
        }
        if curvature.iter().flatten().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidParameter(
                "curvatures must be positive".into(),
            ));
        }
        let total: Array1<f64> = curvature.iter().fold(Array1::zeros(p), |acc, a| acc + a);
        let weighted: Array1<f64> = curvature
            .iter()
            .zip(&centers)
            .fold(Array1::zeros(p), |acc, (a, b)| acc + a * b);
        let minimizer = &weighted / &total;
        let mean = &total / n as f64;
        let mu = mean.iter().copied().fold(f64::INFINITY, f64::min);
        let l = curvature.iter().flatten().copied().fold(0.0, f64::max);
        let mut out = Self {
            curvature,
            centers,
            sigma,
            mu,
            l,
            minimizer,
            optimal_value: 0.0,
        };
        out.optimal_value = out.value(out.minimizer.view());
        Ok(out)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn curvature(&self, agent: usize) -> &Array1<f64> {
        &self.curvature[agent]
    }

    pub fn center(&self, agent: usize) -> &Array1<f64> {
        &self.centers[agent]
    }

    /// Same problem with a different noise level.
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

impl Oracle for QuadraticProblem {
    fn agents(&self) -> usize {
        self.curvature.len()
    }

    fn dim(&self) -> usize {
        self.minimizer.len()
    }

    fn local_value(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        let d = &x - &self.centers[agent];
        0.5 * (&d * &d * &self.curvature[agent]).sum()
    }

    fn local_gradient(&self, agent: usize, x: ArrayView1<'_, f64>) -> Array1<f64> {
        (&x - &self.centers[agent]) * &self.curvature[agent]
    }

    fn sample_gradient(
        &self,
        agent: usize,
        x: ArrayView1<'_, f64>,
        rng: &mut ChaCha8Rng,
    ) -> Array1<f64> {
        let g = self.local_gradient(agent, x);
        if self.sigma == 0.0 {
            return g;
        }
        let scale = self.sigma / (self.dim() as f64).sqrt();
        g + normal_vec(rng, self.dim(), scale)
    }

    fn smoothness(&self) -> f64 {
        self.l
    }

    fn strong_convexity(&self) -> Option<f64> {
        Some(self.mu)
    }

    fn minimizer(&self) -> Option<&Array1<f64>> {
        Some(&self.minimizer)
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.optimal_value)
    }
}

/// Either supported problem family.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemInstance {
    Logistic(LogisticProblem),
    Quadratic(QuadraticProblem),
}

impl ProblemInstance {
    fn inner(&self) -> &dyn Oracle {
        match self {
            ProblemInstance::Logistic(p) => p,
            ProblemInstance::Quadratic(p) => p,
        }
    }
}

impl Oracle for ProblemInstance {
    fn agents(&self) -> usize {
        self.inner().agents()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn local_value(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        self.inner().local_value(agent, x)
    }
    fn local_gradient(&self, agent: usize, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.inner().local_gradient(agent, x)
    }
    fn sample_gradient(
        &self,
        agent: usize,
        x: ArrayView1<'_, f64>,
        rng: &mut ChaCha8Rng,
    ) -> Array1<f64> {
        self.inner().sample_gradient(agent, x, rng)
    }
    fn smoothness(&self) -> f64 {
        self.inner().smoothness()
    }
    fn strong_convexity(&self) -> Option<f64> {
        self.inner().strong_convexity()
    }
    fn minimizer(&self) -> Option<&Array1<f64>> {
        match self {
            ProblemInstance::Logistic(_) => None,
            ProblemInstance::Quadratic(p) => p.minimizer(),
        }
    }
    fn optimal_value(&self) -> Option<f64> {
        self.inner().optimal_value()
    }
}

/// Mean of `rows` along axis 0; helper shared by tests and metrics.
pub fn row_mean(rows: &Array2<f64>) -> Array1<f64> {
    rows.mean_axis(Axis(0)).expect("at least one row")
}

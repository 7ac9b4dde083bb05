//! Visual dictionary: a diagonal-covariance Gaussian mixture over block
//! descriptors, whose per-component posteriors form the probabilistic
//! histogram of a block.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const WEIGHT_FLOOR: f64 = 1e-12;

const DICTIONARY_MAGIC: &[u8; 4] = b"MRHD";
/// Samples per E-step work unit. Fixed so reductions do not depend on thread count.
const CHUNK: usize = 512;
/// Reseed candidates kept per chunk.
const WORST_PER_CHUNK: usize = 4;

/// Posterior probabilities of one descriptor over the dictionary components.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorHistogram(pub Vec<f64>);

impl PosteriorHistogram {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualDictionary {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    // log w_g - 0.5 * sum_d ln(2 pi var_gd)
    log_consts: Vec<f64>,
    inv_vars: Vec<f64>,
}

impl VisualDictionary {
    /// Builds a dictionary from raw parameters; `means` and `variances` are
    /// `G x D` row-major.
    pub fn new(dim: usize, weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let g = weights.len();
        if g == 0 || dim == 0 {
            return Err(Error::Empty("dictionary components"));
        }
        for (len, what) in [(means.len(), g * dim), (variances.len(), g * dim)] {
            if len != what {
                return Err(Error::DimensionMismatch {
                    expected: what,
                    actual: len,
                });
            }
        }
        if weights.iter().chain(&means).chain(&variances).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dictionary parameters"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        if let Some(w) = weights.iter().find(|&&w| w < WEIGHT_FLOOR) {
            return Err(Error::InvalidParameter(format!("mixture weight {w} below floor")));
        }
        if let Some(v) = variances.iter().find(|&&v| v < VARIANCE_FLOOR) {
            return Err(Error::InvalidParameter(format!("variance {v} below floor")));
        }
        let inv_vars = variances.iter().map(|v| 1.0 / v).collect();
        let log_consts = weights
            .iter()
            .zip(variances.chunks_exact(dim))
            .map(|(w, vars)| w.ln() - 0.5 * vars.iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>())
            .collect();
        Ok(Self {
            dim,
            weights,
            means,
            variances,
            log_consts,
            inv_vars,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, g: usize) -> &[f64] {
        &self.means[g * self.dim..(g + 1) * self.dim]
    }

    pub fn variance(&self, g: usize) -> &[f64] {
        &self.variances[g * self.dim..(g + 1) * self.dim]
    }

    fn check_dim(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: f.len(),
            });
        }
        Ok(())
    }

    /// `out[g] = ln w_g + ln p_g(f)`.
    fn log_joint(&self, f: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (g, o) in out.iter_mut().enumerate() {
            let mu = &self.means[g * d..(g + 1) * d];
            let iv = &self.inv_vars[g * d..(g + 1) * d];
            let maha: f64 = f
                .iter()
                .zip(mu)
                .zip(iv)
                .map(|((x, m), i)| (x - m) * (x - m) * i)
                .sum();
            *o = self.log_consts[g] - 0.5 * maha;
        }
    }

    /// Replaces `buf` (holding log joints) with posteriors; returns the log evidence.
    fn normalize_log(buf: &mut [f64]) -> f64 {
        let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in buf.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in buf.iter_mut() {
            *v /= sum;
        }
        max + sum.ln()
    }

    /// Posteriors written into `out`, which must hold `G` entries.
    pub fn posterior_into(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(f)?;
        if out.len() != self.components() {
            return Err(Error::DimensionMismatch {
                expected: self.components(),
                actual: out.len(),
            });
        }
        self.log_joint(f, out);
        Self::normalize_log(out);
        Ok(())
    }

    pub fn posterior_histogram(&self, f: &[f64]) -> Result<PosteriorHistogram> {
        let mut out = vec![0.0; self.components()];
        self.posterior_into(f, &mut out)?;
        Ok(PosteriorHistogram(out))
    }

    /// Mean per-sample log-likelihood `ln sum_g w_g p_g(f)`.
    pub fn log_likelihood<S: AsRef<[f64]>>(&self, features: &[S]) -> Result<f64> {
        if features.is_empty() {
            return Err(Error::Empty("features"));
        }
        let mut buf = vec![0.0; self.components()];
        let mut total = 0.0;
        for f in features {
            let f = f.as_ref();
            self.check_dim(f)?;
            self.log_joint(f, &mut buf);
            total += Self::normalize_log(&mut buf);
        }
        Ok(total / features.len() as f64)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<dictionary stream>", e);
        out.write_all(DICTIONARY_MAGIC).map_err(io)?;
        out.write_all(&(self.components() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        for v in self.weights.iter().chain(&self.means).chain(&self.variances) {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<dictionary stream>", e))?;
        if bytes.len() < 12 || &bytes[..4] != DICTIONARY_MAGIC {
            return Err(Error::Format("missing MRHD dictionary header".into()));
        }
        let g = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = (g + 2 * g * d) * 8;
        if bytes.len() - 12 != expected {
            return Err(Error::Format(format!(
                "dictionary body holds {} bytes, header implies {expected}",
                bytes.len() - 12
            )));
        }
        let floats: Vec<f64> = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (weights, rest) = floats.split_at(g);
        let (means, variances) = rest.split_at(g * d);
        Self::new(d, weights.to_vec(), means.to_vec(), variances.to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&bytes[..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub components: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tolerance: f64,
    pub variance_floor: f64,
    /// Lloyd iterations used to initialise the means.
    pub kmeans_iter: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            components: 64,
            seed: 0,
            max_iter: 100,
            tolerance: 1e-5,
            variance_floor: VARIANCE_FLOOR,
            kmeans_iter: 10,
        }
    }
}

/// Per-iteration record of dictionary training.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrainingTrace {
    /// Mean log-likelihood of the parameters entering each EM iteration,
    /// followed by that of the returned dictionary.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of empty components re-seeded during training.
    pub reseeds: usize,
}

/// Fits a dictionary by k-means++-seeded k-means followed by EM.
pub fn train_dictionary<S: AsRef<[f64]> + Sync>(
    features: &[S],
    config: &TrainConfig,
) -> Result<(VisualDictionary, TrainingTrace)> {
    let g = config.components;
    if g == 0 {
        return Err(Error::InvalidParameter("dictionary needs at least one component".into()));
    }
    let required = 10 * g;
    if features.len() < required {
        return Err(Error::TooFewSamples {
            components: g,
            required,
            actual: features.len(),
        });
    }
    let dim = features[0].as_ref().len();
    if dim == 0 {
        return Err(Error::Empty("feature dimension"));
    }
    for f in features {
        let f = f.as_ref();
        if f.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training features"));
        }
    }
    let floor = config.variance_floor.max(VARIANCE_FLOOR);

    let (centroids, assignment) = kmeans_init(features, g, dim, config);
    let global_var = global_variance(features, dim, floor);
    let mut dict = initial_mixture(features, &centroids, &assignment, g, dim, floor, &global_var)?;

    let n = features.len() as f64;
    let mut trace = TrainingTrace {
        log_likelihoods: Vec::new(),
        iterations: 0,
        converged: false,
        reseeds: 0,
    };
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..config.max_iter {
        let stats = e_step(&dict, features);
        let ll = stats.ll_sum / n;
        trace.log_likelihoods.push(ll);
        if ll - prev < config.tolerance {
            trace.converged = true;
            break;
        }
        prev = ll;
        let (next, reseeds) = m_step(&stats, features, dim, floor, &global_var)?;
        trace.reseeds += reseeds;
        trace.iterations += 1;
        dict = next;
    }
    if !trace.converged {
        trace.log_likelihoods.push(dict.log_likelihood(features)?);
    }
    Ok((dict, trace))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    centroids
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, c)| (i, sq_dist(point, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn kmeans_init<S: AsRef<[f64]> + Sync>(
    features: &[S],
    g: usize,
    dim: usize,
    config: &TrainConfig,
) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = features.len();
    let mut centroids = Vec::with_capacity(g * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(features[first].as_ref());
    let mut d2: Vec<f64> = features
        .iter()
        .map(|f| sq_dist(f.as_ref(), &centroids[..dim]))
        .collect();
    for _ in 1..g {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = features[pick].as_ref();
        centroids.extend_from_slice(c);
        for (d, f) in d2.iter_mut().zip(features) {
            *d = d.min(sq_dist(f.as_ref(), c));
        }
    }

    let mut assignment = vec![0usize; n];
    for iter in 0..=config.kmeans_iter {
        let next: Vec<usize> = features
            .par_iter()
            .map(|f| nearest(f.as_ref(), &centroids, dim).0)
            .collect();
        let changed = next != assignment;
        assignment = next;
        if (!changed && iter > 0) || iter == config.kmeans_iter {
            break;
        }
        let mut sums = vec![0.0; g * dim];
        let mut counts = vec![0usize; g];
        for (f, &a) in features.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(f.as_ref()) {
                *s += v;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            // empty clusters keep their previous centre
            if c > 0 {
                for (dst, s) in centroids[k * dim..(k + 1) * dim]
                    .iter_mut()
                    .zip(&sums[k * dim..(k + 1) * dim])
                {
                    *dst = s / c as f64;
                }
            }
        }
    }
    (centroids, assignment)
}

fn global_variance<S: AsRef<[f64]>>(features: &[S], dim: usize, floor: f64) -> Vec<f64> {
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for f in features {
        for ((s, v), m) in var.iter_mut().zip(f.as_ref()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter().map(|s| (s / n).max(floor)).collect()
}

fn initial_mixture<S: AsRef<[f64]>>(
    features: &[S],
    centroids: &[f64],
    assignment: &[usize],
    g: usize,
    dim: usize,
    floor: f64,
    global_var: &[f64],
) -> Result<VisualDictionary> {
    let mut counts = vec![0usize; g];
    let mut sq = vec![0.0; g * dim];
    for (f, &a) in features.iter().zip(assignment) {
        counts[a] += 1;
        let c = &centroids[a * dim..(a + 1) * dim];
        for ((s, v), m) in sq[a * dim..(a + 1) * dim].iter_mut().zip(f.as_ref()).zip(c) {
            *s += (v - m) * (v - m);
        }
    }
    let n = features.len() as f64;
    let mut variances = vec![0.0; g * dim];
    for k in 0..g {
        for d in 0..dim {
            variances[k * dim + d] = if counts[k] >= 2 {
                (sq[k * dim + d] / counts[k] as f64).max(floor)
            } else {
                global_var[d]
            };
        }
    }
    let weights = normalized_weights(counts.iter().map(|&c| c as f64 / n));
    VisualDictionary::new(dim, weights, centroids.to_vec(), variances)
}

fn normalized_weights(raw: impl Iterator<Item = f64>) -> Vec<f64> {
    let floored: Vec<f64> = raw.map(|w| w.max(WEIGHT_FLOOR)).collect();
    let total: f64 = floored.iter().sum();
    floored.iter().map(|w| w / total).collect()
}

/// Sufficient statistics of one E-step.
struct Stats {
    ll_sum: f64,
    nk: Vec<f64>,
    sx: Vec<f64>,
    sxx: Vec<f64>,
    /// Lowest-likelihood samples as `(log-likelihood, index)`, ascending.
    worst: Vec<(f64, usize)>,
}

impl Stats {
    fn zeros(g: usize, dim: usize) -> Self {
        Self {
            ll_sum: 0.0,
            nk: vec![0.0; g],
            sx: vec![0.0; g * dim],
            sxx: vec![0.0; g * dim],
            worst: Vec::new(),
        }
    }

    fn absorb(&mut self, other: Stats) {
        self.ll_sum += other.ll_sum;
        for (a, b) in self.nk.iter_mut().zip(&other.nk) {
            *a += b;
        }
        for (a, b) in self.sx.iter_mut().zip(&other.sx) {
            *a += b;
        }
        for (a, b) in self.sxx.iter_mut().zip(&other.sxx) {
            *a += b;
        }
        self.worst.extend(other.worst);
    }
}

fn push_worst(worst: &mut Vec<(f64, usize)>, entry: (f64, usize), keep: usize) {
    worst.push(entry);
    worst.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    worst.truncate(keep);
}

fn e_step<S: AsRef<[f64]> + Sync>(dict: &VisualDictionary, features: &[S]) -> Stats {
    let g = dict.components();
    let dim = dict.dim();
    let partials: Vec<Stats> = features
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk_idx, chunk)| {
            let mut st = Stats::zeros(g, dim);
            let mut resp = vec![0.0; g];
            for (i, f) in chunk.iter().enumerate() {
                let f = f.as_ref();
                dict.log_joint(f, &mut resp);
                let ll = VisualDictionary::normalize_log(&mut resp);
                st.ll_sum += ll;
                push_worst(&mut st.worst, (ll, chunk_idx * CHUNK + i), WORST_PER_CHUNK);
                for (k, &r) in resp.iter().enumerate() {
                    if r == 0.0 {
                        continue;
                    }
                    st.nk[k] += r;
                    let sx = &mut st.sx[k * dim..(k + 1) * dim];
                    let sxx = &mut st.sxx[k * dim..(k + 1) * dim];
                    for ((a, b), &v) in sx.iter_mut().zip(sxx.iter_mut()).zip(f) {
                        *a += r * v;
                        *b += r * v * v;
                    }
                }
            }
            st
        })
        .collect();
    let mut total = Stats::zeros(g, dim);
    for p in partials {
        total.absorb(p);
    }
    total
        .worst
        .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    total
}

fn m_step<S: AsRef<[f64]>>(
    stats: &Stats,
    features: &[S],
    dim: usize,
    floor: f64,
    global_var: &[f64],
) -> Result<(VisualDictionary, usize)> {
    let g = stats.nk.len();
    let n = features.len() as f64;
    let mut means = vec![0.0; g * dim];
    let mut variances = vec![0.0; g * dim];
    let mut raw_weights = vec![0.0; g];
    let mut reseeds = 0;
    let mut candidates = stats.worst.iter().cycle();
    for k in 0..g {
        let nk = stats.nk[k];
        let range = k * dim..(k + 1) * dim;
        if nk <= 1e-9 {
            // Empty component: restart it on the worst-explained sample.
            let &(_, idx) = candidates.next().expect("E-step always records samples");
            means[range.clone()].copy_from_slice(features[idx].as_ref());
            variances[range].copy_from_slice(global_var);
            raw_weights[k] = 1.0 / n;
            reseeds += 1;
            continue;
        }
        raw_weights[k] = nk / n;
        for d in range {
            let mu = stats.sx[d] / nk;
            means[d] = mu;
            variances[d] = (stats.sxx[d] / nk - mu * mu).max(floor);
        }
    }
    let dict = VisualDictionary::new(dim, normalized_weights(raw_weights.into_iter()), means, variances)?;
    Ok((dict, reseeds))
}

//! A bias-free tanh multilayer perceptron trained with mini-batch SGD,
//! momentum and weight decay on a two-class blob task with label noise.
//!
//! Without biases and with an odd activation, negating the incoming and
//! outgoing weights of a hidden neuron leaves the network function unchanged.
//! The set where a group of neurons has all-zero weights is therefore
//! invariant under training, and runs often end near such a parity
//! subspace. [`detect_parity`] names the subspace a run ends in.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{is_diverged, BatchSize, Status, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::uncertainty::{ensemble_report, flip_indices, flip_lsb, BitflipReport};

pub const DEFAULT_HIDDEN: [usize; 3] = [6, 16, 6];
pub const DEFAULT_TRAIN_POINTS: usize = 200;
pub const DEFAULT_LABEL_NOISE: f64 = 0.5;
pub const DEFAULT_PARITY_THRESHOLD: f64 = 1e-2;

/// Layer widths, input first and output last, and the flattened weights.
/// Layer `l` maps width `l` to width `l + 1`; its matrix is stored row-major
/// as `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    pub weights: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Dimension(format!("invalid layer widths {widths:?}")));
        }
        let mut offsets = vec![0];
        for w in widths.windows(2) {
            offsets.push(offsets.last().unwrap() + w[0] * w[1]);
        }
        let n = *offsets.last().unwrap();
        Ok(MlpParams {
            widths: widths.to_vec(),
            offsets,
            weights: vec![0.0; n],
        })
    }

    pub fn from_weights(widths: &[usize], weights: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(widths)?;
        if weights.len() != p.weights.len() {
            return Err(Error::Dimension(format!(
                "expected {} weights, found {}",
                p.weights.len(),
                weights.len()
            )));
        }
        p.weights = weights;
        Ok(p)
    }

    /// Gaussian weights with variance `1 / fan_in`.
    pub fn random(widths: &[usize], seed: u64) -> Result<Self> {
        let mut p = Self::zeros(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..p.n_layers() {
            let sd = 1.0 / (p.widths[l] as f64).sqrt();
            for w in p.layer_mut(l) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = sd * z;
            }
        }
        Ok(p)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of weight matrices.
    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.weights[self.offsets[l]..self.offsets[l + 1]]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.weights[self.offsets[l]..self.offsets[l + 1]]
    }

    /// Flat index of the weight from unit `i` of layer `l` to unit `o` of
    /// layer `l + 1`.
    pub fn index(&self, l: usize, o: usize, i: usize) -> usize {
        self.offsets[l] + o * self.widths[l] + i
    }

    /// Flat indices of the incoming and outgoing weights of hidden neuron
    /// `j` in hidden layer `h` (1-based, so `h = 1` is the first hidden layer).
    pub fn neuron_indices(&self, h: usize, j: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.widths[h - 1]).map(|i| self.index(h - 1, j, i)).collect();
        v.extend((0..self.widths[h + 1]).map(|o| self.index(h, o, j)));
        v
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.widths {
            h.update((*w as u64).to_le_bytes());
        }
        for w in &self.weights {
            h.update(w.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Negates the incoming and outgoing weights of hidden neuron `j` of hidden
/// layer `h`.
pub fn flip_neuron(params: &MlpParams, h: usize, j: usize) -> MlpParams {
    let mut p = params.clone();
    for k in params.neuron_indices(h, j) {
        p.weights[k] = -p.weights[k];
    }
    p
}

/// Negates every weight that is not an incoming or outgoing weight of the
/// neurons `set` of hidden layer `h`.
pub fn flip_complement(params: &MlpParams, h: usize, set: &[usize]) -> MlpParams {
    let keep: std::collections::HashSet<usize> = set.iter().flat_map(|&j| params.neuron_indices(h, j)).collect();
    let mut p = params.clone();
    for (k, w) in p.weights.iter_mut().enumerate() {
        if !keep.contains(&k) {
            *w = -*w;
        }
    }
    p
}

fn check_input(params: &MlpParams, x: &[f64]) -> Result<()> {
    if x.len() != params.widths[0] {
        return Err(Error::Dimension(format!(
            "input has {} features, network expects {}",
            x.len(),
            params.widths[0]
        )));
    }
    Ok(())
}

/// Activations of every layer: `acts[0] = x`, hidden layers after `tanh`,
/// the last entry holds the logits.
fn activations(params: &MlpParams, x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![x.to_vec()];
    for l in 0..params.n_layers() {
        let (n_in, n_out) = (params.widths[l], params.widths[l + 1]);
        let w = params.layer(l);
        let h = acts.last().unwrap();
        let mut z: Vec<f64> = (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = 0.0;
                for i in 0..n_in {
                    acc += row[i] * h[i];
                }
                acc
            })
            .collect();
        if l + 1 < params.n_layers() {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(z);
    }
    acts
}

/// Logits for one input.
pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    check_input(params, x)?;
    Ok(activations(params, x).pop().unwrap())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassDataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl ClassDataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if inputs.len() != labels.len() {
            return Err(Error::Dimension("inputs and labels differ in length".into()));
        }
        let d = inputs[0].len();
        if inputs.iter().any(|x| x.len() != d) {
            return Err(Error::Dimension("inputs differ in dimension".into()));
        }
        if labels.iter().any(|&y| y >= n_classes) {
            return Err(Error::Dimension("label out of range".into()));
        }
        Ok(ClassDataset {
            inputs,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            for v in x {
                h.update(v.to_le_bytes());
            }
            h.update((*y as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub const BLOB_CENTER: [f64; 2] = [1.0, 1.0];
pub const BLOB_SD: f64 = 1.0;

/// Two Gaussian blobs centred at `±BLOB_CENTER`, `n / 2` points each
/// (class 0 at the negative centre), in a seeded random order.
pub fn blobs(n: usize, seed: u64) -> Result<ClassDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, BLOB_SD).map_err(|e| Error::Config(e.to_string()))?;
    let mut pts: Vec<(Vec<f64>, usize)> = (0..n)
        .map(|k| {
            let class = usize::from(k >= n / 2);
            let s = if class == 0 { -1.0 } else { 1.0 };
            let x = BLOB_CENTER.iter().map(|c| s * c + noise.sample(&mut rng)).collect();
            (x, class)
        })
        .collect();
    pts.shuffle(&mut rng);
    let (inputs, labels) = pts.into_iter().unzip();
    ClassDataset::new(inputs, labels, 2)
}

/// Replaces the labels of `round(fraction · N)` seeded points by a uniformly
/// chosen different class.
pub fn inject_label_noise(data: &ClassDataset, fraction: f64, seed: u64) -> Result<ClassDataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("noise fraction must lie in [0, 1], got {fraction}")));
    }
    if data.n_classes < 2 && fraction > 0.0 {
        return Err(Error::Config("label noise needs at least two classes".into()));
    }
    let n = data.len();
    let k = (fraction * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let r = rng.random_range(0..data.n_classes - 1);
        let old = data.labels[i];
        out.labels[i] = if r >= old { r + 1 } else { r };
    }
    Ok(out)
}

fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let loss = s.ln() + m - logits[label];
    let mut g: Vec<f64> = e.iter().map(|v| v / s).collect();
    g[label] -= 1.0;
    (loss, g)
}

/// Mean cross-entropy over `idx` (all points when `None`).
pub fn mlp_loss(params: &MlpParams, data: &ClassDataset, idx: Option<&[usize]>) -> Result<f64> {
    check_input(params, &data.inputs[0])?;
    let all: Vec<usize>;
    let idx = match idx {
        Some(i) => i,
        None => {
            all = (0..data.len()).collect();
            &all
        }
    };
    let mut total = 0.0;
    for &k in idx {
        let logits = activations(params, &data.inputs[k]).pop().unwrap();
        total += softmax_xent(&logits, data.labels[k]).0;
    }
    Ok(total / idx.len() as f64)
}

/// Gradient of the mean cross-entropy over the points `idx` by reverse
/// accumulation. Samples are accumulated in the order given.
pub fn mlp_grad(params: &MlpParams, data: &ClassDataset, idx: &[usize]) -> Vec<f64> {
    let mut g = vec![0.0; params.len()];
    let scale = 1.0 / idx.len() as f64;
    for &k in idx {
        let acts = activations(params, &data.inputs[k]);
        let (_, mut delta) = softmax_xent(acts.last().unwrap(), data.labels[k]);
        delta.iter_mut().for_each(|d| *d *= scale);
        for l in (0..params.n_layers()).rev() {
            let (n_in, n_out) = (params.widths[l], params.widths[l + 1]);
            let h = &acts[l];
            let off = params.offsets[l];
            for o in 0..n_out {
                for i in 0..n_in {
                    g[off + o * n_in + i] += delta[o] * h[i];
                }
            }
            if l > 0 {
                let w = params.layer(l);
                delta = (0..n_in)
                    .map(|i| {
                        let mut acc = 0.0;
                        for o in 0..n_out {
                            acc += w[o * n_in + i] * delta[o];
                        }
                        acc * (1.0 - h[i] * h[i])
                    })
                    .collect();
            }
        }
    }
    g
}

/// Desk-scale defaults for the multilayer trainer. With these settings and
/// the default architecture, runs split between a fully collapsed network and
/// one with no vanished neuron, and that split is sensitive to a single-bit
/// change of the initialization.
pub fn default_config() -> TrainConfig {
    TrainConfig {
        eta: 0.6,
        epochs: 200,
        momentum: 0.9,
        weight_decay: 7.5e-3,
        batch_size: BatchSize::Size(10),
        shuffle_seed: 0,
        ..TrainConfig::default()
    }
}

/// Input width, hidden widths and output width for two-dimensional inputs
/// and two classes.
pub fn layer_widths(hidden: &[usize]) -> Vec<usize> {
    let mut w = vec![2];
    w.extend_from_slice(hidden);
    w.push(2);
    w
}

/// Mini-batch SGD with momentum and weight decay:
/// `v ← m v + g + λ θ`, `θ ← θ − η v`. Each epoch visits the points in an
/// order drawn from a generator seeded by `cfg.shuffle_seed`.
pub fn mlp_train(params0: &MlpParams, data: &ClassDataset, cfg: &TrainConfig) -> Result<TrainOutcome<MlpParams>> {
    cfg.validate()?;
    check_input(params0, &data.inputs[0])?;
    if data.n_classes != *params0.widths.last().unwrap() {
        return Err(Error::Dimension("output width differs from the number of classes".into()));
    }
    if !params0.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = data.len();
    let b = match cfg.batch_size {
        BatchSize::Full => n,
        BatchSize::Size(b) => b.min(n),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut theta = params0.clone();
    let mut vel = vec![0.0; theta.len()];
    let mut samples = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(b) {
            let g = mlp_grad(&theta, data, batch);
            for ((w, v), gk) in theta.weights.iter_mut().zip(vel.iter_mut()).zip(&g) {
                *v = cfg.momentum * *v + gk + cfg.weight_decay * *w;
                *w -= cfg.eta * *v;
            }
            if is_diverged(&theta.weights, cfg.divergence_threshold) {
                return Ok(TrainOutcome {
                    final_theta: theta,
                    status: Status::Diverged { at_epoch: epoch },
                    samples,
                });
            }
        }
        if cfg.record_every > 0 && epoch % cfg.record_every == 0 {
            samples.push((epoch, theta.clone()));
        }
    }
    Ok(TrainOutcome {
        final_theta: theta,
        status: Status::Finite,
        samples,
    })
}

/// Fraction of correctly classified points.
pub fn accuracy(params: &MlpParams, data: &ClassDataset) -> Result<f64> {
    let mut ok = 0;
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        let z = mlp_forward(params, x)?;
        let pred = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
            .0;
        ok += usize::from(pred == y);
    }
    Ok(ok as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerParity {
    /// Hidden layer, 1-based.
    pub layer: usize,
    /// Neurons whose incoming weight norm is below the threshold.
    pub vanished: Vec<usize>,
    /// Incoming weight norm of every neuron.
    pub norms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParityDestination {
    pub layers: Vec<LayerParity>,
}

/// Identity of a parity destination: `(layer, vanished set)` per hidden layer.
pub type ParityKey = Vec<(usize, Vec<usize>)>;

impl ParityDestination {
    pub fn key(&self) -> ParityKey {
        self.layers.iter().map(|l| (l.layer, l.vanished.clone())).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(|l| l.vanished.is_empty())
    }

    /// One `layer:l neurons:{j,...}` line per hidden layer.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for l in &self.layers {
            let js: Vec<String> = l.vanished.iter().map(|j| j.to_string()).collect();
            let _ = writeln!(s, "layer:{} neurons:{{{}}}", l.layer, js.join(","));
        }
        s
    }

    pub fn parse_report(text: &str) -> Result<ParityKey> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(n, line)| {
                let err = || Error::Parse {
                    line: n + 1,
                    msg: format!("bad destination line {line:?}"),
                };
                let rest = line.strip_prefix("layer:").ok_or_else(err)?;
                let (l, set) = rest.split_once(" neurons:").ok_or_else(err)?;
                let layer = l.parse().map_err(|_| err())?;
                let inner = set.strip_prefix('{').and_then(|s| s.strip_suffix('}')).ok_or_else(err)?;
                let js = if inner.is_empty() {
                    Vec::new()
                } else {
                    inner
                        .split(',')
                        .map(|t| t.parse().map_err(|_| err()))
                        .collect::<Result<Vec<usize>>>()?
                };
                Ok((layer, js))
            })
            .collect()
    }
}

/// Vanished neurons of every hidden layer: `‖incoming weights‖₂ < threshold`.
pub fn detect_parity(params: &MlpParams, threshold: f64) -> ParityDestination {
    let layers = (1..=params.n_hidden_layers())
        .map(|h| {
            let n_in = params.widths[h - 1];
            let w = params.layer(h - 1);
            let norms: Vec<f64> = (0..params.widths[h])
                .map(|j| w[j * n_in..(j + 1) * n_in].iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            let vanished = norms
                .iter()
                .enumerate()
                .filter(|(_, &n)| n < threshold)
                .map(|(j, _)| j)
                .collect();
            LayerParity {
                layer: h,
                vanished,
                norms,
            }
        })
        .collect();
    ParityDestination { layers }
}

/// Where a multilayer run ends.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MlpDestination {
    Diverged,
    Parity(ParityKey),
}

pub fn mlp_destination(outcome: &TrainOutcome<MlpParams>, threshold: f64) -> MlpDestination {
    if outcome.diverged() || !outcome.final_theta.is_finite() {
        MlpDestination::Diverged
    } else {
        MlpDestination::Parity(detect_parity(&outcome.final_theta, threshold).key())
    }
}

/// Ensemble of copies of `params_ref` with the least significant bit of one
/// weight flipped, each trained with `cfg`.
pub fn mlp_bitflip_ensemble(
    params_ref: &MlpParams,
    data: &ClassDataset,
    cfg: &TrainConfig,
    threshold: f64,
    members: usize,
    seed: u64,
    workers: usize,
) -> Result<(BitflipReport, Vec<MlpDestination>)> {
    if !params_ref.is_finite() {
        return Err(Error::NonFinite);
    }
    if members < 2 {
        return Err(Error::Degenerate(format!("ensemble needs at least 2 members, got {members}")));
    }
    let idx = flip_indices(params_ref.len(), members, seed);
    let outs = map_indexed(idx.len(), workers, |m| {
        let mut p = params_ref.clone();
        p.weights[idx[m]] = flip_lsb(p.weights[idx[m]]);
        mlp_train(&p, data, cfg).map(|o| mlp_destination(&o, threshold))
    });
    let labels = outs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((ensemble_report(&labels)?, labels))
}

// ---- checkpoints -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub widths: Vec<usize>,
    /// `[out, in]` of every weight matrix.
    pub shapes: Vec<[usize; 2]>,
    pub n_weights: usize,
    /// sha256 of the binary file.
    pub sha256: String,
}

/// Writes the weights as little-endian binary64 to `path` and a JSON sidecar
/// to `path` with `.json` appended.
pub fn write_checkpoint(params: &MlpParams, path: impl AsRef<Path>) -> Result<CheckpointMeta> {
    let path = path.as_ref();
    let bytes: Vec<u8> = params.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    std::fs::write(path, &bytes)?;
    let meta = CheckpointMeta {
        widths: params.widths.clone(),
        shapes: params.widths.windows(2).map(|w| [w[1], w[0]]).collect(),
        n_weights: params.len(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(sidecar(path), json + "\n")?;
    Ok(meta)
}

pub fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Reads a checkpoint and verifies its size and hash against the sidecar.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<MlpParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(sidecar(path))?)
        .map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
    if hex::encode(Sha256::digest(&bytes)) != meta.sha256 {
        return Err(Error::Config("checkpoint hash does not match its sidecar".into()));
    }
    if bytes.len() != 8 * meta.n_weights {
        return Err(Error::Dimension("checkpoint size does not match its sidecar".into()));
    }
    let weights = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MlpParams::from_weights(&meta.widths, weights)
}

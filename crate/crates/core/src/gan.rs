//! Per-layer adversarial training on subgraph adjacency matrices and
//! regeneration of the layer's weighted adjacency.
//!
//! The generator maps a latent vector through two fully connected layers and
//! two stride-2 transposed convolutions to a `k×k` matrix in `[0, 1]`; the
//! discriminator mirrors it with two stride-2 convolutions and two fully
//! connected layers.

use std::io::Write;
use std::path::Path;

use gti_nn::{
    adam_step, checkpoint, AdamState, BatchNorm, ChannelBias, Conv2d, Deconv2d, Linear, Mode, ParamStore, Tape, Tensor,
    Var,
};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, WeightedAdjacency};
use crate::partition::PartitionResult;

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PAD: usize = 1;
const HIDDEN: usize = 128;
/// Channels of the feature map the generator's second FC layer reshapes to.
const G_BASE_CHANNELS: usize = 32;
const G_CHANNELS: [usize; 2] = [64, 1];
const D_CHANNELS: [usize; 2] = [32, 64];
const MAX_BATCH: usize = 64;
const MIN_BATCH: usize = 4;
pub const DEFAULT_INSTANCE_NOISE: f64 = 0.2;

/// The intra-part adjacency matrices of one layer, zero-padded to `k×k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphBatch {
    pub layer_id: usize,
    pub k: usize,
    /// Row-major `k×k` matrices, one per part.
    pub matrices: Vec<Vec<f64>>,
    /// Original node ids of each part, ascending; row `r` of matrix `j`
    /// belongs to `part_nodes[j][r]`.
    pub part_nodes: Vec<Vec<usize>>,
}

impl SubgraphBatch {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Stacks the selected matrices into a `[b, 1, k, k]` tensor.
    fn stack(&self, picks: &[usize]) -> Tensor {
        let kk = self.k * self.k;
        let mut data = Vec::with_capacity(picks.len() * kk);
        for &j in picks {
            data.extend_from_slice(&self.matrices[j]);
        }
        Tensor::new(vec![picks.len(), 1, self.k, self.k], data).expect("matrix sizes agree")
    }
}

/// Padded side length: the largest part rounded up to a multiple of 4.
pub fn padded_side(max_part: usize) -> usize {
    max_part.max(1).div_ceil(4) * 4
}

pub fn make_subgraph_batch(g: &Graph, p: &PartitionResult, layer_id: usize) -> Result<SubgraphBatch> {
    let n = g.node_count();
    if p.assignment.len() != n {
        return Err(Error::SizeMismatch(format!(
            "partition covers {} nodes, graph has {n}",
            p.assignment.len()
        )));
    }
    let mut seen = vec![false; n];
    for nodes in &p.parts {
        for &u in nodes {
            if u >= n || seen[u] {
                return Err(Error::SizeMismatch(format!(
                    "partition does not cover node {u} exactly once"
                )));
            }
            seen[u] = true;
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::SizeMismatch("partition leaves nodes uncovered".into()));
    }

    let k = padded_side(p.parts.iter().map(Vec::len).max().unwrap_or(0));
    let mut matrices = Vec::with_capacity(p.parts.len());
    let mut part_nodes = Vec::with_capacity(p.parts.len());
    for nodes in &p.parts {
        let mut nodes = nodes.clone();
        nodes.sort_unstable();
        let mut m = vec![0.0; k * k];
        for (r, &u) in nodes.iter().enumerate() {
            for (c, &v) in nodes.iter().enumerate() {
                if g.has_edge(u, v) {
                    m[r * k + c] = 1.0;
                }
            }
        }
        matrices.push(m);
        part_nodes.push(nodes);
    }
    Ok(SubgraphBatch {
        layer_id,
        k,
        matrices,
        part_nodes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Real samples per step; `None` means `min(M, 64)`.
    pub batch_size: Option<usize>,
    /// Std of the Gaussian noise added to every discriminator input, real
    /// and generated. Without it the discriminator separates exact 0/1
    /// entries from anything in between and the generator collapses to an
    /// all-zero output.
    pub instance_noise: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 100,
            iterations: 1000,
            learning_rate: 2e-4,
            batch_size: None,
            instance_noise: DEFAULT_INSTANCE_NOISE,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidParameter("GAN iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "GAN learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.latent_dim < 1 {
            return Err(Error::InvalidParameter("latent dimension must be at least 1".into()));
        }
        if !(self.instance_noise >= 0.0 && self.instance_noise.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "instance noise {} must be non-negative",
                self.instance_noise
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Generator {
    store: ParamStore,
    fc1: Linear,
    fc2: Linear,
    bn1: BatchNorm,
    deconv1: Deconv2d,
    bn2: BatchNorm,
    deconv2: Deconv2d,
    out_bias: ChannelBias,
    k: usize,
}

impl Generator {
    fn new(k: usize, latent_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut store = ParamStore::new(0);
        let q = k / 4;
        let flat = G_BASE_CHANNELS * q * q;
        let fc1 = Linear::new(&mut store, "g.fc1", latent_dim, HIDDEN, rng);
        let fc2 = Linear::new(&mut store, "g.fc2", HIDDEN, flat, rng);
        let bn1 = BatchNorm::new(&mut store, "g.bn1", flat);
        let deconv1 = Deconv2d::new(
            &mut store,
            "g.deconv1",
            G_BASE_CHANNELS,
            G_CHANNELS[0],
            KERNEL,
            STRIDE,
            PAD,
            rng,
        );
        let bn2 = BatchNorm::new(&mut store, "g.bn2", G_CHANNELS[0]);
        let deconv2 = Deconv2d::new(
            &mut store,
            "g.deconv2",
            G_CHANNELS[0],
            G_CHANNELS[1],
            KERNEL,
            STRIDE,
            PAD,
            rng,
        );
        let out_bias = ChannelBias::new(&mut store, "g.out", G_CHANNELS[1]);
        Self {
            store,
            fc1,
            fc2,
            bn1,
            deconv1,
            bn2,
            deconv2,
            out_bias,
            k,
        }
    }

    /// `z: [b, latent]` to `[b, 1, k, k]` in `(0, 1)`.
    fn forward(&mut self, tape: &mut Tape, z: Var, mode: Mode) -> Result<Var> {
        let b = tape.value(z).shape()[0];
        let q = self.k / 4;
        let s = &mut self.store;
        let h = self.fc1.forward(tape, s, z, mode)?;
        let h = tape.leaky_relu(h, gti_nn::layers::LEAKY_SLOPE);
        let h = self.fc2.forward(tape, s, h, mode)?;
        let h = self.bn1.forward(tape, s, h, mode)?;
        let h = tape.leaky_relu(h, gti_nn::layers::LEAKY_SLOPE);
        let h = tape.reshape(h, &[b, G_BASE_CHANNELS, q, q])?;
        let h = self.deconv1.forward(tape, s, h, mode)?;
        let h = self.bn2.forward(tape, s, h, mode)?;
        let h = tape.leaky_relu(h, gti_nn::layers::LEAKY_SLOPE);
        let h = self.deconv2.forward(tape, s, h, mode)?;
        let h = self.out_bias.forward(tape, s, h, mode)?;
        Ok(tape.sigmoid(h))
    }
}

#[derive(Clone, Debug)]
struct Discriminator {
    store: ParamStore,
    conv1: Conv2d,
    conv2: Conv2d,
    bn: BatchNorm,
    fc1: Linear,
    fc2: Linear,
    k: usize,
}

impl Discriminator {
    fn new(k: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut store = ParamStore::new(1);
        let q = k / 4;
        let conv1 = Conv2d::new(&mut store, "d.conv1", 1, D_CHANNELS[0], KERNEL, STRIDE, PAD, rng);
        let conv2 = Conv2d::new(
            &mut store,
            "d.conv2",
            D_CHANNELS[0],
            D_CHANNELS[1],
            KERNEL,
            STRIDE,
            PAD,
            rng,
        );
        let bn = BatchNorm::new(&mut store, "d.bn", D_CHANNELS[1]);
        let fc1 = Linear::new(&mut store, "d.fc1", D_CHANNELS[1] * q * q, HIDDEN, rng);
        let fc2 = Linear::new(&mut store, "d.fc2", HIDDEN, 1, rng);
        Self {
            store,
            conv1,
            conv2,
            bn,
            fc1,
            fc2,
            k,
        }
    }

    /// `x: [b, 1, k, k]` to logits `[b, 1]`.
    fn forward(&mut self, tape: &mut Tape, x: Var, mode: Mode) -> Result<Var> {
        let b = tape.value(x).shape()[0];
        let q = self.k / 4;
        let s = &mut self.store;
        let h = self.conv1.forward(tape, s, x, mode)?;
        let h = tape.leaky_relu(h, gti_nn::layers::LEAKY_SLOPE);
        let h = self.conv2.forward(tape, s, h, mode)?;
        let h = self.bn.forward(tape, s, h, mode)?;
        let h = tape.leaky_relu(h, gti_nn::layers::LEAKY_SLOPE);
        let h = tape.reshape(h, &[b, D_CHANNELS[1] * q * q])?;
        let h = self.fc1.forward(tape, s, h, mode)?;
        let h = tape.leaky_relu(h, gti_nn::layers::LEAKY_SLOPE);
        Ok(self.fc2.forward(tape, s, h, mode)?)
    }
}

/// Losses of one training iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLoss {
    pub d_loss: f64,
    pub g_loss: f64,
}

/// A trained generator/discriminator pair and its training record.
#[derive(Clone, Debug)]
pub struct GanModel {
    generator: Generator,
    discriminator: Discriminator,
    pub latent_dim: usize,
    pub history: Vec<IterationLoss>,
    /// Discriminator accuracy on the first real and fake batch, before any
    /// update.
    pub initial_d_accuracy: f64,
}

impl GanModel {
    fn new(k: usize, latent_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            generator: Generator::new(k, latent_dim, rng),
            discriminator: Discriminator::new(k, rng),
            latent_dim,
            history: Vec::new(),
            initial_d_accuracy: f64::NAN,
        }
    }

    pub fn k(&self) -> usize {
        self.generator.k
    }

    /// Every generator and discriminator tensor, plus a `meta` tensor
    /// holding `[k, latent_dim]`.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let meta = Tensor::new(vec![2], vec![self.k() as f64, self.latent_dim as f64]).expect("two values");
        let mut out = vec![("meta".to_string(), meta)];
        out.extend(self.generator.store.named_tensors());
        out.extend(self.discriminator.store.named_tensors());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.named_tensors()).map_err(|e| match e {
            gti_nn::NnError::Io(io) => Error::io(path, io),
            other => other.into(),
        })
    }

    /// Reloads a checkpoint written by [`GanModel::save`]. The training
    /// history is not stored and comes back empty.
    pub fn load(path: &Path) -> Result<Self> {
        let tensors = checkpoint::load(path).map_err(|e| match e {
            gti_nn::NnError::Io(io) => Error::io(path, io),
            other => other.into(),
        })?;
        Self::from_named_tensors(&tensors)
    }

    pub fn from_named_tensors(tensors: &[(String, Tensor)]) -> Result<Self> {
        let meta = tensors
            .iter()
            .find(|(n, t)| n == "meta" && t.len() == 2)
            .map(|(_, t)| t.data().to_vec())
            .ok_or_else(|| Error::InvalidParameter("checkpoint has no meta tensor".into()))?;
        let (k, latent) = (meta[0] as usize, meta[1] as usize);
        if k == 0 || k % 4 != 0 || latent == 0 {
            return Err(Error::InvalidParameter(format!(
                "checkpoint meta k={k}, latent={latent} is invalid"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(k, latent, &mut rng);
        model.generator.store.load_named(tensors)?;
        model.discriminator.store.load_named(tensors)?;
        Ok(model)
    }

    pub fn all_finite(&self) -> bool {
        self.generator.store.all_finite() && self.discriminator.store.all_finite()
    }

    /// Generates `[b, 1, k, k]` samples in eval mode from the given latents.
    pub fn generate(&self, z: Tensor) -> Result<Tensor> {
        let mut g = self.generator.clone();
        let mut tape = Tape::new();
        let z = tape.constant(z);
        let out = g.forward(&mut tape, z, Mode::Eval)?;
        Ok(tape.value(out).clone())
    }
}

fn normal_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}

fn add_noise(t: &mut Tensor, std: f64, rng: &mut ChaCha8Rng) {
    if std > 0.0 {
        for x in t.data_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *x += std * e;
        }
    }
}

fn check_loss(v: f64, iteration: usize, which: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            iteration,
            detail: format!("{which} loss is {v}"),
        })
    }
}

fn diverged(iteration: usize, e: gti_nn::NnError) -> Error {
    match e {
        gti_nn::NnError::NonFinite(detail) => Error::Diverged { iteration, detail },
        other => other.into(),
    }
}

/// Adversarial training with the non-saturating generator loss. Each
/// iteration takes one discriminator step on real and generated samples and
/// one generator step on fresh noise. Discriminator inputs carry
/// `cfg.instance_noise`.
pub fn train_layer_gan(batch: &SubgraphBatch, cfg: &GanConfig) -> Result<GanModel> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidParameter("subgraph batch is empty".into()));
    }
    let m = batch.len();
    let b_real = cfg.batch_size.unwrap_or(MAX_BATCH).min(m);
    let b = b_real.max(MIN_BATCH);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GanModel::new(batch.k, cfg.latent_dim, &mut rng);
    let mut adam_g = AdamState::new(model.generator.store.params());
    let mut adam_d = AdamState::new(model.discriminator.store.params());
    let ones = Tensor::full(&[b, 1], 1.0);
    let zeros = Tensor::zeros(&[b, 1]);
    let fixed: Vec<usize> = (0..b).map(|i| i % m).collect();

    for it in 0..cfg.iterations {
        let picks: Vec<usize> = if m > b_real {
            let mut p = index::sample(&mut rng, m, b_real).into_vec();
            p.sort_unstable();
            p
        } else {
            fixed.clone()
        };
        let mut real = batch.stack(&picks);
        add_noise(&mut real, cfg.instance_noise, &mut rng);

        // discriminator step, generator held fixed
        let fake = {
            let mut tape = Tape::new();
            let z = tape.constant(normal_tensor(&[b, cfg.latent_dim], &mut rng));
            let out = model.generator.forward(&mut tape, z, Mode::Frozen)?;
            let mut f = tape.value(out).clone();
            add_noise(&mut f, cfg.instance_noise, &mut rng);
            f
        };
        let mut tape = Tape::new();
        let real_var = tape.constant(real);
        let fake_var = tape.constant(fake);
        let d = &mut model.discriminator;
        let real_logits = d.forward(&mut tape, real_var, Mode::Train)?;
        let fake_logits = d.forward(&mut tape, fake_var, Mode::Train)?;
        if it == 0 {
            let hits = tape.value(real_logits).data().iter().filter(|&&l| l > 0.0).count()
                + tape.value(fake_logits).data().iter().filter(|&&l| l <= 0.0).count();
            model.initial_d_accuracy = hits as f64 / (2 * b) as f64;
        }
        let loss_real = tape.bce_with_logits(real_logits, ones.clone())?;
        let loss_fake = tape.bce_with_logits(fake_logits, zeros.clone())?;
        let d_loss_var = tape.add(loss_real, loss_fake)?;
        let d_loss = tape.value(d_loss_var).data()[0];
        check_loss(d_loss, it, "discriminator")?;
        let grads = tape.backward(d_loss_var)?;
        d.store.zero_grad();
        d.store.accumulate(&tape, &grads);
        adam_step(d.store.params_mut(), &mut adam_d, cfg.learning_rate).map_err(|e| diverged(it, e))?;

        // generator step through the frozen discriminator
        let mut tape = Tape::new();
        let z = tape.constant(normal_tensor(&[b, cfg.latent_dim], &mut rng));
        let fake = model.generator.forward(&mut tape, z, Mode::Train)?;
        let fake = if cfg.instance_noise > 0.0 {
            let mut n = Tensor::zeros(tape.value(fake).shape());
            add_noise(&mut n, cfg.instance_noise, &mut rng);
            let n = tape.constant(n);
            tape.add(fake, n)?
        } else {
            fake
        };
        let logits = model.discriminator.forward(&mut tape, fake, Mode::Frozen)?;
        let g_loss_var = tape.bce_with_logits(logits, ones.clone())?;
        let g_loss = tape.value(g_loss_var).data()[0];
        check_loss(g_loss, it, "generator")?;
        let grads = tape.backward(g_loss_var)?;
        let gs = &mut model.generator.store;
        gs.zero_grad();
        gs.accumulate(&tape, &grads);
        adam_step(gs.params_mut(), &mut adam_g, cfg.learning_rate).map_err(|e| diverged(it, e))?;

        model.history.push(IterationLoss { d_loss, g_loss });
    }
    if !model.all_finite() {
        return Err(Error::Diverged {
            iteration: cfg.iterations,
            detail: "non-finite parameters after training".into(),
        });
    }
    Ok(model)
}

/// One layer's regenerated weighted adjacency `G'_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerReconstruction {
    pub layer_id: usize,
    pub g_prime: WeightedAdjacency,
}

/// Seed of the latent for part `j` of layer `layer_id`.
pub fn latent_seed(seed: u64, layer_id: usize, part: usize) -> u64 {
    // splitmix64 finalizer over a combination of the three inputs
    let mut x = seed
        .wrapping_add((layer_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((part as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Draws one sample per part, crops it to the part size, symmetrizes it and
/// writes it into the part's diagonal block of an `N×N` matrix.
pub fn regenerate_layer(
    model: &GanModel,
    batch: &SubgraphBatch,
    node_count: usize,
    seed: u64,
) -> Result<LayerReconstruction> {
    if model.k() != batch.k {
        return Err(Error::SizeMismatch(format!(
            "model generates {0}x{0} matrices, batch has k = {1}",
            model.k(),
            batch.k
        )));
    }
    let latent = model.latent_dim;
    let mut z = Vec::with_capacity(batch.len() * latent);
    for j in 0..batch.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(latent_seed(seed, batch.layer_id, j));
        z.extend((0..latent).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
    }
    let samples = model.generate(Tensor::new(vec![batch.len(), latent], z)?)?;
    let k = batch.k;
    let mut g_prime = WeightedAdjacency::zeros(node_count);
    for (j, nodes) in batch.part_nodes.iter().enumerate() {
        let s = &samples.data()[j * k * k..(j + 1) * k * k];
        for (r, &u) in nodes.iter().enumerate() {
            if u >= node_count {
                return Err(Error::NodeOutOfRange { id: u, node_count });
            }
            for (c, &v) in nodes.iter().enumerate().skip(r + 1) {
                g_prime.set_symmetric(u, v, 0.5 * (s[r * k + c] + s[c * k + r]));
            }
        }
    }
    Ok(LayerReconstruction {
        layer_id: batch.layer_id,
        g_prime,
    })
}

/// `iteration,d_loss,g_loss` rows.
pub fn write_training_csv(history: &[IterationLoss], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "iteration,d_loss,g_loss")?;
    for (i, l) in history.iter().enumerate() {
        writeln!(w, "{i},{},{}", l.d_loss, l.g_loss)?;
    }
    Ok(())
}

//! A small convolutional network with hand-written backpropagation.
//!
//! The feature extractor is a stack of `conv 3x3 -> ReLU -> max-pool 2x2`
//! blocks followed by block averaging onto a `grid x grid` lattice; its
//! flattened output is the representation `r`. The classifier is a single
//! affine layer with softmax. All parameters live in one flat buffer so that
//! updates, checkpoints and finite-difference checks can treat them uniformly.

mod checkpoint;
pub mod gradcheck;
pub mod layers;

use std::fmt::Debug;
use std::ops::Range;

use num_traits::Float;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datakit::{Image, CHANNELS};
use crate::error::{Error, Result};
use crate::losses::{self, LossBundle};

pub use self::checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use self::layers::Tensor3;

pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    #[serde(default = "default_side")]
    pub input_side: usize,
    #[serde(default = "default_widths")]
    pub conv_widths: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    /// Side of the lattice the last feature map is averaged onto.
    #[serde(default = "default_grid")]
    pub pool_grid: usize,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
}

fn default_side() -> usize {
    32
}
fn default_widths() -> Vec<usize> {
    vec![8, 16]
}
fn default_kernel() -> usize {
    3
}
fn default_grid() -> usize {
    2
}
fn default_classes() -> usize {
    5
}

impl Default for Arch {
    fn default() -> Self {
        Self::for_input(default_side(), default_classes())
    }
}

impl Arch {
    /// Two blocks of widths 8 and 16 averaged onto a 2x2 lattice: p = 64.
    pub fn for_input(side: usize, n_classes: usize) -> Self {
        Self {
            input_side: side,
            conv_widths: default_widths(),
            kernel: default_kernel(),
            pool_grid: default_grid(),
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_widths.is_empty() || self.conv_widths.contains(&0) {
            return Err(Error::Config("conv widths must be non-empty and positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel)));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("classifier needs at least 2 classes".into()));
        }
        if self.pool_grid == 0 {
            return Err(Error::Config("pool grid must be positive".into()));
        }
        let mut side = self.input_side;
        for _ in &self.conv_widths {
            if side % 2 != 0 || side == 0 {
                return Err(Error::Config(format!(
                    "input side {} does not halve cleanly through {} pooling stages",
                    self.input_side,
                    self.conv_widths.len()
                )));
            }
            side /= 2;
        }
        if side % self.pool_grid != 0 {
            return Err(Error::Config(format!(
                "final feature map side {side} is not divisible by pool grid {}",
                self.pool_grid
            )));
        }
        Ok(())
    }

    /// Representation dimension p.
    pub fn repr_dim(&self) -> usize {
        self.conv_widths.last().copied().unwrap_or(0) * self.pool_grid * self.pool_grid
    }
}

/// Optimizer and objective settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Rescale each minibatch gradient to at most this L2 norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

impl Default for Hyper {
    /// SGD with lr 1e-3, momentum 0.9, weight decay 1e-3, minibatches of 16,
    /// 100 epochs and a midpoint trade-off of 0.5.
    fn default() -> Self {
        Self {
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-3,
            batch_size: 16,
            epochs: 100,
            lambda: 0.5,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0,1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight decay {} must be >= 0",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Config(format!("clip norm {c} must be > 0")));
            }
        }
        losses::check_lambda(self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ConvSlot {
    in_c: usize,
    out_c: usize,
    weight: Range<usize>,
    bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    convs: Vec<ConvSlot>,
    head_weight: Range<usize>,
    head_bias: Range<usize>,
    total: usize,
}

impl Layout {
    fn new(arch: &Arch) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let mut convs = Vec::with_capacity(arch.conv_widths.len());
        let mut in_c = CHANNELS;
        for &out_c in &arch.conv_widths {
            let weight = take(out_c * in_c * arch.kernel * arch.kernel);
            let bias = take(out_c);
            convs.push(ConvSlot {
                in_c,
                out_c,
                weight,
                bias,
            });
            in_c = out_c;
        }
        let p = arch.repr_dim();
        let head_weight = take(arch.n_classes * p);
        let head_bias = take(arch.n_classes);
        Self {
            convs,
            head_weight,
            head_bias,
            total: at,
        }
    }
}

/// Parameters of the extractor and classifier plus SGD velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    arch: Arch,
    layout: Layout,
    params: Vec<F>,
    velocity: Vec<F>,
}

struct BlockCache<F> {
    input: Tensor3<F>,
    activated: Tensor3<F>,
    argmax: Vec<u32>,
}

/// Intermediates of one forward pass, consumed by [`Model::backward`].
pub struct ForwardCache<F> {
    blocks: Vec<BlockCache<F>>,
    final_shape: (usize, usize, usize),
}

/// Output of one sample's forward pass.
pub struct Forward<F> {
    pub repr: Vec<F>,
    pub probs: Vec<F>,
    pub cache: ForwardCache<F>,
}

fn check_finite<F: Scalar>(values: &[F], what: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activation in {}", what())))
    }
}

impl<F: Scalar> Model<F> {
    /// Fan-in scaled uniform initialization: convolution weights use
    /// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, classifier weights
    /// `U(-1/sqrt(p), 1/sqrt(p))`; biases start at zero.
    pub fn init(arch: &Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        let mut params = vec![F::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(seed, 0, 0x1417));
        for slot in &layout.convs {
            let fan_in = (slot.in_c * arch.kernel * arch.kernel) as f64;
            let bound = (6.0 / fan_in).sqrt();
            for p in &mut params[slot.weight.clone()] {
                *p = F::from(rng.gen_range(-bound..bound)).expect("cast");
            }
        }
        let bound = 1.0 / (arch.repr_dim() as f64).sqrt();
        for p in &mut params[layout.head_weight.clone()] {
            *p = F::from(rng.gen_range(-bound..bound)).expect("cast");
        }
        let velocity = vec![F::zero(); layout.total];
        Ok(Self {
            arch: arch.clone(),
            layout,
            params,
            velocity,
        })
    }

    /// Rebuilds a model from a flat parameter vector (velocity reset to zero).
    pub fn from_params(arch: &Arch, params: Vec<F>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        if params.len() != layout.total {
            return Err(Error::Config(format!(
                "{} parameters supplied, architecture needs {}",
                params.len(),
                layout.total
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        let velocity = vec![F::zero(); layout.total];
        Ok(Self {
            arch: arch.clone(),
            layout,
            params,
            velocity,
        })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    pub fn velocity(&self) -> &[F] {
        &self.velocity
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    pub fn repr_dim(&self) -> usize {
        self.arch.repr_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    /// Range of the classifier weight matrix (`n_classes x p`, row-major).
    pub fn head_weight_range(&self) -> Range<usize> {
        self.layout.head_weight.clone()
    }

    pub fn head_bias_range(&self) -> Range<usize> {
        self.layout.head_bias.clone()
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        let conv = |v: &[F]| -> Vec<G> {
            v.iter()
                .map(|x| G::from(*x).expect("finite parameter"))
                .collect()
        };
        Model {
            arch: self.arch.clone(),
            layout: self.layout.clone(),
            params: conv(&self.params),
            velocity: conv(&self.velocity),
        }
    }

    pub fn tensor_from_image(&self, img: &Image) -> Result<Tensor3<F>> {
        if img.height() != self.arch.input_side || img.width() != self.arch.input_side {
            return Err(Error::Config(format!(
                "model expects {0}x{0} inputs, got {1}x{2}",
                self.arch.input_side,
                img.height(),
                img.width()
            )));
        }
        Ok(Tensor3 {
            c: CHANNELS,
            h: img.height(),
            w: img.width(),
            data: img
                .data()
                .iter()
                .map(|v| F::from(*v).expect("cast"))
                .collect(),
        })
    }

    /// Extractor pass: representation `r` and the cache needed to backpropagate into it.
    pub fn extract(&self, x: &Tensor3<F>) -> Result<(Vec<F>, ForwardCache<F>)> {
        let k = self.arch.kernel;
        let mut blocks = Vec::with_capacity(self.layout.convs.len());
        let mut cur = x.clone();
        for (i, slot) in self.layout.convs.iter().enumerate() {
            let mut act = layers::conv_forward(
                &cur,
                &self.params[slot.weight.clone()],
                &self.params[slot.bias.clone()],
                slot.out_c,
                k,
            );
            layers::relu_inplace(&mut act);
            check_finite(&act.data, || format!("conv block {i}"))?;
            let (pooled, argmax) = layers::maxpool2_forward(&act);
            blocks.push(BlockCache {
                input: cur,
                activated: act,
                argmax,
            });
            cur = pooled;
        }
        let repr = layers::block_avg_forward(&cur, self.arch.pool_grid);
        Ok((
            repr,
            ForwardCache {
                blocks,
                final_shape: (cur.c, cur.h, cur.w),
            },
        ))
    }

    /// Classifier logits for a representation.
    pub fn logits(&self, repr: &[F]) -> Vec<F> {
        let p = self.repr_dim();
        let w = &self.params[self.layout.head_weight.clone()];
        let b = &self.params[self.layout.head_bias.clone()];
        (0..self.arch.n_classes)
            .map(|m| {
                w[m * p..(m + 1) * p]
                    .iter()
                    .zip(repr)
                    .fold(b[m], |acc, (wv, rv)| acc + *wv * *rv)
            })
            .collect()
    }

    pub fn forward_one(&self, x: &Tensor3<F>) -> Result<Forward<F>> {
        let (repr, cache) = self.extract(x)?;
        let logits = self.logits(&repr);
        check_finite(&logits, || "classifier logits".to_string())?;
        Ok(Forward {
            probs: softmax(&logits),
            repr,
            cache,
        })
    }

    pub fn forward(&self, batch: &[Tensor3<F>]) -> Result<Vec<Forward<F>>> {
        if batch.is_empty() {
            return Err(Error::Config("forward called on an empty batch".into()));
        }
        batch.iter().map(|x| self.forward_one(x)).collect()
    }

    /// Accumulates into `grads` the gradient reaching the parameters from
    /// `d_repr` (gradient w.r.t. the representation) and, when given,
    /// `d_logits` (gradient w.r.t. the classifier logits).
    pub fn backward(
        &self,
        fwd: &Forward<F>,
        d_repr: &[F],
        d_logits: Option<&[F]>,
        grads: &mut [F],
    ) -> Result<()> {
        self.backward_parts(&fwd.repr, &fwd.cache, d_repr, d_logits, grads)
    }

    pub fn backward_parts(
        &self,
        repr: &[F],
        cache: &ForwardCache<F>,
        d_repr: &[F],
        d_logits: Option<&[F]>,
        grads: &mut [F],
    ) -> Result<()> {
        let p = self.repr_dim();
        if grads.len() != self.layout.total || d_repr.len() != p || repr.len() != p {
            return Err(Error::Internal("gradient buffer shape mismatch".into()));
        }
        if cache.blocks.len() != self.layout.convs.len() {
            return Err(Error::Internal("cache does not match model".into()));
        }
        let mut dr = d_repr.to_vec();
        if let Some(dl) = d_logits {
            if dl.len() != self.arch.n_classes {
                return Err(Error::Internal("logit gradient shape mismatch".into()));
            }
            let wr = self.layout.head_weight.clone();
            let w = &self.params[wr.clone()];
            for (m, g) in dl.iter().enumerate() {
                let row = wr.start + m * p;
                for k in 0..p {
                    grads[row + k] = grads[row + k] + *g * repr[k];
                    dr[k] = dr[k] + *g * w[m * p + k];
                }
                let bi = self.layout.head_bias.start + m;
                grads[bi] = grads[bi] + *g;
            }
        }

        let (c, h, w) = cache.final_shape;
        let mut d = layers::block_avg_backward(&dr, c, h, w, self.arch.pool_grid);
        for (i, (slot, block)) in self.layout.convs.iter().zip(&cache.blocks).enumerate().rev() {
            let mut d_act = layers::maxpool2_backward(&d, &block.argmax, block.activated.h, block.activated.w);
            layers::relu_backward(&block.activated, &mut d_act);
            let (gw, rest) = grads.split_at_mut(slot.bias.start);
            let d_in = layers::conv_backward(
                &block.input,
                &self.params[slot.weight.clone()],
                &d_act,
                self.arch.kernel,
                &mut gw[slot.weight.clone()],
                &mut rest[..slot.out_c],
                i > 0,
            );
            if let Some(d_in) = d_in {
                d = d_in;
            }
        }
        Ok(())
    }

    /// One SGD step with momentum and weight decay:
    /// `v <- momentum * v + g + weight_decay * theta`, `theta <- theta - lr * v`.
    pub fn sgd_step(&mut self, grads: &[F], hyper: &Hyper) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::Internal("gradient length mismatch".into()));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
        }
        let lr = F::from(hyper.lr).expect("cast");
        let mu = F::from(hyper.momentum).expect("cast");
        let wd = F::from(hyper.weight_decay).expect("cast");
        let scale = match hyper.clip_norm {
            Some(c) => {
                let norm = grads.iter().fold(0.0f64, |a, g| {
                    let g = g.to_f64().expect("cast");
                    a + g * g
                });
                let norm = norm.sqrt();
                F::from(if norm > c { c / norm } else { 1.0 }).expect("cast")
            }
            None => F::one(),
        };
        for ((p, v), g) in self.params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = mu * *v + scale * *g + wd * *p;
            *p = *p - lr * *v;
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!("non-finite update at parameter {i}")));
        }
        Ok(())
    }
}

pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().fold(F::neg_infinity(), |a, b| a.max(*b));
    let exps: Vec<F> = logits.iter().map(|l| (*l - max).exp()).collect();
    let sum = exps.iter().fold(F::zero(), |a, b| a + *b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// A training minibatch: clean inputs, optional tone-shifted counterparts and labels.
pub struct Batch<'a, F> {
    pub inputs: &'a [Tensor3<F>],
    /// `None` disables the invariance term (no second pass is run).
    pub transformed: Option<&'a [Tensor3<F>]>,
    pub labels: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveStats {
    /// Samples whose true-class probability hit the log clamp.
    pub clamped: usize,
}

impl<'a, F> Batch<'a, F> {
    fn check(&self) -> Result<()> {
        if self.inputs.is_empty() || self.inputs.len() != self.labels.len() {
            return Err(Error::Internal("batch inputs and labels disagree".into()));
        }
        if let Some(t) = self.transformed {
            if t.len() != self.inputs.len() {
                return Err(Error::Internal("transformed batch size mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Loss of the composite objective without gradients. Batch values are means.
pub fn objective_value<F: Scalar>(model: &Model<F>, batch: &Batch<'_, F>, lambda: f64) -> Result<LossBundle> {
    batch.check()?;
    let n = batch.inputs.len() as f64;
    let (mut cls, mut reg) = (0.0, 0.0);
    for (i, x) in batch.inputs.iter().enumerate() {
        let fwd = model.forward_one(x)?;
        cls += losses::cross_entropy(&fwd.probs, batch.labels[i])?.value;
        if let Some(t) = batch.transformed {
            let (r2, _) = model.extract(&t[i])?;
            reg += losses::reg_loss(&fwd.repr, &r2)?;
        }
    }
    losses::total_loss(cls / n, reg / n, lambda)
}

/// Composite loss `mean CE + lambda * mean ||r - r'||^2` and its gradient
/// with respect to every parameter. The invariance term backpropagates
/// through the extractor along both the clean and the transformed pass.
pub fn objective<F: Scalar>(
    model: &Model<F>,
    batch: &Batch<'_, F>,
    lambda: f64,
) -> Result<(LossBundle, Vec<F>, ObjectiveStats)> {
    batch.check()?;
    losses::check_lambda(lambda)?;
    let n = batch.inputs.len();
    let inv_n = F::one() / F::from(n).expect("cast");
    let reg_scale = F::from(2.0 * lambda).expect("cast") * inv_n;
    let mut grads = vec![F::zero(); model.n_params()];
    let mut stats = ObjectiveStats::default();
    let (mut cls, mut reg) = (0.0, 0.0);
    let p = model.repr_dim();

    for (i, x) in batch.inputs.iter().enumerate() {
        let y = batch.labels[i];
        let fwd = model.forward_one(x)?;
        let ce = losses::cross_entropy(&fwd.probs, y)?;
        cls += ce.value;
        stats.clamped += ce.clamped as usize;
        let d_logits: Vec<F> = fwd
            .probs
            .iter()
            .enumerate()
            .map(|(j, pj)| (*pj - if j == y { F::one() } else { F::zero() }) * inv_n)
            .collect();

        match batch.transformed {
            Some(t) => {
                let (r2, cache2) = model.extract(&t[i])?;
                reg += losses::reg_loss(&fwd.repr, &r2)?;
                let d_r: Vec<F> = fwd
                    .repr
                    .iter()
                    .zip(&r2)
                    .map(|(a, b)| (*a - *b) * reg_scale)
                    .collect();
                let d_r2: Vec<F> = d_r.iter().map(|v| -*v).collect();
                model.backward(&fwd, &d_r, Some(&d_logits), &mut grads)?;
                model.backward_parts(&r2, &cache2, &d_r2, None, &mut grads)?;
            }
            None => {
                model.backward(&fwd, &vec![F::zero(); p], Some(&d_logits), &mut grads)?;
            }
        }
    }
    let bundle = losses::total_loss(cls / n as f64, reg / n as f64, lambda)?;
    Ok((bundle, grads, stats))
}

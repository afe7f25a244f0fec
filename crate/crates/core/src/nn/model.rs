use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{
    conv3x3_backward, conv3x3_forward, cross_entropy, gap_backward, gap_forward, head_backward,
    head_logits, maxpool2x2_backward, maxpool2x2_forward, relu_backward, relu_forward, softmax,
    HeadParams, NUM_CLASSES,
};
use super::{NnError, Tensor4};
use crate::dataset::{ChannelStack, QualityLabel, StackOrder};

const HEAD_INIT_STD: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    Single,
    Dual,
}

impl Architecture {
    pub fn branches(self) -> usize {
        match self {
            Architecture::Single => 1,
            Architecture::Dual => 2,
        }
    }

    /// Channels seen by each branch's first convolution.
    pub fn input_channels(self) -> usize {
        match self {
            Architecture::Single => 5,
            Architecture::Dual => 4,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Single => "single",
            Architecture::Dual => "dual",
        }
    }

    /// Stack orders fed to each branch, in branch order.
    pub fn branch_orders(self) -> &'static [StackOrder] {
        match self {
            Architecture::Single => &[StackOrder::RgbLsTs],
            Architecture::Dual => &[StackOrder::RgbLs, StackOrder::RgbTs],
        }
    }
}

/// Output widths of the `[conv3x3, relu, maxpool]` blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub widths: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: vec![8, 16, 32],
        }
    }
}

impl ModelConfig {
    /// Spatial dims must survive every 2×2 pool.
    pub fn divisor(&self) -> usize {
        1 << self.widths.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out × in × 3 × 3`.
    pub kernels: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParams {
    pub blocks: Vec<ConvBlock>,
}

impl BackboneParams {
    pub fn output_width(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.out_channels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub config: ModelConfig,
    pub branches: Vec<BackboneParams>,
    pub head: HeadParams,
}

/// Parameter gradients laid out like [`Model::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

struct BlockCache {
    x: Tensor4,
    z: Tensor4,
    a: Tensor4,
    argmax: Vec<usize>,
}

struct BranchCache {
    blocks: Vec<BlockCache>,
    out_shape: [usize; 4],
}

pub struct ForwardCache {
    branches: Vec<BranchCache>,
    features: Vec<f64>,
    pub probs: Vec<[f64; NUM_CLASSES]>,
}

/// Rounds to the nearest `f32` so checkpoints stay bit-exact.
pub(crate) fn to_f32_grid(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

pub fn init_params(arch: Architecture, config: &ModelConfig, rng_seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut branches = Vec::with_capacity(arch.branches());
    for _ in 0..arch.branches() {
        let mut in_c = arch.input_channels();
        let mut blocks = Vec::with_capacity(config.widths.len());
        for &out_c in &config.widths {
            let he = Normal::new(0.0, (2.0 / (in_c * 9) as f64).sqrt()).expect("positive std");
            let mut kernels: Vec<f64> = (0..out_c * in_c * 9).map(|_| he.sample(&mut rng)).collect();
            to_f32_grid(&mut kernels);
            blocks.push(ConvBlock {
                in_channels: in_c,
                out_channels: out_c,
                kernels,
                bias: vec![0.0; out_c],
            });
            in_c = out_c;
        }
        branches.push(BackboneParams { blocks });
    }
    let fdim: usize = branches.iter().map(BackboneParams::output_width).sum();
    let g = Normal::new(0.0, HEAD_INIT_STD).expect("positive std");
    let mut w: Vec<f64> = (0..NUM_CLASSES * fdim).map(|_| g.sample(&mut rng)).collect();
    let mut b: Vec<f64> = (0..NUM_CLASSES).map(|_| g.sample(&mut rng)).collect();
    to_f32_grid(&mut w);
    to_f32_grid(&mut b);
    Model {
        arch,
        config: config.clone(),
        branches,
        head: HeadParams { w, b },
    }
}

fn backbone_forward(bb: &BackboneParams, x: &Tensor4) -> Result<(Tensor4, Vec<BlockCache>), NnError> {
    let mut cur = x.clone();
    let mut caches = Vec::with_capacity(bb.blocks.len());
    for blk in &bb.blocks {
        if cur.c != blk.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "block expects {} channels, got {}",
                blk.in_channels, cur.c
            )));
        }
        let z = conv3x3_forward(&cur, &blk.kernels, &blk.bias)?;
        let a = relu_forward(&z);
        let (p, argmax) = maxpool2x2_forward(&a)?;
        caches.push(BlockCache {
            x: cur,
            z,
            a,
            argmax,
        });
        cur = p;
    }
    Ok((cur, caches))
}

/// Returns per-block `(dk, db)` in block order.
fn backbone_backward(
    bb: &BackboneParams,
    caches: &[BlockCache],
    dout: Tensor4,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, NnError> {
    let mut grads = Vec::with_capacity(bb.blocks.len());
    let mut d = dout;
    for (blk, c) in bb.blocks.iter().zip(caches).rev() {
        let da = maxpool2x2_backward(c.a.shape(), &c.argmax, &d);
        let dz = relu_backward(&c.z, &da);
        let g = conv3x3_backward(&c.x, &blk.kernels, &dz)?;
        grads.push((g.dk, g.db));
        d = g.dx;
    }
    grads.reverse();
    Ok(grads)
}

impl Model {
    pub fn feature_dim(&self) -> usize {
        self.head.feature_dim()
    }

    /// All parameter vectors in declaration order: per branch, per block,
    /// kernels then bias; then head weights and head bias.
    pub fn params(&self) -> Vec<&Vec<f64>> {
        let mut v = Vec::new();
        for bb in &self.branches {
            for blk in &bb.blocks {
                v.push(&blk.kernels);
                v.push(&blk.bias);
            }
        }
        v.push(&self.head.w);
        v.push(&self.head.b);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v = Vec::new();
        for bb in &mut self.branches {
            for blk in &mut bb.blocks {
                v.push(&mut blk.kernels);
                v.push(&mut blk.bias);
            }
        }
        v.push(&mut self.head.w);
        v.push(&mut self.head.b);
        v
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients(self.params().iter().map(|p| vec![0.0; p.len()]).collect())
    }

    /// Converts five-channel samples into one batched tensor per branch.
    pub fn batch_inputs(&self, stacks: &[&ChannelStack]) -> Result<Vec<Tensor4>, NnError> {
        let orders = self.arch.branch_orders();
        let mut per_branch = vec![Vec::with_capacity(stacks.len()); orders.len()];
        for s in stacks {
            for (slot, &order) in per_branch.iter_mut().zip(orders) {
                let sel = s.select(order).map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
                slot.push(stack_tensor(&sel));
            }
        }
        per_branch.iter().map(|b| Tensor4::concat_batch(b)).collect()
    }

    fn check_inputs(&self, inputs: &[Tensor4]) -> Result<(), NnError> {
        if inputs.len() != self.branches.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} inputs for {} branches",
                inputs.len(),
                self.branches.len()
            )));
        }
        let d = self.config.divisor();
        let s0 = inputs[0].shape();
        for t in inputs {
            if t.c != self.arch.input_channels() {
                return Err(NnError::ShapeMismatch(format!(
                    "{} input channels, {} expected",
                    t.c,
                    self.arch.input_channels()
                )));
            }
            if t.h % d != 0 || t.w % d != 0 || t.h == 0 || t.w == 0 {
                return Err(NnError::ShapeMismatch(format!(
                    "{}x{} not divisible by {d}",
                    t.w, t.h
                )));
            }
            if t.shape() != s0 {
                return Err(NnError::ShapeMismatch("branch inputs differ in shape".into()));
            }
        }
        Ok(())
    }

    /// Runs every branch, concatenates the GAP features and applies the head.
    pub fn forward(&self, inputs: &[Tensor4]) -> Result<ForwardCache, NnError> {
        self.check_inputs(inputs)?;
        let n = inputs[0].n;
        let fdim = self.feature_dim();
        let mut features = vec![0.0; n * fdim];
        let mut branches = Vec::with_capacity(inputs.len());
        let mut offset = 0;
        for (bb, x) in self.branches.iter().zip(inputs) {
            let (out, blocks) = backbone_forward(bb, x)?;
            let f = gap_forward(&out);
            let bw = out.c;
            for s in 0..n {
                features[s * fdim + offset..s * fdim + offset + bw].copy_from_slice(&f[s * bw..(s + 1) * bw]);
            }
            offset += bw;
            branches.push(BranchCache {
                blocks,
                out_shape: out.shape(),
            });
        }
        if offset != fdim {
            return Err(NnError::ShapeMismatch(format!(
                "feature dim {offset} vs head {fdim}"
            )));
        }
        let probs = (0..n)
            .map(|s| Ok(softmax(&head_logits(&features[s * fdim..(s + 1) * fdim], &self.head)?)))
            .collect::<Result<Vec<_>, NnError>>()?;
        Ok(ForwardCache {
            branches,
            features,
            probs,
        })
    }

    /// Backpropagates per-sample logit gradients, summing over the batch.
    fn backward(&self, cache: &ForwardCache, dlogits: &[[f64; NUM_CLASSES]]) -> Result<Gradients, NnError> {
        let fdim = self.feature_dim();
        let n = dlogits.len();
        let mut dw = vec![0.0; self.head.w.len()];
        let mut db = vec![0.0; NUM_CLASSES];
        let mut df = vec![0.0; n * fdim];
        for (s, dz) in dlogits.iter().enumerate() {
            let hg = head_backward(&cache.features[s * fdim..(s + 1) * fdim], &self.head, dz);
            dw.iter_mut().zip(&hg.dw).for_each(|(a, b)| *a += b);
            db.iter_mut().zip(&hg.db).for_each(|(a, b)| *a += b);
            df[s * fdim..(s + 1) * fdim].copy_from_slice(&hg.df);
        }
        let mut out = Vec::new();
        let mut offset = 0;
        for (bb, bc) in self.branches.iter().zip(&cache.branches) {
            let bw = bc.out_shape[1];
            let dfb: Vec<f64> = (0..n)
                .flat_map(|s| df[s * fdim + offset..s * fdim + offset + bw].iter().copied())
                .collect();
            offset += bw;
            let dout = gap_backward(bc.out_shape, &dfb);
            for (dk, dbias) in backbone_backward(bb, &bc.blocks, dout)? {
                out.push(dk);
                out.push(dbias);
            }
        }
        out.push(dw);
        out.push(db);
        Ok(Gradients(out))
    }

    /// Summed cross-entropy over the batch with its parameter gradients.
    pub fn loss_and_gradients(
        &self,
        inputs: &[Tensor4],
        labels: &[usize],
    ) -> Result<(f64, Gradients, Vec<[f64; NUM_CLASSES]>), NnError> {
        let cache = self.forward(inputs)?;
        if labels.len() != cache.probs.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                cache.probs.len()
            )));
        }
        let mut loss = 0.0;
        let mut dlogits = Vec::with_capacity(labels.len());
        for (p, &l) in cache.probs.iter().zip(labels) {
            if l >= NUM_CLASSES {
                return Err(NnError::ShapeMismatch(format!("label {l}")));
            }
            let (li, g) = cross_entropy(p, l);
            loss += li;
            dlogits.push(g);
        }
        let grads = self.backward(&cache, &dlogits)?;
        Ok((loss, grads, cache.probs))
    }

    /// Summed gradients of several batches, accumulated in slice order.
    pub fn accumulate(&self, parts: &[Gradients]) -> Gradients {
        let mut g = self.zero_gradients();
        for p in parts {
            g.add(p);
        }
        g
    }

    /// Last-block post-ReLU activations and the target logit's gradient
    /// with respect to them, per branch. Single-sample inputs.
    pub(crate) fn last_activation_grads(
        &self,
        inputs: &[Tensor4],
        target: usize,
    ) -> Result<Vec<(Tensor4, Tensor4)>, NnError> {
        let cache = self.forward(inputs)?;
        let mut dz = [0.0; NUM_CLASSES];
        dz[target] = 1.0;
        let hg = head_backward(&cache.features[..self.feature_dim()], &self.head, &dz);
        let mut out = Vec::new();
        let mut offset = 0;
        for bc in &cache.branches {
            let bw = bc.out_shape[1];
            let dpool = gap_backward(bc.out_shape, &hg.df[offset..offset + bw]);
            offset += bw;
            let last = bc.blocks.last().ok_or_else(|| NnError::ShapeMismatch("empty backbone".into()))?;
            let da = maxpool2x2_backward(last.a.shape(), &last.argmax, &dpool);
            out.push((last.a.clone(), da));
        }
        Ok(out)
    }
}

pub(crate) fn stack_tensor(s: &ChannelStack) -> Tensor4 {
    Tensor4 {
        n: 1,
        c: s.channels(),
        h: s.height(),
        w: s.width(),
        data: s.data().iter().map(|&v| v as f64).collect(),
    }
}

fn expect_order(s: &ChannelStack, order: StackOrder) -> Result<Tensor4, NnError> {
    if s.order() != order {
        return Err(NnError::ShapeMismatch(format!(
            "stack order {} where {} is required",
            s.order().tag(),
            order.tag()
        )));
    }
    Ok(stack_tensor(s))
}

pub fn forward_single(model: &Model, stack: &ChannelStack) -> Result<[f64; NUM_CLASSES], NnError> {
    if model.arch != Architecture::Single {
        return Err(NnError::ShapeMismatch("dual model given one stack".into()));
    }
    let x = expect_order(stack, StackOrder::RgbLsTs)?;
    Ok(model.forward(&[x])?.probs[0])
}

pub fn forward_dual(
    model: &Model,
    s_ls: &ChannelStack,
    s_ts: &ChannelStack,
) -> Result<[f64; NUM_CLASSES], NnError> {
    if model.arch != Architecture::Dual {
        return Err(NnError::ShapeMismatch("single model given two stacks".into()));
    }
    let a = expect_order(s_ls, StackOrder::RgbLs)?;
    let b = expect_order(s_ts, StackOrder::RgbTs)?;
    Ok(model.forward(&[a, b])?.probs[0])
}

/// Argmax with ties going to the lower class index.
pub fn argmax_label(probs: &[f64; NUM_CLASSES]) -> QualityLabel {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    QualityLabel::from_index(best).expect("three classes")
}

/// Classifies one five-channel (`rgb_ls_ts`) sample with either architecture.
pub fn predict(model: &Model, stack: &ChannelStack) -> Result<(QualityLabel, [f64; NUM_CLASSES]), NnError> {
    let inputs = model.batch_inputs(&[stack])?;
    let p = model.forward(&inputs)?.probs[0];
    Ok((argmax_label(&p), p))
}

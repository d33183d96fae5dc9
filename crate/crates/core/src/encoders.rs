//! Action encoder, interaction encoder, attention fusion and the two
//! classification heads, sharing one parameter store.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split_interaction_crop, ActionClass, InteractionClass, InteractionSample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{Graph, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionBackbone {
    /// Patch embedding, one self-attention block with residual, linear head.
    #[default]
    PatchAttention,
    /// One strided convolution, ReLU, linear head.
    Conv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionBackbone {
    /// One large-kernel strided convolution, ReLU, linear head.
    #[default]
    ConvLargeKernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Side of the square action-encoder input.
    pub input_size: usize,
    /// Side of the square interaction-encoder input.
    pub interaction_input_size: usize,
    /// Embedding dimension shared by both encoders.
    pub d: usize,
    /// Heads of the fusion attention.
    pub n_attention_heads: usize,
    pub action_backbone: ActionBackbone,
    pub interaction_backbone: InteractionBackbone,
    /// Patches per side for the patch-attention backbone.
    pub patch_grid: usize,
    pub token_dim: usize,
    pub action_attention_heads: usize,
    /// First-layer kernel of the interaction encoder.
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub conv_channels: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_size: 224,
            interaction_input_size: 224,
            d: 256,
            n_attention_heads: 4,
            action_backbone: ActionBackbone::PatchAttention,
            interaction_backbone: InteractionBackbone::ConvLargeKernel,
            patch_grid: 4,
            token_dim: 48,
            action_attention_heads: 2,
            conv_kernel: 32,
            conv_stride: 16,
            conv_channels: 16,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.d == 0 || self.n_attention_heads == 0 || !self.d.is_multiple_of(self.n_attention_heads) {
            return bad("d must be a positive multiple of n_attention_heads");
        }
        if self.input_size < 32 || self.interaction_input_size < 32 {
            return bad("input sizes must be at least 32");
        }
        if self.patch_grid == 0 || !self.input_size.is_multiple_of(self.patch_grid) {
            return bad("input_size must be divisible by patch_grid");
        }
        if self.action_attention_heads == 0 || !self.token_dim.is_multiple_of(self.action_attention_heads) {
            return bad("token_dim must be a multiple of action_attention_heads");
        }
        if self.conv_kernel == 0 || self.conv_stride == 0 || self.conv_kernel > self.interaction_input_size {
            return bad("conv_kernel must fit inside interaction_input_size");
        }
        if self.conv_channels == 0 {
            return bad("conv_channels must be positive");
        }
        Ok(())
    }

    fn action_conv(&self) -> (usize, usize) {
        let k = self.input_size / 4;
        (k, (k / 2).max(1))
    }

    /// Receptive field of the interaction encoder's first layer, in input pixels.
    pub fn interaction_receptive_field(&self) -> usize {
        self.conv_kernel
    }

    fn interaction_positions(&self) -> usize {
        let side = (self.interaction_input_size - self.conv_kernel) / self.conv_stride + 1;
        side * side
    }
}

/// Per-channel standardization applied after resizing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mean: [0.5; 3],
            std: [0.25; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub values: Vec<f64>,
    pub class_order: &'static [&'static str],
}

impl Logits {
    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    pub fn softmax(&self) -> Vec<f64> {
        crate::losses::softmax(&self.values)
    }
}

/// Stacked latents before and after attention fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionState {
    /// Rows: interaction, member a, member b.
    pub z_in: Array2<f64>,
    pub z_out: Array2<f64>,
    /// Row-major flatten of `z_out`.
    pub z_flat: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Ids {
    act: ActIds,
    int_conv_w: ParamId,
    int_conv_b: ParamId,
    int_out_w: ParamId,
    int_out_b: ParamId,
    fuse_q: ParamId,
    fuse_k: ParamId,
    fuse_v: ParamId,
    fuse_o: ParamId,
    head_int_w: ParamId,
    head_int_b: ParamId,
    head_act_w: ParamId,
    head_act_b: ParamId,
}

#[derive(Debug, Clone, Copy)]
enum ActIds {
    Patch {
        embed_w: ParamId,
        embed_b: ParamId,
        pos: ParamId,
        q: ParamId,
        k: ParamId,
        v: ParamId,
        o: ParamId,
        out_w: ParamId,
        out_b: ParamId,
    },
    Conv {
        conv_w: ParamId,
        conv_b: ParamId,
        out_w: ParamId,
        out_b: ParamId,
    },
}

/// Parameter names and shapes implied by a config, in creation order.
pub fn parameter_layout(cfg: &EncoderConfig) -> Vec<(String, usize, usize)> {
    let d = cfg.d;
    let mut out: Vec<(String, usize, usize)> = Vec::new();
    let mut push = |n: &str, r: usize, c: usize| out.push((n.to_string(), r, c));
    match cfg.action_backbone {
        ActionBackbone::PatchAttention => {
            let p = cfg.input_size / cfg.patch_grid;
            let tokens = cfg.patch_grid * cfg.patch_grid;
            let t = cfg.token_dim;
            push("act.embed_w", p * p * 3, t);
            push("act.embed_b", 1, t);
            push("act.pos", tokens, t);
            push("act.attn_q", t, t);
            push("act.attn_k", t, t);
            push("act.attn_v", t, t);
            push("act.attn_o", t, t);
            push("act.out_w", tokens * t, d);
            push("act.out_b", 1, d);
        }
        ActionBackbone::Conv => {
            let (k, s) = cfg.action_conv();
            let side = (cfg.input_size - k) / s + 1;
            push("act.conv_w", k * k * 3, cfg.conv_channels);
            push("act.conv_b", 1, cfg.conv_channels);
            push("act.out_w", side * side * cfg.conv_channels, d);
            push("act.out_b", 1, d);
        }
    }
    let k = cfg.conv_kernel;
    push("int.conv_w", k * k * 3, cfg.conv_channels);
    push("int.conv_b", 1, cfg.conv_channels);
    push("int.out_w", cfg.interaction_positions() * cfg.conv_channels, d);
    push("int.out_b", 1, d);
    push("fuse.q", d, d);
    push("fuse.k", d, d);
    push("fuse.v", d, d);
    push("fuse.o", d, d);
    push("head.int_w", 3 * d, NUM_CLASSES);
    push("head.int_b", 1, NUM_CLASSES);
    push("head.act_w", d, NUM_CLASSES);
    push("head.act_b", 1, NUM_CLASSES);
    out
}

/// Square patches (or convolution windows) of a normalized image, one row per
/// window, each row ordered `(dy, dx, channel)`.
fn im2col(pixels: &[f64], size: usize, k: usize, stride: usize, out: &mut Vec<f64>) {
    let side = (size - k) / stride + 1;
    for wr in 0..side {
        for wc in 0..side {
            for dy in 0..k {
                let row = wr * stride + dy;
                let start = (row * size + wc * stride) * 3;
                out.extend_from_slice(&pixels[start..start + k * 3]);
            }
        }
    }
}

/// Learnable state of the full model.
#[derive(Debug, Clone)]
pub struct CattleActModel {
    pub config: EncoderConfig,
    pub params: ParamStore,
    pub normalization: Normalization,
    ids: Ids,
}

impl CattleActModel {
    pub fn new(config: EncoderConfig, normalization: Normalization) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        for (name, r, c) in parameter_layout(&config) {
            if r == 1 {
                params.add_zeros(&name, r, c);
            } else if name == "act.pos" {
                let w = Array2::from_shape_fn((r, c), |_| {
                    0.02 * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
                });
                params.add(&name, w);
            } else if name.ends_with("conv_w") || name == "act.embed_w" {
                params.add_he(&name, r, c, &mut rng);
            } else {
                params.add_glorot(&name, r, c, &mut rng);
            }
        }
        Self::from_parts(config, params, normalization)
    }

    /// Rebuilds a model around existing parameters, checking names and shapes.
    pub fn from_parts(config: EncoderConfig, params: ParamStore, normalization: Normalization) -> Result<Self> {
        config.validate()?;
        for (name, r, c) in parameter_layout(&config) {
            let id = params
                .find(&name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing parameter {name}")))?;
            if params.value(id).dim() != (r, c) {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    params.value(id).dim(),
                    (r, c)
                )));
            }
        }
        let id = |n: &str| params.find(n).expect("checked above");
        let act = match config.action_backbone {
            ActionBackbone::PatchAttention => ActIds::Patch {
                embed_w: id("act.embed_w"),
                embed_b: id("act.embed_b"),
                pos: id("act.pos"),
                q: id("act.attn_q"),
                k: id("act.attn_k"),
                v: id("act.attn_v"),
                o: id("act.attn_o"),
                out_w: id("act.out_w"),
                out_b: id("act.out_b"),
            },
            ActionBackbone::Conv => ActIds::Conv {
                conv_w: id("act.conv_w"),
                conv_b: id("act.conv_b"),
                out_w: id("act.out_w"),
                out_b: id("act.out_b"),
            },
        };
        let ids = Ids {
            act,
            int_conv_w: id("int.conv_w"),
            int_conv_b: id("int.conv_b"),
            int_out_w: id("int.out_w"),
            int_out_b: id("int.out_b"),
            fuse_q: id("fuse.q"),
            fuse_k: id("fuse.k"),
            fuse_v: id("fuse.v"),
            fuse_o: id("fuse.o"),
            head_int_w: id("head.int_w"),
            head_int_b: id("head.int_b"),
            head_act_w: id("head.act_w"),
            head_act_b: id("head.act_b"),
        };
        Ok(Self {
            config,
            params,
            normalization,
            ids,
        })
    }

    pub fn d(&self) -> usize {
        self.config.d
    }

    /// Copies every `act.*` parameter from `other` (same action config).
    pub fn load_action_encoder(&mut self, other: &CattleActModel) -> Result<()> {
        for (_, name, value) in other.params.iter().filter(|(_, n, _)| n.starts_with("act.")) {
            let id = self
                .params
                .find(name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing parameter {name}")))?;
            if self.params.value(id).dim() != value.dim() {
                return Err(Error::CheckpointMismatch(format!("shape of {name} differs")));
            }
            self.params.set(id, value.clone());
        }
        Ok(())
    }

    fn normalized(&self, image: &Image, size: usize) -> Result<Vec<f64>> {
        if image.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: format!("non-empty image resized to {size}x{size}"),
                got: "empty image".into(),
            });
        }
        let resized = image.resize(size, size);
        let (m, s) = (self.normalization.mean, self.normalization.std);
        Ok(resized
            .data()
            .chunks_exact(3)
            .flat_map(|px| (0..3).map(move |c| ((px[c] - m[c]) / s[c]) as f64))
            .collect())
    }

    fn windows(&self, images: &[&Image], size: usize, k: usize, stride: usize) -> Result<Array2<f64>> {
        let side = (size - k) / stride + 1;
        let mut data = Vec::with_capacity(images.len() * side * side * k * k * 3);
        for img in images {
            im2col(&self.normalized(img, size)?, size, k, stride, &mut data);
        }
        Ok(Array2::from_shape_vec((images.len() * side * side, k * k * 3), data).expect("sizes"))
    }

    /// Network input for a batch of action crops.
    pub fn action_input(&self, images: &[&Image]) -> Result<Array2<f64>> {
        let c = &self.config;
        match c.action_backbone {
            ActionBackbone::PatchAttention => {
                let p = c.input_size / c.patch_grid;
                self.windows(images, c.input_size, p, p)
            }
            ActionBackbone::Conv => {
                let (k, s) = c.action_conv();
                self.windows(images, c.input_size, k, s)
            }
        }
    }

    /// Network input for a batch of pair crops.
    pub fn interaction_input(&self, images: &[&Image]) -> Result<Array2<f64>> {
        let c = &self.config;
        self.windows(images, c.interaction_input_size, c.conv_kernel, c.conv_stride)
    }

    fn linear(&self, g: &mut Graph, x: Tensor, w: ParamId, b: ParamId) -> Tensor {
        let w = g.param(&self.params, w);
        let b = g.param(&self.params, b);
        let h = g.matmul(x, w);
        g.add_row(h, b)
    }

    /// `B x D` action embeddings from [`Self::action_input`] rows.
    pub fn action_forward(&self, g: &mut Graph, input: Array2<f64>, batch: usize) -> Tensor {
        let x = g.input(input);
        match self.ids.act {
            ActIds::Patch {
                embed_w,
                embed_b,
                pos,
                q,
                k,
                v,
                o,
                out_w,
                out_b,
            } => {
                let tokens = self.config.patch_grid * self.config.patch_grid;
                let t = self.config.token_dim;
                let h = self.linear(g, x, embed_w, embed_b);
                let pos = g.param(&self.params, pos);
                let h = g.add_tiled(h, pos);
                let (wq, wk, wv, wo) = (
                    g.param(&self.params, q),
                    g.param(&self.params, k),
                    g.param(&self.params, v),
                    g.param(&self.params, o),
                );
                let (qq, kk, vv) = (g.matmul(h, wq), g.matmul(h, wk), g.matmul(h, wv));
                let a = g.attention(qq, kk, vv, tokens, self.config.action_attention_heads);
                let a = g.matmul(a, wo);
                let h = g.add(h, a);
                let h = g.relu(h);
                let flat = g.reshape(h, batch, tokens * t);
                self.linear(g, flat, out_w, out_b)
            }
            ActIds::Conv {
                conv_w,
                conv_b,
                out_w,
                out_b,
            } => {
                let h = self.linear(g, x, conv_w, conv_b);
                let h = g.relu(h);
                let cols = g.value(h).len() / batch;
                let flat = g.reshape(h, batch, cols);
                self.linear(g, flat, out_w, out_b)
            }
        }
    }

    /// `B x D` interaction embeddings from [`Self::interaction_input`] rows.
    pub fn interaction_forward(&self, g: &mut Graph, input: Array2<f64>, batch: usize) -> Tensor {
        let x = g.input(input);
        let h = self.linear(g, x, self.ids.int_conv_w, self.ids.int_conv_b);
        let h = g.relu(h);
        let cols = self.config.interaction_positions() * self.config.conv_channels;
        let flat = g.reshape(h, batch, cols);
        self.linear(g, flat, self.ids.int_out_w, self.ids.int_out_b)
    }

    /// Attention over each sample's `[z_int; z_a; z_b]` stack. Returns the
    /// `3B x D` fused rows and the `B x 3D` flattened view.
    pub fn fusion_forward(&self, g: &mut Graph, z_int: Tensor, z_a: Tensor, z_b: Tensor) -> (Tensor, Tensor) {
        let b = g.value(z_int).nrows();
        let d = self.config.d;
        let all = g.concat_rows(&[z_int, z_a, z_b]);
        let order: Vec<usize> = (0..b).flat_map(|i| [i, b + i, 2 * b + i]).collect();
        let stack = g.gather_rows(all, &order);
        let (wq, wk, wv, wo) = (
            g.param(&self.params, self.ids.fuse_q),
            g.param(&self.params, self.ids.fuse_k),
            g.param(&self.params, self.ids.fuse_v),
            g.param(&self.params, self.ids.fuse_o),
        );
        let (q, k, v) = (g.matmul(stack, wq), g.matmul(stack, wk), g.matmul(stack, wv));
        let a = g.attention(q, k, v, 3, self.config.n_attention_heads);
        let out = g.matmul(a, wo);
        let flat = g.reshape(out, b, 3 * d);
        (out, flat)
    }

    pub fn interaction_head(&self, g: &mut Graph, z_flat: Tensor) -> Tensor {
        self.linear(g, z_flat, self.ids.head_int_w, self.ids.head_int_b)
    }

    pub fn action_head(&self, g: &mut Graph, z: Tensor) -> Tensor {
        self.linear(g, z, self.ids.head_act_w, self.ids.head_act_b)
    }

    pub fn encode_actions(&self, images: &[&Image]) -> Result<Array2<f64>> {
        if images.is_empty() {
            return Ok(Array2::zeros((0, self.d())));
        }
        let mut g = Graph::new();
        let input = self.action_input(images)?;
        let z = self.action_forward(&mut g, input, images.len());
        Ok(g.value(z).clone())
    }

    pub fn encode_interactions(&self, images: &[&Image]) -> Result<Array2<f64>> {
        if images.is_empty() {
            return Ok(Array2::zeros((0, self.d())));
        }
        let mut g = Graph::new();
        let input = self.interaction_input(images)?;
        let z = self.interaction_forward(&mut g, input, images.len());
        Ok(g.value(z).clone())
    }

    pub fn encode_action(&self, image: &Image) -> Result<Embedding> {
        Ok(Embedding {
            values: self.encode_actions(&[image])?.row(0).to_vec(),
        })
    }

    pub fn encode_interaction(&self, image: &Image) -> Result<Embedding> {
        Ok(Embedding {
            values: self.encode_interactions(&[image])?.row(0).to_vec(),
        })
    }

    fn check_dim(&self, z: &Embedding) -> Result<()> {
        if z.dim() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: z.dim(),
            });
        }
        Ok(())
    }

    pub fn fuse(&self, z_int: &Embedding, z_act1: &Embedding, z_act2: &Embedding) -> Result<FusionState> {
        for z in [z_int, z_act1, z_act2] {
            self.check_dim(z)?;
        }
        let row = |z: &Embedding| Array2::from_shape_vec((1, z.dim()), z.values.clone()).expect("1 x D");
        let mut g = Graph::new();
        let (a, b, c) = (g.input(row(z_int)), g.input(row(z_act1)), g.input(row(z_act2)));
        let z_in = ndarray::concatenate(Axis(0), &[g.value(a).view(), g.value(b).view(), g.value(c).view()])
            .expect("same width");
        let (out, flat) = self.fusion_forward(&mut g, a, b, c);
        Ok(FusionState {
            z_in,
            z_out: g.value(out).clone(),
            z_flat: g.value(flat).row(0).to_vec(),
        })
    }

    pub fn classify_interaction(&self, state: &FusionState) -> Result<Logits> {
        if state.z_flat.len() != 3 * self.d() {
            return Err(Error::DimensionMismatch {
                expected: 3 * self.d(),
                got: state.z_flat.len(),
            });
        }
        let mut g = Graph::new();
        let x = g.input(Array2::from_shape_vec((1, 3 * self.d()), state.z_flat.clone()).expect("1 x 3D"));
        let p = self.interaction_head(&mut g, x);
        Ok(Logits {
            values: g.value(p).row(0).to_vec(),
            class_order: InteractionClass::NAMES,
        })
    }

    pub fn classify_action(&self, z: &Embedding) -> Result<Logits> {
        self.check_dim(z)?;
        let mut g = Graph::new();
        let x = g.input(Array2::from_shape_vec((1, z.dim()), z.values.clone()).expect("1 x D"));
        let p = self.action_head(&mut g, x);
        Ok(Logits {
            values: g.value(p).row(0).to_vec(),
            class_order: ActionClass::NAMES,
        })
    }

    /// Full pair pipeline on whole-image inputs: split crops, encode, fuse,
    /// classify. Returns `B x 4` logits.
    pub fn interaction_logits(&self, samples: &[InteractionSample]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((0, NUM_CLASSES));
        for chunk in samples.chunks(64) {
            let mut crops_a = Vec::with_capacity(chunk.len());
            let mut crops_b = Vec::with_capacity(chunk.len());
            for s in chunk {
                let (a, b) = split_interaction_crop(s)?;
                crops_a.push(a.image);
                crops_b.push(b.image);
            }
            let unions: Vec<&Image> = chunk.iter().map(|s| &s.union_image).collect();
            let logits = self.pair_logits(&unions, &crops_a.iter().collect::<Vec<_>>(), &crops_b.iter().collect::<Vec<_>>())?;
            out.append(Axis(0), logits.view()).expect("same width");
        }
        Ok(out)
    }

    /// Logits for pairs given their union images and member crops.
    pub fn pair_logits(&self, unions: &[&Image], crops_a: &[&Image], crops_b: &[&Image]) -> Result<Array2<f64>> {
        let b = unions.len();
        if b == 0 {
            return Ok(Array2::zeros((0, NUM_CLASSES)));
        }
        let mut g = Graph::new();
        let zi = self.interaction_forward(&mut g, self.interaction_input(unions)?, b);
        let members: Vec<&Image> = crops_a.iter().chain(crops_b.iter()).copied().collect();
        let za = self.action_forward(&mut g, self.action_input(&members)?, 2 * b);
        let (a_rows, b_rows): (Vec<usize>, Vec<usize>) = ((0..b).collect(), (b..2 * b).collect());
        let z1 = g.gather_rows(za, &a_rows);
        let z2 = g.gather_rows(za, &b_rows);
        let (_, flat) = self.fusion_forward(&mut g, zi, z1, z2);
        let p = self.interaction_head(&mut g, flat);
        Ok(g.value(p).clone())
    }

    /// `B x 4` action-head logits for crops.
    pub fn action_logits(&self, images: &[&Image]) -> Result<Array2<f64>> {
        if images.is_empty() {
            return Ok(Array2::zeros((0, NUM_CLASSES)));
        }
        let mut g = Graph::new();
        let z = self.action_forward(&mut g, self.action_input(images)?, images.len());
        let p = self.action_head(&mut g, z);
        Ok(g.value(p).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::round_f32;
    use rand::Rng;

    pub(crate) fn small_config() -> EncoderConfig {
        EncoderConfig {
            input_size: 32,
            interaction_input_size: 48,
            d: 16,
            n_attention_heads: 4,
            patch_grid: 4,
            token_dim: 8,
            conv_kernel: 32,
            conv_stride: 8,
            conv_channels: 4,
            seed: 3,
            ..EncoderConfig::default()
        }
    }

    fn noise_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w * 3).map(|_| rng.random::<f32>()).collect();
        Image::from_raw(h, w, data).unwrap()
    }

    fn random_embedding(d: usize, rng: &mut ChaCha8Rng) -> Embedding {
        Embedding {
            values: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn default_shapes() {
        let m = CattleActModel::new(EncoderConfig::default(), Normalization::default()).unwrap();
        let img = noise_image(60, 80, 1);
        assert_eq!(m.encode_action(&img).unwrap().dim(), 256);
        assert_eq!(m.encode_interaction(&img).unwrap().dim(), 256);
        assert!(m.config.interaction_receptive_field() >= 32);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z: Vec<Embedding> = (0..3).map(|_| random_embedding(256, &mut rng)).collect();
        let f = m.fuse(&z[0], &z[1], &z[2]).unwrap();
        assert_eq!(f.z_out.dim(), (3, 256));
        assert_eq!(f.z_flat.len(), 768);
    }

    #[test]
    fn conv_action_backbone_shapes() {
        let cfg = EncoderConfig {
            action_backbone: ActionBackbone::Conv,
            ..small_config()
        };
        let m = CattleActModel::new(cfg, Normalization::default()).unwrap();
        assert_eq!(m.encode_action(&noise_image(20, 30, 2)).unwrap().dim(), 16);
    }

    #[test]
    fn inference_is_deterministic() {
        let m = CattleActModel::new(small_config(), Normalization::default()).unwrap();
        let img = noise_image(40, 50, 5);
        assert_eq!(m.encode_action(&img).unwrap(), m.encode_action(&img).unwrap());
        assert_eq!(m.encode_interaction(&img).unwrap(), m.encode_interaction(&img).unwrap());
        let empty = Image::new(0, 0);
        assert!(matches!(m.encode_action(&empty), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn identical_rows_fuse_to_identical_rows() {
        let m = CattleActModel::new(small_config(), Normalization::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = random_embedding(16, &mut rng);
        let f = m.fuse(&z, &z, &z).unwrap();
        for r in 1..3 {
            assert_eq!(f.z_out.row(r), f.z_out.row(0));
        }
    }

    #[test]
    fn swapping_member_rows_permutes_outputs() {
        let m = CattleActModel::new(small_config(), Normalization::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let z: Vec<Embedding> = (0..3).map(|_| random_embedding(16, &mut rng)).collect();
            let f = m.fuse(&z[0], &z[1], &z[2]).unwrap();
            let s = m.fuse(&z[0], &z[2], &z[1]).unwrap();
            assert_eq!(f.z_out.row(0), s.z_out.row(0));
            assert_eq!(f.z_out.row(1), s.z_out.row(2));
            assert_eq!(f.z_out.row(2), s.z_out.row(1));
        }
    }

    #[test]
    fn heads_with_zero_weights_give_zero_logits() {
        let mut m = CattleActModel::new(small_config(), Normalization::default()).unwrap();
        for name in ["head.int_w", "head.act_w"] {
            let id = m.params.find(name).unwrap();
            let shape = m.params.value(id).raw_dim();
            m.params.set(id, Array2::zeros(shape));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z: Vec<Embedding> = (0..3).map(|_| random_embedding(16, &mut rng)).collect();
        let f = m.fuse(&z[0], &z[1], &z[2]).unwrap();
        assert_eq!(m.classify_interaction(&f).unwrap().values, vec![0.0; 4]);
        assert_eq!(m.classify_action(&z[0]).unwrap().values, vec![0.0; 4]);
        assert!(matches!(
            m.classify_action(&Embedding { values: vec![0.0; 3] }),
            Err(Error::DimensionMismatch { expected: 16, got: 3 })
        ));
    }

    #[test]
    fn batched_pair_logits_match_single_calls() {
        let m = CattleActModel::new(small_config(), Normalization::default()).unwrap();
        let u: Vec<Image> = (0..3).map(|k| noise_image(50, 70, k)).collect();
        let a: Vec<Image> = (0..3).map(|k| noise_image(30, 30, 10 + k)).collect();
        let b: Vec<Image> = (0..3).map(|k| noise_image(30, 40, 20 + k)).collect();
        let batch = m.pair_logits(&u.iter().collect::<Vec<_>>(), &a.iter().collect::<Vec<_>>(), &b.iter().collect::<Vec<_>>()).unwrap();
        for k in 0..3 {
            let f = m
                .fuse(
                    &m.encode_interaction(&u[k]).unwrap(),
                    &m.encode_action(&a[k]).unwrap(),
                    &m.encode_action(&b[k]).unwrap(),
                )
                .unwrap();
            let single = m.classify_interaction(&f).unwrap();
            for c in 0..4 {
                assert!((batch[[k, c]] - single.values[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn parameters_are_f32_exact() {
        let m = CattleActModel::new(small_config(), Normalization::default()).unwrap();
        for (_, _, v) in m.params.iter() {
            assert!(v.iter().all(|x| *x == round_f32(*x)));
        }
    }
}

//! The scoring network.
//!
//! Sequence streams (question–response, syntax, delivery) pass through a
//! same-padded 1-D convolution and a stack of post-norm self-attention
//! layers. Fixed streams (exemplar and image similarities, grammar) are
//! projected to the hidden size and treated as length-1 sequences. Streams
//! are grouped into aspects:
//!
//! - content: `[question–response; exemplar; image]`
//! - language use: `[syntax; grammar]`
//! - delivery: `[delivery]`
//!
//! Each configured cross-aspect pair attends from its target aspect to its
//! source aspect. The fused sequence is the concatenation of every pair's
//! output followed by the aspects that are not the target of any pair. One
//! more self-attention layer runs over the fused sequence, which is then
//! mean-pooled and scored by a residual head.

pub mod optim;
pub mod tape;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};
pub use optim::{AdamW, AdamWConfig};
pub use tape::{Grads, ParamId, ParamStore, Tape, Var};

pub const N_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Content,
    LanguageUse,
    Delivery,
}

impl Aspect {
    pub const ALL: [Aspect; 3] = [Aspect::Content, Aspect::LanguageUse, Aspect::Delivery];

    pub fn as_str(self) -> &'static str {
        match self {
            Aspect::Content => "content",
            Aspect::LanguageUse => "language_use",
            Aspect::Delivery => "delivery",
        }
    }
}

/// Queries come from `target`, keys and values from `source`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossPair {
    pub source: Aspect,
    pub target: Aspect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub ffn_dim: usize,
    pub conv_kernel: usize,
    pub qr_dim: usize,
    pub syntax_dim: usize,
    pub delivery_dim: usize,
    pub er_dim: usize,
    pub ir_dim: usize,
    pub grammar_dim: usize,
    pub cross_pairs: Vec<CrossPair>,
    pub head: HeadKind,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 256,
            n_heads: 4,
            n_encoder_layers: 3,
            ffn_dim: 512,
            conv_kernel: 3,
            qr_dim: crate::relevance::QR_DIM,
            syntax_dim: crate::syntax::SYNTAX_DIM,
            delivery_dim: crate::delivery::DELIVERY_DIM,
            er_dim: crate::corpus::MAX_QUESTIONS,
            ir_dim: crate::corpus::MAX_QUESTIONS,
            grammar_dim: crate::grammar::GRAMMAR_DIM,
            cross_pairs: vec![
                CrossPair {
                    source: Aspect::Delivery,
                    target: Aspect::Content,
                },
                CrossPair {
                    source: Aspect::LanguageUse,
                    target: Aspect::Content,
                },
            ],
            head: HeadKind::Classification,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// The small configuration used for gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            hidden_dim: 8,
            n_heads: 2,
            n_encoder_layers: 1,
            ffn_dim: 16,
            dropout: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AsaError::Config(m));
        if self.hidden_dim == 0 || self.n_heads == 0 || !self.hidden_dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "model.hidden_dim ({}) must be a positive multiple of model.n_heads ({})",
                self.hidden_dim, self.n_heads
            ));
        }
        if self.conv_kernel.is_multiple_of(2) {
            return bad("model.conv_kernel must be odd for same padding".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("model.dropout must be in [0, 1)".into());
        }
        for p in &self.cross_pairs {
            if p.source == p.target {
                return bad(format!("cross pair {} -> itself", p.source.as_str()));
            }
        }
        Ok(())
    }

    pub fn n_outputs(&self) -> usize {
        match self.head {
            HeadKind::Classification => N_CLASSES,
            HeadKind::Regression => 1,
        }
    }
}

/// A sequence whose first `len` rows are real and the rest padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub data: Array2<f64>,
    pub len: usize,
}

impl Stream {
    /// Wraps a sequence; an empty one becomes a single zero padding token
    /// that counts as real so attention always has a key.
    pub fn new(data: Array2<f64>) -> Self {
        if data.nrows() == 0 {
            let d = data.ncols();
            return Stream {
                data: Array2::zeros((1, d)),
                len: 1,
            };
        }
        let len = data.nrows();
        Stream { data, len }
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.data.nrows()).map(|i| i < self.len).collect()
    }

    /// Appends `extra` padding rows filled with `fill`.
    pub fn padded(&self, extra: usize, fill: f64) -> Self {
        let mut data = Array2::from_elem((self.data.nrows() + extra, self.data.ncols()), fill);
        data.slice_mut(ndarray::s![..self.data.nrows(), ..])
            .assign(&self.data);
        Stream { data, len: self.len }
    }
}

/// Model input for one response.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub qr: Stream,
    pub syntax: Stream,
    pub delivery: Stream,
    pub er: Vec<f64>,
    pub ir: Vec<f64>,
    pub grammar: Vec<f64>,
}

impl FeatureBundle {
    /// Checks every stream width against the configuration.
    pub fn check(&self, c: &ModelConfig) -> Result<()> {
        let seq = [
            ("question-response", &self.qr, c.qr_dim),
            ("syntax", &self.syntax, c.syntax_dim),
            ("delivery", &self.delivery, c.delivery_dim),
        ];
        for (name, s, d) in seq {
            if s.data.ncols() != d {
                return Err(AsaError::Shape(format!(
                    "{name} stream has width {}, expected {d}",
                    s.data.ncols()
                )));
            }
            if s.len == 0 || s.len > s.data.nrows() {
                return Err(AsaError::Shape(format!("{name} stream has no real positions")));
            }
        }
        let fixed = [
            ("exemplar-response", self.er.len(), c.er_dim),
            ("image-response", self.ir.len(), c.ir_dim),
            ("grammar", self.grammar.len(), c.grammar_dim),
        ];
        for (name, got, d) in fixed {
            if got != d {
                return Err(AsaError::Shape(format!(
                    "{name} vector has {got} values, expected {d}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    attn: Attention,
    ln1: Norm,
    ff1: Linear,
    ff2: Linear,
    ln2: Norm,
}

#[derive(Debug, Clone)]
struct StreamEncoder {
    conv: Linear,
    layers: Vec<Block>,
}

#[derive(Debug, Clone)]
struct Layout {
    qr: StreamEncoder,
    syntax: StreamEncoder,
    delivery: StreamEncoder,
    er: Linear,
    ir: Linear,
    grammar: Linear,
    cross: Vec<Block>,
    fusion: Block,
    head_ln: Norm,
    head_fc: Linear,
    head_out: Linear,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
    c: &'a ModelConfig,
}

impl Builder<'_> {
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| self.rng.random_range(-a..a));
        Linear {
            w: self.store.add(format!("{name}.w"), w),
            b: self.store.add(format!("{name}.b"), Array2::zeros((1, fan_out))),
        }
    }

    fn norm(&mut self, name: &str) -> Norm {
        let h = self.c.hidden_dim;
        Norm {
            g: self.store.add(format!("{name}.gamma"), Array2::ones((1, h))),
            b: self.store.add(format!("{name}.beta"), Array2::zeros((1, h))),
        }
    }

    fn block(&mut self, name: &str) -> Block {
        let (h, f) = (self.c.hidden_dim, self.c.ffn_dim);
        Block {
            attn: Attention {
                q: self.linear(&format!("{name}.attn.q"), h, h),
                k: self.linear(&format!("{name}.attn.k"), h, h),
                v: self.linear(&format!("{name}.attn.v"), h, h),
                o: self.linear(&format!("{name}.attn.o"), h, h),
            },
            ln1: self.norm(&format!("{name}.ln1")),
            ff1: self.linear(&format!("{name}.ffn1"), h, f),
            ff2: self.linear(&format!("{name}.ffn2"), f, h),
            ln2: self.norm(&format!("{name}.ln2")),
        }
    }

    fn stream(&mut self, name: &str, d: usize) -> StreamEncoder {
        let conv = self.linear(&format!("{name}.conv"), self.c.conv_kernel * d, self.c.hidden_dim);
        let layers = (0..self.c.n_encoder_layers)
            .map(|i| self.block(&format!("{name}.layer{i}")))
            .collect();
        StreamEncoder { conv, layers }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    layout: Layout,
}

struct Ctx<'t, 's, 'r> {
    tape: &'t mut Tape<'s>,
    c: &'t ModelConfig,
    dropout: Option<&'r mut ChaCha8Rng>,
}

impl Ctx<'_, '_, '_> {
    fn linear(&mut self, x: Var, l: Linear) -> Var {
        let w = self.tape.param(l.w);
        let b = self.tape.param(l.b);
        let h = self.tape.matmul(x, w);
        self.tape.add_bias(h, b)
    }

    fn norm(&mut self, x: Var, n: Norm) -> Var {
        let g = self.tape.param(n.g);
        let b = self.tape.param(n.b);
        self.tape.layer_norm(x, g, b)
    }

    fn drop(&mut self, x: Var) -> Var {
        let p = self.c.dropout;
        match self.dropout.as_deref_mut() {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask = self
                    .tape
                    .value(x)
                    .mapv(|_| if rng.random::<f64>() < p { 0.0 } else { keep });
                self.tape.mul_const(x, mask)
            }
            _ => x,
        }
    }

    fn attention(&mut self, q_in: Var, kv_in: Var, kv_mask: &[bool], a: Attention) -> Var {
        let q = self.linear(q_in, a.q);
        let k = self.linear(kv_in, a.k);
        let v = self.linear(kv_in, a.v);
        let dh = self.c.hidden_dim / self.c.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let heads: Vec<Var> = (0..self.c.n_heads)
            .map(|h| {
                let qh = self.tape.slice_cols(q, h * dh, dh);
                let kh = self.tape.slice_cols(k, h * dh, dh);
                let vh = self.tape.slice_cols(v, h * dh, dh);
                let scores = self.tape.matmul_nt(qh, kh);
                let scores = self.tape.scale(scores, scale);
                let p = self.tape.softmax(scores, Some(kv_mask));
                self.tape.matmul(p, vh)
            })
            .collect();
        let cat = self.tape.concat_cols(&heads);
        self.linear(cat, a.o)
    }

    /// Post-norm transformer block; self-attention when `kv` is `x`.
    fn block(&mut self, x: Var, kv: Var, kv_mask: &[bool], b: Block) -> Var {
        let a = self.attention(x, kv, kv_mask, b.attn);
        let a = self.drop(a);
        let x = self.tape.add(x, a);
        let x = self.norm(x, b.ln1);
        let f = self.linear(x, b.ff1);
        let f = self.tape.gelu(f);
        let f = self.linear(f, b.ff2);
        let f = self.drop(f);
        let x = self.tape.add(x, f);
        self.norm(x, b.ln2)
    }

    fn stream(&mut self, name: &str, s: &Stream, enc: &StreamEncoder) -> Var {
        self.tape.set_scope(&format!("{name}.conv"));
        let mut data = s.data.clone();
        data.slice_mut(ndarray::s![s.len.., ..]).fill(0.0);
        let x = self.tape.leaf(data);
        let u = self.tape.unfold(x, self.c.conv_kernel);
        let mut h = self.linear(u, enc.conv);
        let mask = s.mask();
        for (i, b) in enc.layers.iter().enumerate() {
            self.tape.set_scope(&format!("{name}.layer{i}"));
            h = self.block(h, h, &mask, *b);
        }
        h
    }

    fn fixed(&mut self, name: &str, v: &[f64], l: Linear) -> Var {
        self.tape.set_scope(name);
        let x = self
            .tape
            .leaf(Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap());
        self.linear(x, l)
    }
}

impl Model {
    /// Xavier-uniform weights from the configured seed, zero biases, unit
    /// norm scales.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let layout = {
            let mut b = Builder {
                store: &mut store,
                rng: ChaCha8Rng::seed_from_u64(config.seed),
                c: &config,
            };
            let h = config.hidden_dim;
            Layout {
                qr: b.stream("qr", config.qr_dim),
                syntax: b.stream("syntax", config.syntax_dim),
                delivery: b.stream("delivery", config.delivery_dim),
                er: b.linear("er", config.er_dim, h),
                ir: b.linear("ir", config.ir_dim, h),
                grammar: b.linear("grammar", config.grammar_dim, h),
                cross: (0..config.cross_pairs.len())
                    .map(|i| b.block(&format!("cross{i}")))
                    .collect(),
                fusion: b.block("fusion"),
                head_ln: b.norm("head.ln"),
                head_fc: b.linear("head.fc", h, h),
                head_out: b.linear("head.out", h, config.n_outputs()),
            }
        };
        Ok(Model {
            config,
            params: store,
            layout,
        })
    }

    /// Rebuilds a model and installs saved parameter values by name.
    pub fn from_params(config: ModelConfig, named: Vec<(String, Array2<f64>)>) -> Result<Self> {
        let mut m = Model::new(config)?;
        if named.len() != m.params.len() {
            return Err(AsaError::Compatibility(format!(
                "checkpoint holds {} parameters, model expects {}",
                named.len(),
                m.params.len()
            )));
        }
        for (id, (name, value)) in named.into_iter().enumerate() {
            if m.params.name(id) != name || m.params.get(id).dim() != value.dim() {
                return Err(AsaError::Compatibility(format!(
                    "parameter {id} is {name} {:?}, model expects {} {:?}",
                    value.dim(),
                    m.params.name(id),
                    m.params.get(id).dim()
                )));
            }
            *m.params.get_mut(id) = value;
        }
        Ok(m)
    }

    /// Records the forward pass and returns the 1×outputs head result.
    /// `dropout` is `Some` only in training.
    pub fn forward_on<'s>(
        &'s self,
        tape: &mut Tape<'s>,
        x: &FeatureBundle,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        x.check(&self.config)?;
        let l = &self.layout;
        let mut ctx = Ctx {
            tape,
            c: &self.config,
            dropout,
        };
        let qr = ctx.stream("qr", &x.qr, &l.qr);
        let syn = ctx.stream("syntax", &x.syntax, &l.syntax);
        let del = ctx.stream("delivery", &x.delivery, &l.delivery);
        let er = ctx.fixed("er", &x.er, l.er);
        let ir = ctx.fixed("ir", &x.ir, l.ir);
        let gr = ctx.fixed("grammar", &x.grammar, l.grammar);

        let content = ctx.tape.concat_rows(&[qr, er, ir]);
        let mut content_mask = x.qr.mask();
        content_mask.extend([true, true]);
        let lang = ctx.tape.concat_rows(&[syn, gr]);
        let mut lang_mask = x.syntax.mask();
        lang_mask.push(true);
        let aspect = |a: Aspect| -> (Var, Vec<bool>) {
            match a {
                Aspect::Content => (content, content_mask.clone()),
                Aspect::LanguageUse => (lang, lang_mask.clone()),
                Aspect::Delivery => (del, x.delivery.mask()),
            }
        };

        let mut fused = Vec::new();
        let mut fused_mask = Vec::new();
        for (i, (pair, block)) in self.config.cross_pairs.iter().zip(&l.cross).enumerate() {
            ctx.tape.set_scope(&format!("cross{i}"));
            let (t, tm) = aspect(pair.target);
            let (s, sm) = aspect(pair.source);
            fused.push(ctx.block(t, s, &sm, *block));
            fused_mask.extend(tm);
        }
        for a in Aspect::ALL {
            if !self.config.cross_pairs.iter().any(|p| p.target == a) {
                let (v, m) = aspect(a);
                fused.push(v);
                fused_mask.extend(m);
            }
        }
        ctx.tape.set_scope("fusion");
        let f = ctx.tape.concat_rows(&fused);
        let f = ctx.block(f, f, &fused_mask, l.fusion);
        let pooled = ctx.tape.mean_rows(f, &fused_mask);

        ctx.tape.set_scope("head");
        let n = ctx.norm(pooled, l.head_ln);
        let r = ctx.linear(n, l.head_fc);
        let r = ctx.tape.gelu(r);
        let h = ctx.tape.add(pooled, r);
        let out = ctx.linear(h, l.head_out);
        if ctx.tape.value(out).iter().any(|v| !v.is_finite()) {
            let layer = ctx.tape.first_non_finite().unwrap_or("head").to_string();
            return Err(AsaError::Numeric {
                layer,
                message: "non-finite activation".into(),
            });
        }
        Ok(out)
    }

    /// Head outputs in evaluation mode.
    pub fn forward(&self, x: &FeatureBundle) -> Result<Array1<f64>> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward_on(&mut tape, x, None)?;
        Ok(tape.value(out).row(0).to_owned())
    }

    pub fn predict(&self, x: &FeatureBundle) -> Result<ScorePrediction> {
        let out = self.forward(x)?;
        Ok(ScorePrediction::from_outputs(self.config.head, out))
    }

    /// Loss and parameter gradients for one example with gold score 1..=5.
    pub fn loss_and_grads(
        &self,
        x: &FeatureBundle,
        score: u8,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Grads)> {
        if !(1..=5).contains(&score) {
            return Err(AsaError::Input(format!("score {score} is outside 1..=5")));
        }
        let mut tape = Tape::new(&self.params);
        let out = self.forward_on(&mut tape, x, dropout)?;
        let loss = match self.config.head {
            HeadKind::Classification => tape.cross_entropy(out, score as usize - 1),
            HeadKind::Regression => tape.squared_error(out, score as f64),
        };
        let value = tape.value(loss)[[0, 0]];
        if !value.is_finite() {
            return Err(AsaError::Numeric {
                layer: "loss".into(),
                message: format!("loss is {value}"),
            });
        }
        Ok((value, tape.backward(loss)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePrediction {
    /// Class logits for classification, a single value for regression.
    pub outputs: Vec<f64>,
    pub score: u8,
}

impl ScorePrediction {
    pub fn from_outputs(head: HeadKind, out: Array1<f64>) -> Self {
        let score = match head {
            HeadKind::Classification => {
                let mut best = 0;
                for (i, &v) in out.iter().enumerate() {
                    if v > out[best] {
                        best = i;
                    }
                }
                best as u8 + 1
            }
            HeadKind::Regression => out[0].round().clamp(1.0, 5.0) as u8,
        };
        ScorePrediction {
            outputs: out.to_vec(),
            score,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn random_bundle(c: &ModelConfig, lens: (usize, usize, usize), seed: u64) -> FeatureBundle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r: usize, d: usize| Array2::from_shape_fn((r, d), |_| rng.random_range(-1.0..1.0));
        let qr = Stream::new(m(lens.0, c.qr_dim));
        let syntax = Stream::new(m(lens.1, c.syntax_dim));
        let delivery = Stream::new(m(lens.2, c.delivery_dim));
        let er = m(1, c.er_dim).into_raw_vec_and_offset().0;
        let ir = m(1, c.ir_dim).into_raw_vec_and_offset().0;
        let grammar = m(1, c.grammar_dim).into_raw_vec_and_offset().0;
        FeatureBundle {
            qr,
            syntax,
            delivery,
            er,
            ir,
            grammar,
        }
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let c = ModelConfig {
            hidden_dim: 16,
            n_heads: 4,
            n_encoder_layers: 1,
            ffn_dim: 32,
            ..Default::default()
        };
        let m = Model::new(c.clone()).unwrap();
        let x = random_bundle(&c, (5, 7, 3), 1);
        let a = m.forward(&x).unwrap();
        assert_eq!(a.len(), N_CLASSES);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, m.forward(&x).unwrap());
        let p = m.predict(&x).unwrap();
        assert!((1..=5).contains(&p.score));
        let again = Model::new(c).unwrap();
        assert_eq!(again.params, m.params);
    }

    #[test]
    fn default_parameter_shapes() {
        let m = Model::new(ModelConfig::default()).unwrap();
        let find = |n: &str| {
            let id = m.params.names().iter().position(|x| x == n).unwrap();
            m.params.get(id).dim()
        };
        assert_eq!(find("qr.conv.w"), (3 * 256, 256));
        assert_eq!(find("syntax.conv.w"), (3 * 247, 256));
        assert_eq!(find("delivery.conv.w"), (3 * 14, 256));
        assert_eq!(find("grammar.w"), (265, 256));
        assert_eq!(find("er.w"), (4, 256));
        assert_eq!(find("head.out.w"), (256, 5));
        assert!(m.params.names().iter().any(|n| n == "qr.layer2.ffn2.w"));
        assert!(!m.params.names().iter().any(|n| n == "qr.layer3.ffn2.w"));
    }

    #[test]
    fn config_validation() {
        let c = ModelConfig {
            hidden_dim: 10,
            n_heads: 4,
            ..Default::default()
        };
        assert!(matches!(Model::new(c), Err(AsaError::Config(_))));
        let c = ModelConfig {
            conv_kernel: 2,
            ..ModelConfig::tiny()
        };
        assert!(Model::new(c).is_err());
    }

    #[test]
    fn wrong_width_is_shape_error() {
        let c = ModelConfig::tiny();
        let m = Model::new(c.clone()).unwrap();
        let mut x = random_bundle(&c, (2, 2, 2), 3);
        x.grammar.pop();
        assert!(matches!(m.forward(&x), Err(AsaError::Shape(_))));
        let mut x = random_bundle(&c, (2, 2, 2), 3);
        x.delivery = Stream::new(Array2::zeros((2, 13)));
        assert!(matches!(m.forward(&x), Err(AsaError::Shape(_))));
    }

    #[test]
    fn padding_does_not_change_the_prediction() {
        let c = ModelConfig::tiny();
        let m = Model::new(c.clone()).unwrap();
        let x = random_bundle(&c, (4, 6, 3), 9);
        let base = m.forward(&x).unwrap();
        let mut p = x.clone();
        p.qr = x.qr.padded(5, 0.7);
        p.syntax = x.syntax.padded(2, -3.0);
        p.delivery = x.delivery.padded(7, 1.0);
        let padded = m.forward(&p).unwrap();
        for (a, b) in base.iter().zip(padded.iter()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn empty_sequences_become_a_padding_token() {
        let s = Stream::new(Array2::zeros((0, 14)));
        assert_eq!(s.data.dim(), (1, 14));
        assert_eq!(s.len, 1);
    }

    #[test]
    fn regression_head_scores_are_clamped() {
        let p = ScorePrediction::from_outputs(HeadKind::Regression, Array1::from(vec![7.2]));
        assert_eq!(p.score, 5);
        let p = ScorePrediction::from_outputs(HeadKind::Regression, Array1::from(vec![-1.0]));
        assert_eq!(p.score, 1);
        let c = ModelConfig {
            head: HeadKind::Regression,
            ..ModelConfig::tiny()
        };
        let m = Model::new(c.clone()).unwrap();
        assert_eq!(m.forward(&random_bundle(&c, (1, 1, 1), 0)).unwrap().len(), 1);
    }

    #[test]
    fn from_params_rejects_mismatched_names() {
        let m = Model::new(ModelConfig::tiny()).unwrap();
        let mut named: Vec<_> = m
            .params
            .names()
            .iter()
            .cloned()
            .zip(m.params.values().iter().cloned())
            .collect();
        assert!(Model::from_params(ModelConfig::tiny(), named.clone()).is_ok());
        named[0].0 = "bogus".into();
        assert!(matches!(
            Model::from_params(ModelConfig::tiny(), named),
            Err(AsaError::Compatibility(_))
        ));
    }
}

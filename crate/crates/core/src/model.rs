//! Parameter collections for the four networks (sentence encoder SE, recipe
//! RNN RE, sentence decoder SD, video encoder VE), the shared embedding
//! table, and the ingredient / fusion projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{LstmVars, Param, Scalar, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub ingredient_count: usize,
    /// Word embedding width, shared by encoder and decoder.
    pub embed_dim: usize,
    /// Hidden units per direction in SE and VE; also the SD hidden size.
    pub enc_hidden: usize,
    /// Width of the per-frame video features consumed by VE.
    pub feature_dim: usize,
}

impl ModelConfig {
    /// Paper-scale dimensions: 256-d embedding, 512 hidden per direction,
    /// 1024-d step representations.
    pub fn paper(vocab_size: usize, ingredient_count: usize, feature_dim: usize) -> Self {
        ModelConfig {
            vocab_size,
            ingredient_count,
            embed_dim: 256,
            enc_hidden: 512,
            feature_dim,
        }
    }

    /// Step representation width; the recipe RNN hidden size equals this so
    /// its state can stand in directly for the next step's representation.
    pub fn repr_dim(&self) -> usize {
        2 * self.enc_hidden
    }

    pub fn dec_hidden(&self) -> usize {
        self.enc_hidden
    }

    /// Decoder input: word embedding concatenated with the conditioning
    /// representation.
    pub fn dec_input(&self) -> usize {
        self.embed_dim + self.repr_dim()
    }
}

/// Which networks receive gradient updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// SE + RE + SD (+ embedding, ingredient projection) jointly.
    Text,
    /// Only VE; everything text-trained stays fixed.
    Video,
    /// VE plus the fusion projection; text parameters stay fixed.
    VideoText,
}

pub fn trainable_in(name: &str, stage: Stage) -> bool {
    let is_ve = name.starts_with("ve.");
    let is_fusion = name.starts_with("fusion.");
    match stage {
        Stage::Text => !is_ve && !is_fusion,
        Stage::Video => is_ve,
        Stage::VideoText => is_ve || is_fusion,
    }
}

#[derive(Clone, Debug)]
pub struct LstmParams<F> {
    pub w_ih: Param<F>,
    pub w_hh: Param<F>,
    pub bias: Param<F>,
}

#[derive(Clone, Debug)]
pub struct LinearParams<F> {
    pub w: Param<F>,
    pub b: Param<F>,
}

#[derive(Clone, Debug)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    /// `[vocab, embed]`, shared storage read by both SE and SD.
    pub embedding: Param<F>,
    pub se_fwd: LstmParams<F>,
    pub se_bwd: LstmParams<F>,
    pub ve_fwd: LstmParams<F>,
    pub ve_bwd: LstmParams<F>,
    pub re: LstmParams<F>,
    pub sd: LstmParams<F>,
    /// `[vocab, dec_hidden]` output projection.
    pub out: LinearParams<F>,
    /// `[repr, ingredient_count]` projection of the multi-hot vector to r0.
    pub ing: LinearParams<F>,
    /// `[repr, 2*repr]` video-text fusion.
    pub fusion: LinearParams<F>,
    /// Learned start representation used instead of f(I) in noING mode.
    pub no_ing_start: Param<F>,
}

fn uniform_matrix<F: Scalar>(
    rng: &mut ChaCha8Rng,
    name: &str,
    rows: usize,
    cols: usize,
    fan_in: usize,
) -> Param<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| F::from_wide(rng.random_range(-bound..bound)))
        .collect();
    Param::new(name, Tensor::new(vec![rows, cols], data).expect("shape"))
}

fn lstm_init<F: Scalar>(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    input: usize,
    hidden: usize,
) -> LstmParams<F> {
    let w_ih = uniform_matrix(rng, &format!("{prefix}.w_ih"), 4 * hidden, input, input);
    let w_hh = uniform_matrix(rng, &format!("{prefix}.w_hh"), 4 * hidden, hidden, hidden);
    // Forget-gate bias starts at 1, all other biases at 0.
    let mut bias = Tensor::zeros(&[4 * hidden]);
    for j in hidden..2 * hidden {
        bias.data_mut()[j] = F::one();
    }
    LstmParams {
        w_ih,
        w_hh,
        bias: Param::new(format!("{prefix}.bias"), bias),
    }
}

fn linear_init<F: Scalar>(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    out_dim: usize,
    in_dim: usize,
) -> LinearParams<F> {
    LinearParams {
        w: uniform_matrix(rng, &format!("{prefix}.w"), out_dim, in_dim, in_dim),
        b: Param::new(format!("{prefix}.b"), Tensor::zeros(&[out_dim])),
    }
}

impl<F: Scalar> ModelParams<F> {
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.enc_hidden;
        let d = config.repr_dim();
        let embedding = uniform_matrix(
            &mut rng,
            "embedding",
            config.vocab_size,
            config.embed_dim,
            config.embed_dim,
        );
        let se_fwd = lstm_init(&mut rng, "se.fwd", config.embed_dim, h);
        let se_bwd = lstm_init(&mut rng, "se.bwd", config.embed_dim, h);
        let ve_fwd = lstm_init(&mut rng, "ve.fwd", config.feature_dim, h);
        let ve_bwd = lstm_init(&mut rng, "ve.bwd", config.feature_dim, h);
        let re = lstm_init(&mut rng, "re", d, d);
        let sd = lstm_init(&mut rng, "sd", config.dec_input(), config.dec_hidden());
        let out = linear_init(&mut rng, "out", config.vocab_size, config.dec_hidden());
        let ing = linear_init(&mut rng, "ing", d, config.ingredient_count);
        let fusion = linear_init(&mut rng, "fusion", d, 2 * d);
        let no_ing_start = Param::new("start.no_ing", Tensor::zeros(&[d]));
        ModelParams {
            config,
            embedding,
            se_fwd,
            se_bwd,
            ve_fwd,
            ve_bwd,
            re,
            sd,
            out,
            ing,
            fusion,
            no_ing_start,
        }
    }

    /// All parameters in canonical (checkpoint) order.
    pub fn params(&self) -> Vec<&Param<F>> {
        let mut v: Vec<&Param<F>> = vec![&self.embedding];
        for lstm in [&self.se_fwd, &self.se_bwd, &self.ve_fwd, &self.ve_bwd, &self.re, &self.sd] {
            v.push(&lstm.w_ih);
            v.push(&lstm.w_hh);
            v.push(&lstm.bias);
        }
        for lin in [&self.out, &self.ing, &self.fusion] {
            v.push(&lin.w);
            v.push(&lin.b);
        }
        v.push(&self.no_ing_start);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v: Vec<&mut Param<F>> = vec![&mut self.embedding];
        for lstm in [
            &mut self.se_fwd,
            &mut self.se_bwd,
            &mut self.ve_fwd,
            &mut self.ve_bwd,
            &mut self.re,
            &mut self.sd,
        ] {
            v.push(&mut lstm.w_ih);
            v.push(&mut lstm.w_hh);
            v.push(&mut lstm.bias);
        }
        for lin in [&mut self.out, &mut self.ing, &mut self.fusion] {
            v.push(&mut lin.w);
            v.push(&mut lin.b);
        }
        v.push(&mut self.no_ing_start);
        v
    }

    pub fn trainable_mut(&mut self, stage: Stage) -> Vec<&mut Param<F>> {
        self.params_mut()
            .into_iter()
            .filter(|p| trainable_in(&p.name, stage))
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Register every parameter on a tape. `stage: None` binds everything as
    /// constants (inference); otherwise the stage decides which parameters
    /// carry gradients.
    pub fn bind(&self, tape: &mut Tape<F>, stage: Option<Stage>) -> BoundModel {
        let mut bind = |p: &Param<F>| {
            let trainable = stage.is_some_and(|s| trainable_in(&p.name, s));
            p.bind(tape, trainable)
        };
        let embedding = bind(&self.embedding);
        let lstm = |tape_bind: &mut dyn FnMut(&Param<F>) -> Var, l: &LstmParams<F>| LstmVars {
            w_ih: tape_bind(&l.w_ih),
            w_hh: tape_bind(&l.w_hh),
            bias: tape_bind(&l.bias),
        };
        let se_fwd = lstm(&mut bind, &self.se_fwd);
        let se_bwd = lstm(&mut bind, &self.se_bwd);
        let ve_fwd = lstm(&mut bind, &self.ve_fwd);
        let ve_bwd = lstm(&mut bind, &self.ve_bwd);
        let re = lstm(&mut bind, &self.re);
        let sd = lstm(&mut bind, &self.sd);
        let mut linear = |l: &LinearParams<F>| BoundLinear {
            w: bind(&l.w),
            b: bind(&l.b),
        };
        let out = linear(&self.out);
        let ing = linear(&self.ing);
        let fusion = linear(&self.fusion);
        let no_ing_start = bind(&self.no_ing_start);
        BoundModel {
            embedding,
            se_fwd,
            se_bwd,
            ve_fwd,
            ve_bwd,
            re,
            sd,
            out,
            ing,
            fusion,
            no_ing_start,
        }
    }

    /// Pull tape gradients back into the persistent buffers.
    pub fn accumulate_grads(&mut self, tape: &Tape<F>, bound: &BoundModel) {
        let vars = bound.vars();
        for (p, var) in self.params_mut().into_iter().zip(vars) {
            p.accumulate_from(tape, var);
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub w: Var,
    pub b: Var,
}

/// Tape handles for every parameter, in the same canonical order as
/// [`ModelParams::params`].
#[derive(Clone, Copy, Debug)]
pub struct BoundModel {
    pub embedding: Var,
    pub se_fwd: LstmVars,
    pub se_bwd: LstmVars,
    pub ve_fwd: LstmVars,
    pub ve_bwd: LstmVars,
    pub re: LstmVars,
    pub sd: LstmVars,
    pub out: BoundLinear,
    pub ing: BoundLinear,
    pub fusion: BoundLinear,
    pub no_ing_start: Var,
}

impl BoundModel {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = vec![self.embedding];
        for lstm in [self.se_fwd, self.se_bwd, self.ve_fwd, self.ve_bwd, self.re, self.sd] {
            v.push(lstm.w_ih);
            v.push(lstm.w_hh);
            v.push(lstm.bias);
        }
        for lin in [self.out, self.ing, self.fusion] {
            v.push(lin.w);
            v.push(lin.b);
        }
        v.push(self.no_ing_start);
        v
    }
}

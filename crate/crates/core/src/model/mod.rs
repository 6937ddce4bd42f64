//! Four-stage MetaFormer backbones: blocks, assembly, accounting and
//! checkpoints.

mod checkpoint;
mod config;

pub use checkpoint::{
    load_checkpoint, read_container, save_activations, save_checkpoint, write_container, Record, CONTAINER_VERSION,
};
pub use config::{Family, MixerKind, ModelConfig, Size, StageConfig};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{ops, Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{ActKind, Activation, ChannelMlp, Downsample, LayerNorm, Linear, ResScale};
use crate::mixers::{fft_macs, Attention, DynamicFilter, GlobalFilter, Mixer, SepConv};
use crate::param::{Builder, ParamStore};
use crate::tensor::Real;

/// Token-mixer residual followed by a channel-MLP residual:
/// `X ← r₁(X) + mixer(LN(X))`, `X ← r₂(X) + mlp(LN(X))`, where `r` is the
/// optional per-channel shortcut scale.
#[derive(Clone, Debug)]
pub struct Block {
    pub norm1: LayerNorm,
    pub mixer: Mixer,
    pub res_scale1: Option<ResScale>,
    pub norm2: LayerNorm,
    pub mlp: ChannelMlp,
    pub res_scale2: Option<ResScale>,
    pub drop_rate: Real,
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub down: Downsample,
    pub blocks: Vec<Block>,
    pub extent: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct Head {
    pub norm: LayerNorm,
    pub fc1: Linear,
    pub act: Activation,
    pub fc2: Linear,
}

/// Layer structure without parameter storage.
#[derive(Clone, Debug)]
pub struct Network {
    pub stages: Vec<Stage>,
    pub head: Head,
}

/// Per-call forward options.
#[derive(Default)]
pub struct Forward<'a> {
    /// Enables stochastic depth when the config sets a nonzero rate.
    pub drop_path: Option<&'a mut ChaCha8Rng>,
}

pub struct Output {
    pub logits: Var,
    /// Downsampling outputs and every residual sub-block output, shallow
    /// to deep.
    pub taps: Vec<Var>,
}

fn mixer_for(
    b: &mut Builder,
    cfg: &ModelConfig,
    name: &str,
    stage: &StageConfig,
    extent: (usize, usize),
) -> Result<Mixer> {
    let c = stage.width;
    Ok(match stage.mixer {
        MixerKind::DynamicFilter => Mixer::Dynamic(DynamicFilter::new(
            b,
            name,
            c,
            extent.0,
            extent.1,
            cfg.num_filters,
            cfg.routeing_ratio,
            cfg.act,
        )?),
        MixerKind::GlobalFilter => Mixer::Global(GlobalFilter::new(b, name, c, extent.0, extent.1, cfg.act)?),
        MixerKind::SepConv => Mixer::SepConv(SepConv::new(b, name, c, cfg.sepconv_kernel, cfg.act)?),
        MixerKind::Attention => Mixer::Attention(Attention::new(b, name, c, c / c.min(32))?),
    })
}

impl Network {
    pub fn build(cfg: &ModelConfig, b: &mut Builder) -> Result<Self> {
        cfg.validate()?;
        let extents = cfg.stage_extents()?;
        let total = cfg.total_depth();
        let mut k = 0;
        let mut c_prev = cfg.in_channels;
        let mut stages = Vec::with_capacity(4);
        for (i, (s, &extent)) in cfg.stages.iter().zip(&extents).enumerate() {
            let down = Downsample::new(
                b,
                &format!("stages.{i}.down"),
                c_prev,
                s.width,
                s.down_kernel,
                s.down_stride,
                s.down_pad,
                i == 0,
            )?;
            let mut blocks = Vec::with_capacity(s.depth);
            for j in 0..s.depth {
                let p = format!("stages.{i}.blocks.{j}");
                let rs = |b: &mut Builder, n: &str| -> Result<Option<ResScale>> {
                    s.res_scale.then(|| ResScale::new(b, &format!("{p}.{n}"), s.width)).transpose()
                };
                let drop_rate = if total > 1 { cfg.drop_path * k as Real / (total - 1) as Real } else { 0.0 };
                blocks.push(Block {
                    norm1: LayerNorm::new(b, &format!("{p}.norm1"), s.width)?,
                    mixer: mixer_for(b, cfg, &format!("{p}.mixer"), s, extent)?,
                    res_scale1: rs(b, "res_scale1")?,
                    norm2: LayerNorm::new(b, &format!("{p}.norm2"), s.width)?,
                    mlp: ChannelMlp::new(b, &format!("{p}.mlp"), s.width, cfg.mlp_ratio * s.width, cfg.act)?,
                    res_scale2: rs(b, "res_scale2")?,
                    drop_rate,
                });
                k += 1;
            }
            stages.push(Stage { down, blocks, extent });
            c_prev = s.width;
        }
        let hidden = cfg.head_ratio * c_prev;
        let head = Head {
            norm: LayerNorm::new(b, "head.norm", c_prev)?,
            fc1: Linear::new(b, "head.fc1", c_prev, hidden, true)?,
            act: Activation::new(b, "head.act", ActKind::SquaredRelu)?,
            fc2: Linear::new(b, "head.fc2", hidden, cfg.num_classes, true)?,
        };
        Ok(Network { stages, head })
    }

    /// Analytic multiply-accumulate count for one image.
    pub fn macs(&self) -> MacReport {
        let mut report = MacReport::default();
        for st in &self.stages {
            let (h, w) = st.extent;
            let hw = h * w;
            let d = &st.down;
            let mut stage = (hw * d.kernel * d.kernel * d.c_in * d.c_out) as f64;
            for blk in &st.blocks {
                stage += blk.mixer.macs(h, w);
                stage += (blk.mlp.fc1.macs(hw) + blk.mlp.fc2.macs(hw)) as f64;
                if let Mixer::Dynamic(m) = &blk.mixer {
                    report.fft += 2.0 * fft_macs(h, w, m.pw1.c_out);
                }
                if let Mixer::Global(m) = &blk.mixer {
                    report.fft += 2.0 * fft_macs(h, w, m.pw1.c_out);
                }
            }
            report.stages.push(stage);
        }
        report.head = (self.head.fc1.macs(1) + self.head.fc2.macs(1)) as f64;
        report.total = report.stages.iter().sum::<f64>() + report.head;
        report
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MacReport {
    pub total: f64,
    pub stages: Vec<f64>,
    pub head: f64,
    /// Share of `total` charged to spectral transforms.
    pub fft: f64,
}

fn drop_path(tape: &mut Tape, x: Var, rate: Real, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var> {
    let Some(rng) = rng.as_deref_mut() else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let b = tape.shape(x)[0];
    let keep = 1.0 - rate;
    let factors = (0..b).map(|_| if rng.random::<f64>() < keep as f64 { 1.0 / keep } else { 0.0 }).collect();
    ops::scale_rows(tape, x, factors)
}

fn residual(tape: &mut Tape, store: &ParamStore, x: Var, branch: Var, scale: &Option<ResScale>) -> Result<Var> {
    let shortcut = match scale {
        Some(s) => s.forward(tape, store, x)?,
        None => x,
    };
    ops::add(tape, shortcut, branch)
}

/// One mixer sub-block and one channel-MLP sub-block. Returns both residual
/// outputs.
pub fn block_forward(
    tape: &mut Tape,
    store: &ParamStore,
    x: Var,
    block: &Block,
    opts: &mut Forward,
) -> Result<(Var, Var)> {
    let h = block.norm1.forward(tape, store, x)?;
    let h = block.mixer.forward(tape, store, h)?;
    let h = drop_path(tape, h, block.drop_rate, &mut opts.drop_path)?;
    let x1 = residual(tape, store, x, h, &block.res_scale1)?;
    let h = block.norm2.forward(tape, store, x1)?;
    let h = block.mlp.forward(tape, store, h)?;
    let h = drop_path(tape, h, block.drop_rate, &mut opts.drop_path)?;
    let x2 = residual(tape, store, x1, h, &block.res_scale2)?;
    Ok((x1, x2))
}

/// A built backbone and its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub net: Network,
    pub store: ParamStore,
}

/// Builds a model, drawing initial values from `seed`.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    let mut b = Builder::new(seed);
    let net = Network::build(cfg, &mut b)?;
    Ok(Model { cfg: cfg.clone(), net, store: b.finish() })
}

/// Parameter count of a built model; complex entries count twice.
pub fn count_params(model: &Model) -> usize {
    model.store.count()
}

/// Parameter count derived from the configuration alone, without
/// allocating any weights.
pub fn count_params_for(cfg: &ModelConfig) -> Result<usize> {
    let mut b = Builder::counting();
    Network::build(cfg, &mut b)?;
    Ok(b.element_count())
}

/// Multiply-accumulates for one `resolution × resolution` image.
pub fn count_flops(cfg: &ModelConfig, resolution: usize) -> Result<MacReport> {
    let cfg = cfg.clone().with_input(resolution, resolution);
    let mut b = Builder::counting();
    Ok(Network::build(&cfg, &mut b)?.macs())
}

impl Model {
    pub fn forward(&self, tape: &mut Tape, x: Var, opts: &mut Forward) -> Result<Output> {
        let [_, h, w, c] = tape.value(x).dims4("model input")?;
        if (h, w) != self.cfg.input || c != self.cfg.in_channels {
            return Err(Error::shape(
                "model input",
                tape.shape(x),
                &[self.cfg.input.0, self.cfg.input.1, self.cfg.in_channels],
            ));
        }
        let store = &self.store;
        let mut taps = Vec::new();
        let mut x = x;
        for st in &self.net.stages {
            x = st.down.forward(tape, store, x)?;
            taps.push(x);
            for blk in &st.blocks {
                let (a, b) = block_forward(tape, store, x, blk, opts)?;
                taps.push(a);
                taps.push(b);
                x = b;
            }
        }
        let head = &self.net.head;
        let pooled = ops::mean_hw(tape, x)?;
        let h = head.norm.forward(tape, store, pooled)?;
        let h = head.fc1.forward(tape, store, h)?;
        let h = head.act.forward(tape, store, h)?;
        let logits = head.fc2.forward(tape, store, h)?;
        Ok(Output { logits, taps })
    }

    /// Spectral filter parameters with the extents they are bound to.
    pub fn spectral_params(&self) -> Vec<(crate::param::ParamId, (usize, usize))> {
        self.net
            .stages
            .iter()
            .flat_map(|st| st.blocks.iter().filter_map(move |b| b.mixer.spectral_param().map(|id| (id, st.extent))))
            .collect()
    }
}

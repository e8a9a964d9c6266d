use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use nalgebra::Vector3;

use super::weights::{Tensor, WeightsFile};
use super::{Observation, OBS_DIM};
use crate::error::PolicyError;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Relu,
    Tanh,
}

impl Activation {
    fn parse(s: &str) -> Result<Self, PolicyError> {
        match s {
            "elu" => Ok(Activation::Elu),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(PolicyError::Format(format!("unknown activation `{other}`"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Dense layer `y = W x + b`, `W` stored row-major `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
struct Linear {
    w: Vec<f64>,
    b: Vec<f64>,
    inputs: usize,
    outputs: usize,
}

impl Linear {
    fn load(file: &WeightsFile, prefix: &str) -> Result<Self, PolicyError> {
        let missing = |n: &str| PolicyError::WeightShapeMismatch(format!("missing tensor `{n}`"));
        let wn = format!("{prefix}.weight");
        let bn = format!("{prefix}.bias");
        let w = file.get(&wn).ok_or_else(|| missing(&wn))?;
        let b = file.get(&bn).ok_or_else(|| missing(&bn))?;
        if w.shape.len() != 2 || b.shape.len() != 1 || b.shape[0] != w.shape[0] {
            return Err(PolicyError::WeightShapeMismatch(format!(
                "`{prefix}`: weight {:?} and bias {:?} disagree",
                w.shape, b.shape
            )));
        }
        Ok(Linear {
            w: w.data.iter().map(|&v| v as f64).collect(),
            b: b.data.iter().map(|&v| v as f64).collect(),
            inputs: w.shape[1],
            outputs: w.shape[0],
        })
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.w
            .chunks_exact(self.inputs)
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

/// Stack of dense layers; every layer but the last is followed by the
/// activation unless `activate_last` is set.
#[derive(Debug, Clone, PartialEq)]
struct Mlp {
    layers: Vec<Linear>,
    act: Activation,
    activate_last: bool,
}

impl Mlp {
    fn load(file: &WeightsFile, net: &str, act: Activation, activate_last: bool) -> Result<Self, PolicyError> {
        let mut layers = Vec::new();
        while file.get(&format!("{net}.{}.weight", layers.len())).is_some() {
            let layer = Linear::load(file, &format!("{net}.{}", layers.len()))?;
            if let Some(prev) = layers.last() {
                let prev: &Linear = prev;
                if prev.outputs != layer.inputs {
                    return Err(PolicyError::WeightShapeMismatch(format!(
                        "`{net}.{}` expects {} inputs, previous layer gives {}",
                        layers.len(),
                        layer.inputs,
                        prev.outputs
                    )));
                }
            }
            layers.push(layer);
        }
        if layers.is_empty() {
            return Err(PolicyError::WeightShapeMismatch(format!(
                "network `{net}` has no layers"
            )));
        }
        Ok(Mlp {
            layers,
            act,
            activate_last,
        })
    }

    fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    fn outputs(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.layers.len();
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i + 1 < n || self.activate_last {
                h.iter_mut().for_each(|v| *v = self.act.apply(*v));
            }
        }
        h
    }
}

/// Blocks that may make up the actor input.
pub const ACTOR_BLOCKS: [&str; 3] = ["obs", "mu", "v_hat"];

/// Layer sizes of the encoder / decoder / actor networks.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArchitecture {
    pub history: usize,
    pub obs_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent: usize,
    pub decoder_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub actor_inputs: Vec<String>,
    pub activation: String,
}

impl Default for PolicyArchitecture {
    fn default() -> Self {
        PolicyArchitecture {
            history: 5,
            obs_dim: OBS_DIM,
            encoder_hidden: vec![128, 64],
            latent: 16,
            decoder_hidden: vec![64],
            actor_hidden: vec![256, 128, 64],
            actor_inputs: ACTOR_BLOCKS.iter().map(|s| s.to_string()).collect(),
            activation: "elu".into(),
        }
    }
}

impl PolicyArchitecture {
    fn actor_input_dim(&self) -> usize {
        self.actor_inputs
            .iter()
            .map(|b| match b.as_str() {
                "obs" => self.obs_dim,
                "mu" => self.latent,
                _ => 3,
            })
            .sum()
    }

    /// `(name, shape)` of every tensor, in file order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut chain = |net: &str, sizes: &[usize]| {
            for (i, w) in sizes.windows(2).enumerate() {
                out.push((format!("{net}.{i}.weight"), vec![w[1], w[0]]));
                out.push((format!("{net}.{i}.bias"), vec![w[1]]));
            }
        };
        let mut enc = vec![self.history * self.obs_dim];
        enc.extend(&self.encoder_hidden);
        chain("encoder", &enc);
        let feat = *enc.last().unwrap();
        for (head, dim) in [
            ("mu", self.latent),
            ("log_sigma", self.latent),
            ("v_hat", 3),
            ("c_hat", 1),
        ] {
            chain(&format!("head.{head}"), &[feat, dim]);
        }
        let mut dec = vec![self.latent];
        dec.extend(&self.decoder_hidden);
        dec.push(self.obs_dim);
        chain("decoder", &dec);
        let mut act = vec![self.actor_input_dim()];
        act.extend(&self.actor_hidden);
        act.push(3);
        chain("actor", &act);
        // single-layer heads are stored as `head.<name>.0`; rename to `head.<name>`
        out.into_iter()
            .map(|(n, s)| (n.replacen(".0.", ".", usize::from(n.starts_with("head."))), s))
            .collect()
    }

    /// Weights file whose tensors are filled by `init(name, shape)`.
    pub fn build(&self, mut init: impl FnMut(&str, &[usize]) -> Vec<f32>) -> WeightsFile {
        let tensors = self
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let data = init(&name, &shape);
                assert_eq!(
                    data.len(),
                    shape.iter().product::<usize>(),
                    "initializer size for `{name}`"
                );
                (name, Tensor { shape, data })
            })
            .collect();
        let activations = ["encoder", "decoder", "actor"]
            .iter()
            .map(|n| (n.to_string(), self.activation.clone()))
            .collect::<BTreeMap<_, _>>();
        WeightsFile {
            tensors,
            activations,
            history: self.history,
            obs_dim: self.obs_dim,
            actor_inputs: self.actor_inputs.clone(),
        }
    }
}

/// Outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub action: Vector3<f64>,
    pub v_hat: Vector3<f64>,
    /// Contact probability estimate.
    pub c_hat: f64,
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

/// Encoder, estimator heads, decoder and actor loaded from a weights file.
/// Immutable after loading.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    encoder: Mlp,
    mu: Linear,
    log_sigma: Linear,
    v_hat: Linear,
    c_hat: Linear,
    decoder: Mlp,
    actor: Mlp,
    actor_inputs: Vec<String>,
    history: usize,
    obs_dim: usize,
}

fn shape_err(msg: String) -> PolicyError {
    PolicyError::WeightShapeMismatch(msg)
}

impl PolicyNetwork {
    pub fn from_weights(file: &WeightsFile) -> Result<Self, PolicyError> {
        if file.obs_dim != OBS_DIM {
            return Err(shape_err(format!(
                "observation size {} (runtime uses {OBS_DIM})",
                file.obs_dim
            )));
        }
        if file.history == 0 {
            return Err(shape_err("history length 0".into()));
        }
        let act = |net: &str| {
            let tag = file
                .activations
                .get(net)
                .ok_or_else(|| PolicyError::Format(format!("no activation for `{net}`")))?;
            Activation::parse(tag)
        };
        let encoder = Mlp::load(file, "encoder", act("encoder")?, true)?;
        let decoder = Mlp::load(file, "decoder", act("decoder")?, false)?;
        let actor = Mlp::load(file, "actor", act("actor")?, false)?;
        let mu = Linear::load(file, "head.mu")?;
        let log_sigma = Linear::load(file, "head.log_sigma")?;
        let v_hat = Linear::load(file, "head.v_hat")?;
        let c_hat = Linear::load(file, "head.c_hat")?;

        if encoder.inputs() != file.history * file.obs_dim {
            return Err(shape_err(format!(
                "encoder takes {} inputs, history {} x {} needs {}",
                encoder.inputs(),
                file.history,
                file.obs_dim,
                file.history * file.obs_dim
            )));
        }
        for (name, head) in [
            ("mu", &mu),
            ("log_sigma", &log_sigma),
            ("v_hat", &v_hat),
            ("c_hat", &c_hat),
        ] {
            if head.inputs != encoder.outputs() {
                return Err(shape_err(format!(
                    "head `{name}` takes {} features, encoder gives {}",
                    head.inputs,
                    encoder.outputs()
                )));
            }
        }
        let latent = mu.outputs;
        if log_sigma.outputs != latent || v_hat.outputs != 3 || c_hat.outputs != 1 {
            return Err(shape_err("head output sizes must be (latent, latent, 3, 1)".into()));
        }
        if decoder.inputs() != latent || decoder.outputs() != file.obs_dim {
            return Err(shape_err(format!(
                "decoder maps {} -> {}, expected {latent} -> {}",
                decoder.inputs(),
                decoder.outputs(),
                file.obs_dim
            )));
        }
        let mut seen = Vec::new();
        for b in &file.actor_inputs {
            if !ACTOR_BLOCKS.contains(&b.as_str()) || seen.contains(b) {
                return Err(PolicyError::Format(format!("bad actor input block `{b}`")));
            }
            seen.push(b.clone());
        }
        if !seen.iter().any(|b| b == "obs") {
            return Err(PolicyError::Format("actor input must include `obs`".into()));
        }
        let arch = PolicyArchitecture {
            latent,
            obs_dim: file.obs_dim,
            actor_inputs: file.actor_inputs.clone(),
            ..PolicyArchitecture::default()
        };
        if actor.inputs() != arch.actor_input_dim() || actor.outputs() != 3 {
            return Err(shape_err(format!(
                "actor maps {} -> {}, expected {} -> 3",
                actor.inputs(),
                actor.outputs(),
                arch.actor_input_dim()
            )));
        }
        Ok(PolicyNetwork {
            encoder,
            mu,
            log_sigma,
            v_hat,
            c_hat,
            decoder,
            actor,
            actor_inputs: file.actor_inputs.clone(),
            history: file.history,
            obs_dim: file.obs_dim,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, PolicyError> {
        Self::from_weights(&WeightsFile::read(path)?)
    }

    pub fn history_len(&self) -> usize {
        self.history
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.outputs
    }

    /// Encoder input: `history` newest first, zero-padded to the full length.
    pub fn stack_history(&self, history: &[Observation]) -> Vec<f64> {
        let mut x = vec![0.0; self.history * self.obs_dim];
        for (slot, o) in x.chunks_exact_mut(self.obs_dim).zip(history) {
            slot.copy_from_slice(o.as_slice());
        }
        x
    }

    /// Deterministic forward pass. `history` holds past observations, newest
    /// first; extra entries are ignored, missing ones read as zeros. The
    /// actor uses the latent mean.
    pub fn forward(&self, history: &[Observation], obs: &Observation) -> Result<PolicyOutput, PolicyError> {
        let feat = self.encoder.forward(&self.stack_history(history));
        let mu = self.mu.forward(&feat);
        let log_sigma = self.log_sigma.forward(&feat);
        let v = self.v_hat.forward(&feat);
        let c = self.c_hat.forward(&feat)[0];
        let mut input = Vec::with_capacity(self.actor.inputs());
        for block in &self.actor_inputs {
            match block.as_str() {
                "obs" => input.extend_from_slice(obs.as_slice()),
                "mu" => input.extend_from_slice(&mu),
                _ => input.extend_from_slice(&v),
            }
        }
        let a = self.actor.forward(&input);
        let out = PolicyOutput {
            action: Vector3::new(a[0], a[1], a[2]),
            v_hat: Vector3::new(v[0], v[1], v[2]),
            c_hat: 1.0 / (1.0 + (-c).exp()),
            mu,
            log_sigma,
        };
        let finite = out
            .action
            .iter()
            .chain(out.v_hat.iter())
            .chain(&out.mu)
            .chain(&out.log_sigma)
            .all(|v| v.is_finite())
            && out.c_hat.is_finite();
        if finite {
            Ok(out)
        } else {
            Err(PolicyError::NonFiniteOutput)
        }
    }

    /// Decoder reconstruction of the next observation from a latent vector.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>, PolicyError> {
        if z.len() != self.latent_dim() {
            return Err(shape_err(format!(
                "latent of length {}, expected {}",
                z.len(),
                self.latent_dim()
            )));
        }
        Ok(self.decoder.forward(z))
    }
}

/// Policy with its observation history, for one episode at a time.
#[derive(Debug, Clone)]
pub struct PolicyRuntime {
    net: std::sync::Arc<PolicyNetwork>,
    history: VecDeque<Observation>,
}

impl PolicyRuntime {
    pub fn new(net: std::sync::Arc<PolicyNetwork>) -> Self {
        let cap = net.history_len();
        PolicyRuntime {
            net,
            history: VecDeque::with_capacity(cap + 1),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, PolicyError> {
        Ok(Self::new(std::sync::Arc::new(PolicyNetwork::from_file(path)?)))
    }

    pub fn network(&self) -> &PolicyNetwork {
        &self.net
    }

    /// Forgets the history (zero padding again).
    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Acts on `obs`, then pushes it into the history.
    pub fn act(&mut self, obs: &Observation) -> Result<PolicyOutput, PolicyError> {
        let past: Vec<Observation> = self.history.iter().copied().collect();
        let out = self.net.forward(&past, obs)?;
        self.history.push_front(*obs);
        self.history.truncate(self.net.history_len());
        Ok(out)
    }
}

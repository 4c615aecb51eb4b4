//! Flat `section.key = value` run configuration.
//!
//! Every tunable default lives here and can be overridden line by line.
//! [`RunConfig::render`] prints the fully resolved configuration in a
//! canonical order, and its hash stamps every artifact built from it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::kg_embed::{EmbedConfig, EmbedMethod};
use crate::kgraph::KgOptions;
use crate::moe::{Availability, ModelConfig};
use crate::optim::OptimizerKind;
use crate::rng::fnv1a;
use crate::synergy::SynergyConfig;
use crate::synth::SynthConfig;

/// Evaluation protocol of an ablation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfig {
    pub dataset: String,
    pub shots: Vec<usize>,
    pub seeds: Vec<u64>,
    pub availability: Vec<Availability>,
    /// Regenerate the synthetic world for every seed (world seed offset by
    /// the run seed).
    pub vary_world: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dataset: "synthetic".into(),
            shots: alloc::vec![10, 20, 40],
            seeds: alloc::vec![0, 1, 2],
            availability: alloc::vec![Availability::Both],
            vary_world: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub kg: KgOptions,
    pub embed: EmbedConfig,
    pub model: ModelConfig,
    pub synergy: SynergyConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
}

fn optimizer_name(k: OptimizerKind) -> &'static str {
    match k {
        OptimizerKind::Sgd => "sgd",
        OptimizerKind::Adam => "adam",
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn four<T: FromStr + Copy>(key: &str, v: &str) -> Result<[T; 4]> {
    let xs: Vec<T> = list(key, v)?;
    <[T; 4]>::try_from(xs).map_err(|_| Error::config(format!("{key}: expected four comma-separated values")))
}

fn join<T: core::fmt::Debug>(xs: &[T]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one override.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        let (e, m, s, w, x) = (&mut self.embed, &mut self.model, &mut self.synergy, &mut self.synth, &mut self.eval);
        match key {
            "kg.register_isolated" => self.kg.register_isolated = num(key, v)?,

            "embed.method" => {
                e.method = EmbedMethod::parse(v).ok_or_else(|| Error::config(format!("{key}: unknown method {v:?}")))?
            }
            "embed.dim" => e.dim = num(key, v)?,
            "embed.margin" => e.margin = num(key, v)?,
            "embed.epochs" => e.epochs = num(key, v)?,
            "embed.lr" => e.lr = num(key, v)?,
            "embed.batch_size" => e.batch_size = num(key, v)?,
            "embed.optimizer" => e.optimizer = parse_optimizer(key, v)?,
            "embed.seed" => e.seed = num(key, v)?,

            "model.expert_hidden" => m.expert_hidden = num(key, v)?,
            "model.gate_hidden" => m.gate_hidden = num(key, v)?,
            "gnn.layers" => m.gnn.layers = num(key, v)?,
            "gnn.hidden" => m.gnn.hidden = num(key, v)?,
            "gnn.readout_hidden" => m.gnn.readout_hidden = num(key, v)?,
            "gnn.out_dim" => m.gnn.out_dim = num(key, v)?,
            "cnn.e_dim" => m.cnn.e_dim = num(key, v)?,
            "cnn.kernel" => m.cnn.kernel = num(key, v)?,
            "cnn.channels" => m.cnn.channels = list(key, v)?,
            "cnn.pool_len" => m.cnn.pool_len = num(key, v)?,
            "cnn.out_dim" => m.cnn.out_dim = num(key, v)?,
            "cnn.max_len" => m.cnn.max_len = num(key, v)?,

            "synergy.alpha_a" => s.alpha_a = num(key, v)?,
            "synergy.beta_a" => s.beta_a = num(key, v)?,
            "synergy.gamma_a" => s.gamma_a = num(key, v)?,
            "synergy.alpha_b" => s.alpha_b = num(key, v)?,
            "synergy.beta_b" => s.beta_b = num(key, v)?,
            "synergy.gamma_b" => s.gamma_b = num(key, v)?,
            "synergy.beta_g" => s.beta_g = num(key, v)?,
            "synergy.gamma_g" => s.gamma_g = num(key, v)?,
            "synergy.epochs" => s.epochs = four(key, v)?,
            "synergy.lr" => s.lr = four(key, v)?,
            "synergy.gate_lr" => s.gate_lr = num(key, v)?,
            "synergy.optimizer" => s.optimizer = parse_optimizer(key, v)?,
            "synergy.pseudo_labels" => s.pseudo_labels = num(key, v)?,
            "synergy.seed" => s.seed = num(key, v)?,

            "synth.drugs" => w.drugs = num(key, v)?,
            "synth.targets" => w.targets = num(key, v)?,
            "synth.entities" => w.entities = num(key, v)?,
            "synth.communities" => w.communities = num(key, v)?,
            "synth.motif_rate" => w.motif_rate = num(key, v)?,
            "synth.kmer_rate" => w.kmer_rate = num(key, v)?,
            "synth.links" => w.links = num(key, v)?,
            "synth.degree" => w.degree = num(key, v)?,
            "synth.noise" => w.noise = num(key, v)?,
            "synth.mislinked" => w.mislinked = num(key, v)?,
            "synth.leaks" => w.leaks = num(key, v)?,
            "synth.min_len" => w.min_len = num(key, v)?,
            "synth.max_len" => w.max_len = num(key, v)?,
            "synth.seed" => w.seed = num(key, v)?,

            "eval.dataset" => x.dataset = v.to_string(),
            "eval.shots" => x.shots = list(key, v)?,
            "eval.seeds" => x.seeds = list(key, v)?,
            "eval.availability" => {
                x.availability = v
                    .split(',')
                    .map(|a| {
                        Availability::parse(a.trim()).ok_or_else(|| Error::config(format!("{key}: unknown setting {a:?}")))
                    })
                    .collect::<Result<_>>()?
            }
            "eval.vary_world" => x.vary_world = num(key, v)?,

            _ => return Err(Error::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (e, m, s, w, x) = (&self.embed, &self.model, &self.synergy, &self.synth, &self.eval);
        let f = |v: f64| format!("{v:?}");
        alloc::vec![
            ("kg.register_isolated", self.kg.register_isolated.to_string()),
            ("embed.method", e.method.name().into()),
            ("embed.dim", e.dim.to_string()),
            ("embed.margin", f(e.margin)),
            ("embed.epochs", e.epochs.to_string()),
            ("embed.lr", f(e.lr)),
            ("embed.batch_size", e.batch_size.to_string()),
            ("embed.optimizer", optimizer_name(e.optimizer).into()),
            ("embed.seed", e.seed.to_string()),
            ("model.expert_hidden", m.expert_hidden.to_string()),
            ("model.gate_hidden", m.gate_hidden.to_string()),
            ("gnn.layers", m.gnn.layers.to_string()),
            ("gnn.hidden", m.gnn.hidden.to_string()),
            ("gnn.readout_hidden", m.gnn.readout_hidden.to_string()),
            ("gnn.out_dim", m.gnn.out_dim.to_string()),
            ("cnn.e_dim", m.cnn.e_dim.to_string()),
            ("cnn.kernel", m.cnn.kernel.to_string()),
            ("cnn.channels", join(&m.cnn.channels)),
            ("cnn.pool_len", m.cnn.pool_len.to_string()),
            ("cnn.out_dim", m.cnn.out_dim.to_string()),
            ("cnn.max_len", m.cnn.max_len.to_string()),
            ("synergy.alpha_a", f(s.alpha_a)),
            ("synergy.beta_a", f(s.beta_a)),
            ("synergy.gamma_a", s.gamma_a.to_string()),
            ("synergy.alpha_b", f(s.alpha_b)),
            ("synergy.beta_b", f(s.beta_b)),
            ("synergy.gamma_b", s.gamma_b.to_string()),
            ("synergy.beta_g", f(s.beta_g)),
            ("synergy.gamma_g", s.gamma_g.to_string()),
            ("synergy.epochs", join(&s.epochs)),
            ("synergy.lr", join(&s.lr)),
            ("synergy.gate_lr", f(s.gate_lr)),
            ("synergy.optimizer", optimizer_name(s.optimizer).into()),
            ("synergy.pseudo_labels", s.pseudo_labels.to_string()),
            ("synergy.seed", s.seed.to_string()),
            ("synth.drugs", w.drugs.to_string()),
            ("synth.targets", w.targets.to_string()),
            ("synth.entities", w.entities.to_string()),
            ("synth.communities", w.communities.to_string()),
            ("synth.motif_rate", f(w.motif_rate)),
            ("synth.kmer_rate", f(w.kmer_rate)),
            ("synth.links", w.links.to_string()),
            ("synth.degree", w.degree.to_string()),
            ("synth.noise", f(w.noise)),
            ("synth.mislinked", f(w.mislinked)),
            ("synth.leaks", w.leaks.to_string()),
            ("synth.min_len", w.min_len.to_string()),
            ("synth.max_len", w.max_len.to_string()),
            ("synth.seed", w.seed.to_string()),
            ("eval.dataset", x.dataset.clone()),
            ("eval.shots", join(&x.shots)),
            ("eval.seeds", join(&x.seeds)),
            (
                "eval.availability",
                x.availability.iter().map(|a| a.name()).collect::<Vec<_>>().join(",")
            ),
            ("eval.vary_world", x.vary_world.to_string()),
        ]
    }

    /// Defaults overridden by the lines of `text`. Blank lines and `#`
    /// comments are ignored; a key may appear at most once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, text: &str) -> Result<()> {
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let malformed = |msg: String| Error::Malformed { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| malformed(format!("expected `section.key = value`, got {line:?}")))?;
            let k = k.trim();
            if seen.iter().any(|s| s == k) {
                return Err(malformed(format!("duplicate key {k:?}")));
            }
            self.set(k, v).map_err(|e| malformed(e.to_string()))?;
            seen.push(k.into());
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.synergy.validate()?;
        self.synth.validate()?;
        if self.embed.dim == 0 || (self.embed.method == EmbedMethod::RotatE && self.embed.dim % 2 == 1) {
            return Err(Error::config("embed.dim must be positive, and even for rotate"));
        }
        if self.eval.shots.iter().any(|&s| s == 0) || self.eval.shots.is_empty() {
            return Err(Error::config("eval.shots must be a non-empty list of positive counts"));
        }
        if self.eval.seeds.is_empty() || self.eval.availability.is_empty() {
            return Err(Error::config("eval.seeds and eval.availability must be non-empty"));
        }
        Ok(())
    }

    /// Canonical text; parsing it back yields an equal configuration.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a(self.render().as_bytes())
    }
}

fn parse_optimizer(key: &str, v: &str) -> Result<OptimizerKind> {
    match v {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::Adam),
        _ => Err(Error::config(format!("{key}: unknown optimizer {v:?}"))),
    }
}

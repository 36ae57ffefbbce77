//! Run configuration in a plain `key = value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown keys and malformed values are errors. The canonical
//! dump (all keys, fixed order) is hashed to tag every output.
//!
//! Keys:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `seed` | 0 | global seed |
//! | `data_dir` | (empty) | dataset root, `METAVIEW_DATA_DIR` if empty |
//! | `contextual_mode` | pad | pad, deepset, hetero_concat |
//! | `d_pad` `d_u` `d_z` | 100 32 128 | view widths |
//! | `diffusion` | ppr | ppr or heat |
//! | `teleport` `heat_time` `series_truncation` | 0.2 5 64 | diffusion settings |
//! | `hetero_dim` `projection_seed` | 32 0 | fixed contextual projections |
//! | `d_h` `gnn_layers` `mlp_layers` | 256 2 2 | encoder widths and depths |
//! | `dropout` | 0.6 | dropout probability |
//! | `fwt` `fwt_gamma_sd` `fwt_beta_sd` | true 0.3 0.5 | feature-wise transform |
//! | `views` | X,U,Z | enabled views |
//! | `normalize_views` | true | unit-norm view embeddings before attention |
//! | `head` | proto | proto, match, relation |
//! | `meta_batch` `epochs` `patience` `lr` | 16 1000 30 0.001 | meta-training |
//! | `way` `shots` `queries` | 2 5 10 | training episodes |
//! | `episodes_per_task` `dev_episodes` | 1 4 | episodes per epoch and dev episodes per task |
//! | `preset` | (empty) | molecules, bioinformatics or social: load the selected step counts and rates for the head |
//! | `task_steps` `adapt_steps` `task_lr` `adapt_lr` | 50 50 0.01 0.01 | per-head settings |
//! | `tau` | 10 | cosine classifier scale |
//! | `eval_shots` `eval_runs` `eval_adapt` | 5 10 true | meta-test protocol |
//! | `max_degree` `max_feature_dim` `min_nodes` `min_edges` `max_nodes` | 50 100 2 1 500 | graph filter |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::autodiff::{inverse_softplus, softplus};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::graph::FilterLimits;
use crate::meta::{presets, EvalConfig, TrainConfig};
use crate::views::{ContextualMode, DiffusionKind, ViewConfig};

pub const DATA_DIR_ENV: &str = "METAVIEW_DATA_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub views: ViewConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub limits: FilterLimits,
    pub preset: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data_dir: None,
            views: ViewConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            limits: FilterLimits::default(),
            preset: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {v:?} for {key}"))),
    }
}

fn positive_sd(key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse(key, v)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Config(format!("{key} must be positive")));
    }
    Ok(inverse_softplus(x))
}

impl RunConfig {
    pub fn from_str_checked(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        // A preset sets defaults that explicit keys may override.
        if let Some((_, v)) = entries.iter().find(|(k, _)| k == "preset") {
            cfg.set("preset", v)?;
        }
        if let Some((_, v)) = entries.iter().find(|(k, _)| k == "head") {
            cfg.set("head", v)?;
        }
        for (k, v) in entries.iter().filter(|(k, _)| k != "preset" && k != "head") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_str_checked(&text)
    }

    fn apply_preset(&mut self) -> Result<()> {
        if let Some(p) = &self.preset {
            let h = presets(p, self.train.head)?;
            self.train.apply_preset(&h);
            self.encoder.gnn_layers = h.layers;
            self.encoder.mlp_layers = h.layers;
            self.eval.adapt_steps = h.adapt_steps;
            self.eval.adapt_lr = h.adapt_lr;
        }
        Ok(())
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
                self.eval.seed = self.seed;
            }
            "data_dir" => self.data_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "contextual_mode" => self.views.contextual_mode = v.parse::<ContextualMode>()?,
            "d_pad" => self.views.d_pad = parse(key, v)?,
            "d_u" => self.views.d_u = parse(key, v)?,
            "d_z" => self.views.d_z = parse(key, v)?,
            "diffusion" => self.views.diffusion_kind = v.parse::<DiffusionKind>()?,
            "teleport" => self.views.teleport = parse(key, v)?,
            "heat_time" => self.views.heat_time = parse(key, v)?,
            "series_truncation" => self.views.series_truncation = parse(key, v)?,
            "hetero_dim" => self.views.hetero_dim = parse(key, v)?,
            "projection_seed" => self.views.projection_seed = parse(key, v)?,
            "d_h" => self.encoder.d_h = parse(key, v)?,
            "gnn_layers" => self.encoder.gnn_layers = parse(key, v)?,
            "mlp_layers" => self.encoder.mlp_layers = parse(key, v)?,
            "dropout" => self.encoder.dropout = parse(key, v)?,
            "fwt" => self.encoder.fwt.enabled = parse_bool(key, v)?,
            "fwt_gamma_sd" => self.encoder.fwt.theta_gamma = positive_sd(key, v)?,
            "fwt_beta_sd" => self.encoder.fwt.theta_beta = positive_sd(key, v)?,
            "views" => self.encoder.set_views(v)?,
            "normalize_views" => self.encoder.normalize_views = parse_bool(key, v)?,
            "head" => {
                self.train.head = v.parse()?;
                self.apply_preset()?;
            }
            "meta_batch" => self.train.meta_batch = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "lr" => self.train.lr = parse(key, v)?,
            "way" => self.train.way = parse(key, v)?,
            "shots" => self.train.shots = parse(key, v)?,
            "queries" => self.train.queries = parse(key, v)?,
            "episodes_per_task" => self.train.episodes_per_task = parse(key, v)?,
            "dev_episodes" => self.train.dev_episodes = parse(key, v)?,
            "preset" => {
                self.preset = (!v.is_empty()).then(|| v.to_string());
                self.apply_preset()?;
            }
            "task_steps" => self.train.task_steps = parse(key, v)?,
            "adapt_steps" => {
                self.train.adapt_steps = parse(key, v)?;
                self.eval.adapt_steps = self.train.adapt_steps;
            }
            "task_lr" => self.train.task_lr = parse(key, v)?,
            "adapt_lr" => {
                self.train.adapt_lr = parse(key, v)?;
                self.eval.adapt_lr = self.train.adapt_lr;
            }
            "tau" => {
                self.train.tau = parse(key, v)?;
                self.eval.tau = self.train.tau;
            }
            "eval_shots" => self.eval.shots = parse(key, v)?,
            "eval_runs" => self.eval.runs = parse(key, v)?,
            "eval_adapt" => self.eval.adapt = parse_bool(key, v)?,
            "max_degree" => self.limits.max_degree = parse(key, v)?,
            "max_feature_dim" => self.limits.max_feature_dim = parse(key, v)?,
            "min_nodes" => self.limits.min_nodes = parse(key, v)?,
            "min_edges" => self.limits.min_edges = parse(key, v)?,
            "max_nodes" => self.limits.max_nodes_before_subsample = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.views.validate().map_err(as_config)?;
        self.encoder.validate().map_err(as_config)?;
        self.train.validate().map_err(as_config)?;
        self.limits.validate().map_err(as_config)?;
        if self.eval.shots == 0 || self.eval.runs == 0 {
            return Err(Error::Config("eval_shots and eval_runs must be positive".into()));
        }
        Ok(())
    }

    /// Dataset root: `data_dir`, else the environment variable.
    pub fn data_root(&self) -> Option<PathBuf> {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }

    /// Every key with its current value in a fixed order; parsing the result
    /// yields an equal configuration.
    pub fn canonical(&self) -> String {
        let v = &self.views;
        let e = &self.encoder;
        let t = &self.train;
        let ev = &self.eval;
        let l = &self.limits;
        let mode = match v.contextual_mode {
            ContextualMode::Pad => "pad",
            ContextualMode::Deepset => "deepset",
            ContextualMode::HeteroConcat => "hetero_concat",
        };
        let diffusion = match v.diffusion_kind {
            DiffusionKind::Ppr => "ppr",
            DiffusionKind::Heat => "heat",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("preset", self.preset.clone().unwrap_or_default()),
            ("head", t.head.to_string()),
            ("seed", self.seed.to_string()),
            ("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("contextual_mode", mode.into()),
            ("d_pad", v.d_pad.to_string()),
            ("d_u", v.d_u.to_string()),
            ("d_z", v.d_z.to_string()),
            ("diffusion", diffusion.into()),
            ("teleport", format!("{:?}", v.teleport)),
            ("heat_time", format!("{:?}", v.heat_time)),
            ("series_truncation", v.series_truncation.to_string()),
            ("hetero_dim", v.hetero_dim.to_string()),
            ("projection_seed", v.projection_seed.to_string()),
            ("d_h", e.d_h.to_string()),
            ("gnn_layers", e.gnn_layers.to_string()),
            ("mlp_layers", e.mlp_layers.to_string()),
            ("dropout", format!("{:?}", e.dropout)),
            ("fwt", e.fwt.enabled.to_string()),
            ("fwt_gamma_sd", format!("{:?}", softplus(e.fwt.theta_gamma))),
            ("fwt_beta_sd", format!("{:?}", softplus(e.fwt.theta_beta))),
            ("views", e.views_label()),
            ("normalize_views", e.normalize_views.to_string()),
            ("meta_batch", t.meta_batch.to_string()),
            ("epochs", t.epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("lr", format!("{:?}", t.lr)),
            ("way", t.way.to_string()),
            ("shots", t.shots.to_string()),
            ("queries", t.queries.to_string()),
            ("episodes_per_task", t.episodes_per_task.to_string()),
            ("dev_episodes", t.dev_episodes.to_string()),
            ("task_steps", t.task_steps.to_string()),
            ("task_lr", format!("{:?}", t.task_lr)),
            ("adapt_steps", ev.adapt_steps.to_string()),
            ("adapt_lr", format!("{:?}", ev.adapt_lr)),
            ("tau", format!("{:?}", ev.tau)),
            ("eval_shots", ev.shots.to_string()),
            ("eval_runs", ev.runs.to_string()),
            ("eval_adapt", ev.adapt.to_string()),
            ("max_degree", l.max_degree.to_string()),
            ("max_feature_dim", l.max_feature_dim.to_string()),
            ("min_nodes", l.min_nodes.to_string()),
            ("min_edges", l.min_edges.to_string()),
            ("max_nodes", l.max_nodes_before_subsample.to_string()),
        ];
        let mut s = String::new();
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.encoder.d_h, 256);
        assert_eq!(c.views.d_u, 32);
        assert_eq!(c.views.d_z, 128);
        assert_eq!(c.views.teleport, 0.2);
        assert_eq!(c.train.meta_batch, 16);
        assert_eq!(c.train.epochs, 1000);
        assert_eq!(c.train.patience, 30);
        assert_eq!(c.encoder.dropout, 0.6);
    }

    #[test]
    fn canonical_roundtrip() {
        let text = "# comment\nseed = 7\nviews = X,Z\nhead = relation\nlr = 0.003\nfwt_gamma_sd = 0.25\n";
        let c = RunConfig::from_str_checked(text).unwrap();
        assert_eq!(c.seed, 7);
        assert!(!c.encoder.use_u);
        let back = RunConfig::from_str_checked(&c.canonical()).unwrap();
        assert_eq!(back.canonical(), c.canonical());
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.hash(), RunConfig::default().hash());
    }

    #[test]
    fn unknown_and_malformed_keys() {
        assert!(matches!(RunConfig::from_str_checked("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_str_checked("d_h = many"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_str_checked("just words"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_str_checked("gnn_layers = 4"), Err(Error::Config(_))));
    }

    #[test]
    fn preset_then_override() {
        let c = RunConfig::from_str_checked("preset = molecules\nhead = match\nadapt_lr = 0.05").unwrap();
        assert_eq!(c.train.task_steps, 25);
        assert_eq!(c.eval.adapt_steps, 10);
        assert_eq!(c.train.task_lr, 0.01);
        assert_eq!(c.eval.adapt_lr, 0.05);
        assert_eq!(c.encoder.gnn_layers, 2);
    }
}

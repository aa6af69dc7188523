//! `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clustergcf::cluster::DEFAULT_LEAKY_SLOPE;
use clustergcf::training::DEFAULT_TAU;
use clustergcf::{Error, PropagationConfig, Result, TrainConfig};

pub const MAX_CLI_LAYERS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Dataset cache written by `prepare`.
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub embedding_dim: usize,
    pub clusters: usize,
    pub tau: f64,
    pub layers: usize,
    pub start_layer: usize,
    pub leaky_slope: f64,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::from("dataset.bin"),
            out_dir: PathBuf::from("run"),
            embedding_dim: 64,
            clusters: 2,
            tau: DEFAULT_TAU,
            layers: 6,
            start_layer: 2,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            train: TrainConfig::default(),
        }
    }
}

fn usage(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| usage(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(usage(format!("{key}: expected true or false, found {value:?}"))),
    }
}

impl RunConfig {
    /// Sets one key. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = base.join(value),
            "out_dir" => self.out_dir = base.join(value),
            "embedding_dim" => self.embedding_dim = parse_value(key, value)?,
            "clusters" => self.clusters = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "layers" => self.layers = parse_value(key, value)?,
            "start_layer" => self.start_layer = parse_value(key, value)?,
            "leaky_slope" => self.leaky_slope = parse_value(key, value)?,
            "learning_rate" => t.learning_rate = parse_value(key, value)?,
            "lambda" => t.lambda = parse_value(key, value)?,
            "reg_cluster_weights" => t.reg_cluster_weights = parse_bool(key, value)?,
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "max_epochs" => t.max_epochs = parse_value(key, value)?,
            "eval_every" => t.eval_every = parse_value(key, value)?,
            "patience" => t.patience = parse_value(key, value)?,
            "eval_k" => t.eval_k = parse_value(key, value)?,
            "seed" => t.seed = parse_value(key, value)?,
            other => return Err(usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a config file body; relative paths, including the default
    /// ones, are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.dataset = base.join(&cfg.dataset);
        cfg.out_dir = base.join(&cfg.out_dir);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim(), base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Applies `key=value` overrides, relative paths resolved against the
    /// working directory.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| usage(format!("override {o:?}: expected key=value")))?;
            self.set(k.trim(), v.trim(), Path::new(""))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(usage("embedding_dim must be >= 1".into()));
        }
        if !(1..=MAX_CLI_LAYERS).contains(&self.layers) {
            return Err(usage(format!("layers must be in 1..={MAX_CLI_LAYERS}")));
        }
        if self.clusters == 0 {
            return Err(usage("clusters must be >= 1".into()));
        }
        if !(1..=3).contains(&self.start_layer) {
            return Err(usage("start_layer must be 1, 2 or 3".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(usage("tau must be positive".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope.is_finite()) {
            return Err(usage("leaky_slope must be non-negative".into()));
        }
        self.train.validate()?;
        self.propagation().map(|_| ())
    }

    pub fn propagation(&self) -> Result<PropagationConfig> {
        PropagationConfig::new(self.layers, self.clusters, self.start_layer)
    }

    /// The effective configuration, one key per line, readable by [`RunConfig::parse`].
    pub fn render(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dataset", self.dataset.display().to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("embedding_dim", self.embedding_dim.to_string());
        kv("clusters", self.clusters.to_string());
        kv("tau", format!("{:?}", self.tau));
        kv("layers", self.layers.to_string());
        kv("start_layer", self.start_layer.to_string());
        kv("leaky_slope", format!("{:?}", self.leaky_slope));
        kv("learning_rate", format!("{:?}", t.learning_rate));
        kv("lambda", format!("{:?}", t.lambda));
        kv("reg_cluster_weights", t.reg_cluster_weights.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("max_epochs", t.max_epochs.to_string());
        kv("eval_every", t.eval_every.to_string());
        kv("patience", t.patience.to_string());
        kv("eval_k", t.eval_k.to_string());
        kv("seed", t.seed.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_comments() {
        let cfg = RunConfig::parse("# comment\n\nclusters = 3 # trailing\ntau=1e-2\n", Path::new("/d")).unwrap();
        assert_eq!(cfg.clusters, 3);
        assert_eq!(cfg.tau, 1e-2);
        assert_eq!(cfg.embedding_dim, 64);
        assert_eq!(cfg.layers, 6);
        assert_eq!(cfg.start_layer, 2);
        assert_eq!(cfg.dataset, Path::new("/d/dataset.bin"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let err = RunConfig::parse("colors = 2\n", Path::new("")).unwrap_err();
        assert!(err.to_string().contains("colors"));
        let err = RunConfig::parse("layers = 9\n", Path::new("")).unwrap_err();
        assert!(err.to_string().contains("layers"));
        let err = RunConfig::parse("layers = 0\n", Path::new("")).unwrap_err();
        assert!(err.to_string().contains("layers"));
        let err = RunConfig::parse("batch_size = many\n", Path::new("")).unwrap_err();
        assert!(err.to_string().contains("batch_size"));
        assert!(RunConfig::parse("just words\n", Path::new("")).is_err());
        assert!(RunConfig::parse("tau = 0\n", Path::new("")).is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.tau = 0.3;
        cfg.train.lambda = 1e-5;
        cfg.train.reg_cluster_weights = false;
        cfg.dataset = PathBuf::from("/x/y.bin");
        cfg.out_dir = PathBuf::from("/x/out");
        let back = RunConfig::parse(&cfg.render(), Path::new("/elsewhere")).unwrap();
        assert_eq!(back, cfg);
    }
}

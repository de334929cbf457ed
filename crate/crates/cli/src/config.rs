//! Three-layer configuration: built-in defaults, then a TOML config file,
//! then explicit flags. Flat keys named like the flags (underscored).

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use hodep_core::admm::AdmmConfig;
use hodep_core::factor_graph::ScoreSplit;
use hodep_core::scorer::EncoderKind;
use hodep_core::trainer::{OptimizerKind, TrainConfig};

use crate::args::{AdmmArgs, EncoderArg, HighOrderArgs, OptimizerArg, TrainArgs};

#[derive(Debug, Default)]
pub struct FileConfig {
    table: Option<toml::Table>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(FileConfig { table: Some(table) })
    }

    fn get(&self, key: &str) -> Option<&toml::Value> {
        self.table.as_ref()?.get(key)
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        let v = self.get(key)?;
        v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
    }

    pub fn usize(&self, key: &str) -> Option<usize> {
        self.get(key)?.as_integer().map(|i| i as usize)
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.get(key)?.as_integer().map(|i| i as u64)
    }

    pub fn bool(&self, key: &str) -> Option<bool> {
        self.get(key)?.as_bool()
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.get(key)?.as_str()
    }
}

pub fn resolve_admm(args: &AdmmArgs, file: &FileConfig) -> AdmmConfig {
    let rho = args.rho.or_else(|| file.f64("rho")).unwrap_or(1.0);
    let mut config = AdmmConfig::with_rho(rho);
    if let Some(eta0) = args.eta0.or_else(|| file.f64("eta0")) {
        config.eta0 = eta0;
    }
    if let Some(v) = args.eps_primal.or_else(|| file.f64("eps_primal")) {
        config.eps_primal = v;
    }
    if let Some(v) = args.eps_dual.or_else(|| file.f64("eps_dual")) {
        config.eps_dual = v;
    }
    if let Some(v) = args.admm_max_iters.or_else(|| file.usize("admm_max_iters")) {
        config.max_iters = v;
    }
    if let Some(v) = args
        .rounding_threshold
        .or_else(|| file.f64("rounding_threshold"))
    {
        config.rounding_threshold = v;
    }
    config
}

pub struct ResolvedHighOrder {
    pub high_order: bool,
    pub beta: f64,
    pub score_split: ScoreSplit,
    pub include_backward: bool,
}

pub fn resolve_high_order(args: &HighOrderArgs, file: &FileConfig) -> ResolvedHighOrder {
    ResolvedHighOrder {
        high_order: args
            .high_order
            .or_else(|| file.bool("high_order"))
            .unwrap_or(false),
        beta: args.beta.or_else(|| file.f64("beta")).unwrap_or(1.0),
        score_split: if args
            .score_split
            .or_else(|| file.bool("score_split"))
            .unwrap_or(false)
        {
            ScoreSplit::SplitByCover
        } else {
            ScoreSplit::Unscaled
        },
        include_backward: args
            .include_backward
            .or_else(|| file.bool("include_backward"))
            .unwrap_or(false),
    }
}

pub struct ResolvedTrain {
    pub config: TrainConfig,
    pub encoder: EncoderKind,
    pub d_emb: usize,
    pub d_pos: usize,
    pub d_hidden: usize,
    pub d_arc: usize,
    pub min_count: usize,
}

pub fn resolve_train(args: &TrainArgs, file: &FileConfig) -> Result<ResolvedTrain> {
    let optimizer = match args.optimizer {
        Some(OptimizerArg::Adam) => OptimizerKind::Adam,
        Some(OptimizerArg::Sgd) => OptimizerKind::Sgd,
        None => match file.str("optimizer") {
            Some("adam") | None => OptimizerKind::Adam,
            Some("sgd") => OptimizerKind::Sgd,
            Some(other) => anyhow::bail!("unknown optimizer {other:?} in config file"),
        },
    };
    let mut config = TrainConfig::defaults(optimizer);
    if let Some(lr) = args.lr.or_else(|| file.f64("lr")) {
        config.learning_rate = lr;
    }
    if let Some(v) = args.epochs.or_else(|| file.usize("epochs")) {
        config.epochs = v;
    }
    if let Some(v) = args.batch.or_else(|| file.usize("batch")) {
        config.batch_size = v;
    }
    if let Some(v) = args.max_len.or_else(|| file.usize("max_len")) {
        config.max_len = v;
    }
    if let Some(v) = args
        .warm_start_epochs
        .or_else(|| file.usize("warm_start_epochs"))
    {
        config.warm_start_epochs = v;
    }
    config.seed = args.seed.or_else(|| file.u64("seed")).unwrap_or(0);
    let high = resolve_high_order(&args.high, file);
    config.high_order = high.high_order;
    config.beta = high.beta;
    config.score_split = high.score_split;
    config.include_backward = high.include_backward;
    config.admm = resolve_admm(&args.admm, file);

    let encoder = match args.encoder {
        Some(EncoderArg::Birnn) => EncoderKind::BiRnn,
        Some(EncoderArg::Window) => EncoderKind::Window,
        None => match file.str("encoder") {
            Some("window") => EncoderKind::Window,
            Some("birnn") | None => EncoderKind::BiRnn,
            Some(other) => anyhow::bail!("unknown encoder {other:?} in config file"),
        },
    };
    Ok(ResolvedTrain {
        config,
        encoder,
        d_emb: args.d_emb.or_else(|| file.usize("d_emb")).unwrap_or(64),
        d_pos: args.d_pos.or_else(|| file.usize("d_pos")).unwrap_or(16),
        d_hidden: args.d_hidden.or_else(|| file.usize("d_hidden")).unwrap_or(64),
        d_arc: args.d_arc.or_else(|| file.usize("d_arc")).unwrap_or(64),
        min_count: args.min_count.or_else(|| file.usize("min_count")).unwrap_or(2),
    })
}

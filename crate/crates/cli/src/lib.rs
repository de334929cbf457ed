//! Command implementations behind the `hodep` binary: train / parse / eval
//! / verify. Exit codes: 0 success, 1 runtime failure, 2 bad flags or paths
//! (clap's own usage errors also exit 2).

use std::path::Path;

pub mod args;
pub mod config;
pub mod files;

mod commands {
    pub mod eval;
    pub mod parse;
    pub mod train;
    pub mod verify;
}

use args::{Cli, Command};

fn require_files(paths: &[(&str, &Path)]) -> Result<(), String> {
    for (flag, path) in paths {
        if !path.is_file() {
            return Err(format!("--{flag} {}: no such file", path.display()));
        }
    }
    Ok(())
}

/// Flag-value sanity that doesn't need the config file: zeroes and
/// non-positive rates are rejected before any work starts.
fn check_train_flags(a: &args::TrainArgs) -> Result<(), String> {
    let positive_counts = [
        ("epochs", a.epochs),
        ("batch", a.batch),
        ("max-len", a.max_len),
        ("min-count", a.min_count),
        ("d-emb", a.d_emb),
        ("d-pos", a.d_pos),
        ("d-hidden", a.d_hidden),
        ("d-arc", a.d_arc),
        ("admm-max-iters", a.admm.admm_max_iters),
    ];
    for (flag, value) in positive_counts {
        if value == Some(0) {
            return Err(format!("--{flag} must be at least 1"));
        }
    }
    let positive_reals = [
        ("lr", a.lr),
        ("rho", a.admm.rho),
        ("eta0", a.admm.eta0),
        ("eps-primal", a.admm.eps_primal),
        ("eps-dual", a.admm.eps_dual),
    ];
    for (flag, value) in positive_reals {
        if let Some(v) = value {
            if !(v > 0.0) {
                return Err(format!("--{flag} must be positive, got {v}"));
            }
        }
    }
    if let Some(t) = a.admm.rounding_threshold {
        if !(t > 0.0 && t < 1.0) {
            return Err(format!("--rounding-threshold must lie in (0,1), got {t}"));
        }
    }
    Ok(())
}

fn build_pool(jobs: Option<usize>) -> rayon::ThreadPool {
    let threads = jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool")
}

pub fn run(cli: Cli) -> i32 {
    let validation = match &cli.command {
        Command::Train(a) => {
            let mut need: Vec<(&str, &Path)> = vec![("train", &a.train)];
            if let Some(dev) = &a.dev {
                need.push(("dev", dev));
            }
            if let Some(c) = &a.config {
                need.push(("config", c));
            }
            require_files(&need).and_then(|()| check_train_flags(a))
        }
        Command::Parse(a) => require_files(&[
            ("model", &a.model),
            ("vocab", &a.vocab),
            ("input", &a.input),
        ]),
        Command::Eval(a) => require_files(&[("gold", &a.gold), ("pred", &a.pred)]),
        Command::Verify(_) => Ok(()),
    };
    if let Err(message) = validation {
        eprintln!("error: {message}");
        return 2;
    }

    let result = match &cli.command {
        Command::Train(a) => commands::train::run(a, &build_pool(cli.jobs), cli.verbose),
        Command::Parse(a) => commands::parse::run(a, &build_pool(cli.jobs)),
        Command::Eval(a) => commands::eval::run(a),
        Command::Verify(a) => {
            return if commands::verify::run(a) { 0 } else { 1 };
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

use std::fs;
use std::io::Write as _;
use std::time::Instant;

use anyhow::{Context, Result};
use hodep_core::corpus::Vocabulary;
use hodep_core::pipeline::ParseSettings;
use hodep_core::scorer::{ScorerConfig, ScorerParams};
use hodep_core::trainer::{self, OptState, TrainReport};
use rayon::prelude::*;

use crate::args::TrainArgs;
use crate::config::{self, FileConfig};
use crate::files;

pub fn run(args: &TrainArgs, pool: &rayon::ThreadPool, verbose: u8) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let resolved = config::resolve_train(args, &file)?;
    let config = resolved.config;
    config
        .validate()
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    let train = files::load_conllu(&args.train)?;
    if train.is_empty() {
        anyhow::bail!("{}: no sentences", args.train.display());
    }
    let dev = args.dev.as_ref().map(|p| files::load_conllu(p)).transpose()?;
    let vocab = Vocabulary::build(&train, resolved.min_count)
        .map_err(|e| anyhow::anyhow!("building vocabulary: {e}"))?;

    let scorer_config = ScorerConfig {
        word_vocab: vocab.word_count(),
        pos_vocab: vocab.pos_count(),
        d_emb: resolved.d_emb,
        d_pos: resolved.d_pos,
        d_hidden: resolved.d_hidden,
        d_arc: resolved.d_arc,
        encoder: resolved.encoder,
    };
    let mut params =
        ScorerParams::new_seeded(scorer_config, config.seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut opt = OptState::new(config.optimizer, &params);

    if verbose > 0 {
        eprintln!(
            "training on {} sentences ({} <= {} tokens), vocab {} words / {} tags",
            train.len(),
            train.iter().filter(|s| s.len() <= config.max_len).count(),
            config.max_len,
            vocab.word_count(),
            vocab.pos_count()
        );
    }

    files::save_vocab(&args.vocab, &vocab)?;
    let mut report = TrainReport::default();
    for epoch in 1..=config.epochs {
        let t0 = Instant::now();
        let stats = trainer::train_epoch(&train, &vocab, &mut params, &mut opt, &config, epoch)
            .map_err(|e| anyhow::anyhow!("epoch {epoch}: {e}"))?;
        let seconds = t0.elapsed().as_secs_f64();

        let settings = config.settings_for_epoch(epoch);
        let dev_uas = match &dev {
            Some(dev) => Some(parallel_uas(pool, dev, &vocab, &params, &settings)?),
            None => None,
        };

        report.epoch_loss.push(stats.loss);
        report.dev_uas.push(dev_uas);
        report.epoch_seconds.push(seconds);
        report.admm_convergence.push(stats.admm_convergence_rate());
        files::save_model(&args.model, &params)?;

        println!(
            "epoch {epoch}: loss {:.4}{}{} ({:.1}s)",
            stats.loss,
            match dev_uas {
                Some(u) => format!(", dev UAS {u:.4}"),
                None => String::new(),
            },
            if stats.admm_runs > 0 {
                format!(
                    ", admm converged {}/{}",
                    stats.admm_converged, stats.admm_runs
                )
            } else {
                String::new()
            },
            seconds
        );
    }

    if let Some(path) = &args.metrics {
        // wall time stays out of the metrics file so identical seeds give
        // identical bytes
        let mut f =
            fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        writeln!(f, "epoch,loss,dev_uas,admm_convergence")?;
        for e in 0..report.epoch_loss.len() {
            writeln!(
                f,
                "{},{:.6},{},{:.6}",
                e + 1,
                report.epoch_loss[e],
                report.dev_uas[e]
                    .map(|u| format!("{u:.6}"))
                    .unwrap_or_default(),
                report.admm_convergence[e],
            )?;
        }
    }
    println!(
        "trained {} epochs in {:.1}s; model {}, vocab {}",
        config.epochs,
        report.epoch_seconds.iter().sum::<f64>(),
        args.model.display(),
        args.vocab.display()
    );
    Ok(())
}

/// Dev-set UAS with per-sentence work spread over the pool; the reduction
/// runs over an ordered collection, so results are deterministic.
fn parallel_uas(
    pool: &rayon::ThreadPool,
    sentences: &[hodep_core::corpus::Sentence],
    vocab: &Vocabulary,
    params: &ScorerParams,
    settings: &ParseSettings,
) -> Result<f64> {
    let per_sentence: Vec<Result<(usize, usize)>> = pool.install(|| {
        sentences
            .par_iter()
            .map(|s| {
                let (tree, _) = hodep_core::pipeline::parse_sentence(s, vocab, params, settings)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                let correct = tree
                    .heads
                    .iter()
                    .zip(&s.gold_heads)
                    .filter(|(a, b)| a == b)
                    .count();
                Ok((correct, s.len()))
            })
            .collect()
    });
    let mut correct = 0usize;
    let mut tokens = 0usize;
    for r in per_sentence {
        let (c, t) = r?;
        correct += c;
        tokens += t;
    }
    Ok(if tokens == 0 {
        0.0
    } else {
        correct as f64 / tokens as f64
    })
}

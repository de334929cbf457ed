use anyhow::Result;
use hodep_core::admm::{self, TraceRow};
use hodep_core::corpus::Sentence;
use hodep_core::decoder::{self, ParseTree};
use hodep_core::factor_graph;
use hodep_core::pipeline::ParseSettings;
use hodep_core::scorer::{self, ScorerParams};
use hodep_core::corpus::Vocabulary;
use rayon::prelude::*;

use crate::args::ParseArgs;
use crate::config::{self, FileConfig};
use crate::files;

struct SentenceOutput {
    tree: ParseTree,
    dump: Option<String>,
    trace: Vec<TraceRow>,
}

pub fn run(args: &ParseArgs, pool: &rayon::ThreadPool) -> Result<()> {
    let params = files::load_model(&args.model)?;
    let vocab = files::load_vocab(&args.vocab)?;
    files::check_model_vocab(&params, &vocab)?;

    let file = FileConfig::default();
    let high = config::resolve_high_order(&args.high, &file);
    let settings = ParseSettings {
        high_order: high.high_order,
        beta: high.beta,
        admm: config::resolve_admm(&args.admm, &file),
        score_split: high.score_split,
        include_backward: high.include_backward,
    };

    let sentences = files::load_conllu(&args.input)?;
    let outputs: Vec<Result<SentenceOutput>> = pool.install(|| {
        sentences
            .par_iter()
            .map(|s| parse_one(s, &vocab, &params, &settings, args))
            .collect()
    });

    let mut heads = Vec::with_capacity(sentences.len());
    for (i, out) in outputs.into_iter().enumerate() {
        let out = out?;
        if let Some(dump) = out.dump {
            println!("# sentence {}", i + 1);
            print!("{dump}");
        }
        for row in out.trace {
            println!(
                "{},{},{:.6e},{:.6e},{:.6}",
                i + 1,
                row.iter,
                row.primal,
                row.dual,
                row.objective
            );
        }
        debug_assert!(decoder::is_tree(&out.tree.heads));
        heads.push(out.tree.heads);
    }
    files::write_conllu(&args.output, &sentences, &heads)?;
    Ok(())
}

fn parse_one(
    sentence: &Sentence,
    vocab: &Vocabulary,
    params: &ScorerParams,
    settings: &ParseSettings,
    args: &ParseArgs,
) -> Result<SentenceOutput> {
    let tape =
        scorer::forward(sentence, vocab, params).map_err(|e| anyhow::anyhow!("{e}"))?;
    let need_graph = settings.high_order || args.dump_factor_graph;
    let graph = need_graph.then(|| {
        factor_graph::build(
            sentence.len(),
            &tape.scores,
            settings.include_backward,
            settings.score_split,
        )
    });
    let mut trace = Vec::new();
    let map = match (&graph, settings.high_order) {
        (Some(graph), true) => {
            let mut sink = |row: TraceRow| trace.push(row);
            let cb: Option<&mut dyn FnMut(TraceRow)> =
                if args.trace_admm { Some(&mut sink) } else { None };
            Some(
                admm::run_traced(graph, &settings.admm, cb)
                    .map_err(|e| anyhow::anyhow!("{e}"))?,
            )
        }
        _ => None,
    };
    let dist = decoder::head_distribution(&tape.scores, map.as_ref(), settings.beta);
    let tree = hodep_core::pipeline::decode(&dist);
    Ok(SentenceOutput {
        tree,
        dump: args.dump_factor_graph.then(|| graph.as_ref().unwrap().dump()),
        trace,
    })
}

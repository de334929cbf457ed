//! File-level wrappers around the core's text and byte formats.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use hodep_core::corpus::{self, Sentence, Vocabulary};
use hodep_core::model_io;
use hodep_core::scorer::ScorerParams;

pub fn load_conllu(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    corpus::parse_conllu(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn write_conllu(path: &Path, sentences: &[Sentence], heads: &[Vec<usize>]) -> Result<()> {
    debug_assert_eq!(sentences.len(), heads.len());
    let mut out = String::new();
    for (s, h) in sentences.iter().zip(heads) {
        out.push_str(&corpus::sentence_to_conllu(s, Some(h)));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Vocabulary::from_text(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    fs::write(path, vocab.to_text()).with_context(|| format!("writing {}", path.display()))
}

pub fn load_model(path: &Path) -> Result<ScorerParams> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    model_io::params_from_bytes(&bytes).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn save_model(path: &Path, params: &ScorerParams) -> Result<()> {
    fs::write(path, model_io::params_to_bytes(params))
        .with_context(|| format!("writing {}", path.display()))
}

/// The model must have been built against this vocabulary.
pub fn check_model_vocab(params: &ScorerParams, vocab: &Vocabulary) -> Result<()> {
    if params.config.word_vocab != vocab.word_count()
        || params.config.pos_vocab != vocab.pos_count()
    {
        anyhow::bail!(
            "model/vocab mismatch: model expects {} words / {} tags, vocabulary has {} / {}",
            params.config.word_vocab,
            params.config.pos_vocab,
            vocab.word_count(),
            vocab.pos_count()
        );
    }
    Ok(())
}

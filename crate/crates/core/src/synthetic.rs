//! Deterministic synthetic treebank generation for smoke tests and demos.
//!
//! Sentences follow a small English-like grammar (noun phrases with
//! optional determiners and adjectives, a verb, an optional object, and
//! prepositional-phrase chains) with head rules in the Universal
//! Dependencies style (content heads, prepositions as case markers on
//! their noun). Two deliberate difficulty knobs keep the task from being
//! trivially saturable:
//!
//! * PP attachment is lexically conditioned: some prepositions attach to
//!   the verb, some to the nearest noun, and one is irreducibly ambiguous
//!   (an unlearnable coin flip), so no parser reaches 100% UAS.
//! * Sentences stretched past 20 tokens can follow a divergent annotation
//!   convention (flat left-headed chains instead of the grammar above),
//!   emulating the inconsistently annotated long tail of real treebanks:
//!   filtering long sentences out of training should help, not hurt.

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::corpus::Sentence;

const DETERMINERS: &[&str] = &["the", "a", "this", "that", "every"];
const ADJECTIVES: &[&str] = &[
    "big", "small", "red", "old", "young", "quiet", "bright", "strange",
];
const NOUNS: &[&str] = &[
    "dog", "cat", "bird", "house", "tree", "river", "child", "teacher", "book", "city", "garden",
    "window",
];
const VERBS: &[&str] = &[
    "sees", "likes", "chases", "finds", "watches", "follows", "paints", "reads",
];
const ADVERBS: &[&str] = &["quickly", "slowly", "quietly", "often"];
/// Attach to the verb.
const VERB_PREPS: &[&str] = &["in", "on"];
/// Attach to the nearest preceding noun.
const NOUN_PREPS: &[&str] = &["near", "behind"];
/// Attachment is a fair coin: irreducible ambiguity.
const AMBIGUOUS_PREP: &str = "under";

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub sentences: usize,
    pub seed: u64,
    /// Fraction of sentences stretched past 20 tokens by chained modifiers.
    pub long_fraction: f64,
    /// Give long sentences the divergent chain annotation.
    pub noisy_long: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 500,
            seed: 0,
            long_fraction: 0.2,
            noisy_long: true,
        }
    }
}

struct Builder {
    tokens: Vec<&'static str>,
    pos: Vec<&'static str>,
    /// 1-based head positions, 0 = root.
    heads: Vec<usize>,
}

impl Builder {
    fn push(&mut self, token: &'static str, pos: &'static str, head: usize) -> usize {
        self.tokens.push(token);
        self.pos.push(pos);
        self.heads.push(head);
        self.tokens.len()
    }

    /// (DET)? (ADJ)* NOUN attached to `head`; returns the noun position.
    fn noun_phrase(&mut self, rng: &mut ChaCha12Rng, head: usize, max_adjs: usize) -> usize {
        let det = rng
            .gen_bool(0.7)
            .then(|| self.push(pick(rng, DETERMINERS), "DET", 0)); // patched below
        let adj_count = rng.gen_range(0..=max_adjs);
        let mut adjs = Vec::new();
        for _ in 0..adj_count {
            adjs.push(self.push(pick(rng, ADJECTIVES), "ADJ", 0));
        }
        let noun = self.push(pick(rng, NOUNS), "NOUN", head);
        if let Some(d) = det {
            self.heads[d - 1] = noun;
        }
        for a in adjs {
            self.heads[a - 1] = noun;
        }
        noun
    }

    /// PREP NP; the preposition marks the inner noun, the noun attaches to
    /// the verb or the nearest noun depending on the preposition.
    fn prep_phrase(&mut self, rng: &mut ChaCha12Rng, verb: usize, nearest_noun: usize) -> usize {
        let (word, attach_to_verb) = match rng.gen_range(0..5) {
            0 | 1 => (pick(rng, VERB_PREPS), true),
            2 | 3 => (pick(rng, NOUN_PREPS), false),
            _ => (AMBIGUOUS_PREP, rng.gen_bool(0.5)),
        };
        let target = if attach_to_verb { verb } else { nearest_noun };
        let prep = self.push(word, "ADP", 0);
        let noun = self.noun_phrase(rng, target, 1);
        self.heads[prep - 1] = noun;
        noun
    }
}

fn pick<'a>(rng: &mut ChaCha12Rng, options: &[&'a str]) -> &'a str {
    options[rng.gen_range(0..options.len())]
}

fn grammatical_sentence(rng: &mut ChaCha12Rng, long: bool) -> Sentence {
    let mut b = Builder {
        tokens: Vec::new(),
        pos: Vec::new(),
        heads: Vec::new(),
    };
    let subject = b.noun_phrase(rng, 0, 2);
    let verb = b.push(pick(rng, VERBS), "VERB", 0);
    b.heads[subject - 1] = verb;
    let mut nearest_noun = subject;
    if rng.gen_bool(0.8) {
        nearest_noun = b.noun_phrase(rng, verb, 1);
    }
    if rng.gen_bool(0.4) {
        b.push(pick(rng, ADVERBS), "ADV", verb);
    }
    let pp_count = if long {
        rng.gen_range(5..9)
    } else {
        rng.gen_range(0..2)
    };
    for _ in 0..pp_count {
        nearest_noun = b.prep_phrase(rng, verb, nearest_noun);
    }
    Sentence::new(
        b.tokens.iter().map(|t| t.to_string()).collect(),
        b.pos.iter().map(|p| p.to_string()).collect(),
        b.heads,
    )
    .expect("grammar emits trees")
}

/// The divergent long-sentence convention: a flat chain where every token
/// is headed by its left neighbor (always a tree rooted at 0).
fn chain_heads(sentence: &mut Sentence) {
    for j in 1..=sentence.len() {
        sentence.gold_heads[j - 1] = j - 1;
    }
}

pub fn generate(config: &SynthConfig) -> Vec<Sentence> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    (0..config.sentences)
        .map(|_| {
            let long = rng.gen_bool(config.long_fraction);
            let mut s = grammatical_sentence(&mut rng, long);
            if long && config.noisy_long && s.len() > 20 {
                chain_heads(&mut s);
            }
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::is_tree;

    #[test]
    fn generated_sentences_are_valid_trees() {
        let corpus = generate(&SynthConfig {
            sentences: 200,
            seed: 1,
            ..SynthConfig::default()
        });
        assert_eq!(corpus.len(), 200);
        for s in &corpus {
            assert!(is_tree(&s.gold_heads));
            assert!(s.len() >= 2);
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let c = SynthConfig {
            sentences: 50,
            seed: 9,
            ..SynthConfig::default()
        };
        assert_eq!(generate(&c), generate(&c));
        let other = generate(&SynthConfig { seed: 10, ..c });
        assert_ne!(generate(&c), other);
    }

    #[test]
    fn long_fraction_produces_long_sentences() {
        let corpus = generate(&SynthConfig {
            sentences: 300,
            seed: 2,
            long_fraction: 0.3,
            noisy_long: true,
        });
        let long = corpus.iter().filter(|s| s.len() > 20).count();
        assert!(long > 30, "only {long} long sentences");
        let short = corpus.iter().filter(|s| s.len() <= 20).count();
        assert!(short > 150, "only {short} short sentences");
    }

    #[test]
    fn noisy_long_sentences_follow_the_chain_convention() {
        let corpus = generate(&SynthConfig {
            sentences: 300,
            seed: 3,
            long_fraction: 0.3,
            noisy_long: true,
        });
        let long: Vec<_> = corpus.iter().filter(|s| s.len() > 20).collect();
        assert!(!long.is_empty());
        for s in long {
            for j in 1..=s.len() {
                assert_eq!(s.gold_heads[j - 1], j - 1);
            }
        }
    }
}

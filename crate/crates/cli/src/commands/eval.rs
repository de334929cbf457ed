use anyhow::Result;

use crate::args::EvalArgs;
use crate::files;

pub fn run(args: &EvalArgs) -> Result<()> {
    let gold = files::load_conllu(&args.gold)?;
    let pred = files::load_conllu(&args.pred)?;
    if gold.is_empty() {
        anyhow::bail!("empty corpus: UAS is undefined");
    }
    if gold.len() != pred.len() {
        anyhow::bail!(
            "alignment mismatch: {} gold sentences vs {} predicted",
            gold.len(),
            pred.len()
        );
    }
    let mut correct = 0usize;
    let mut tokens = 0usize;
    for (i, (g, p)) in gold.iter().zip(&pred).enumerate() {
        if g.len() != p.len() {
            anyhow::bail!(
                "alignment mismatch at sentence {}: {} gold tokens vs {} predicted",
                i + 1,
                g.len(),
                p.len()
            );
        }
        correct += g
            .gold_heads
            .iter()
            .zip(&p.gold_heads)
            .filter(|(a, b)| a == b)
            .count();
        tokens += g.len();
    }
    println!("{:.4}", correct as f64 / tokens as f64);
    Ok(())
}

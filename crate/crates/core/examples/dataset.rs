//! Sub-task and retrieval datasets from the labeled corpus.
//!
//!     cargo run --example dataset -- out/
//!
//! Writes create_flow.jsonl, populate_inputs.jsonl, retrieval.jsonl and
//! teacher_forced.jsonl, plus prompts.jsonl with rendered prompt/completion
//! pairs, into the given directory (default: a temp dir).

use flowforge::catalog::EnvironmentCatalog;
use flowforge::dataset::{
    derive_retrieval_samples, gold_presence, inject_teacher_forcing, load_corpus, render_samples, split_create_flow,
    split_populate_inputs, write_jsonl, CanonicalPrompt,
};
use flowforge::fixtures::{demo_catalog_dir, demo_corpus_dir};
use flowforge::retriever::{LexicalIndex, DEFAULT_K};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("flowforge-dataset"));
    std::fs::create_dir_all(&out)?;
    let catalog = EnvironmentCatalog::load(demo_catalog_dir())?;
    let corpus = load_corpus(demo_corpus_dir())?;

    let create = split_create_flow(&corpus, &catalog)?;
    let populate = split_populate_inputs(&corpus, &catalog)?;
    let retrieval = derive_retrieval_samples(&corpus, &catalog);
    let index = LexicalIndex::build(&catalog);
    let forced = inject_teacher_forcing(&retrieval, &index, DEFAULT_K);

    write_jsonl(out.join("create_flow.jsonl"), &create)?;
    write_jsonl(out.join("populate_inputs.jsonl"), &populate)?;
    write_jsonl(out.join("retrieval.jsonl"), &retrieval)?;
    write_jsonl(out.join("teacher_forced.jsonl"), &forced)?;
    let prompts = render_samples(&create, &populate, &CanonicalPrompt);
    write_jsonl(out.join("prompts.jsonl"), &prompts)?;

    println!("{} workflows -> {}", corpus.len(), out.display());
    println!("create_flow      {:>4}", create.len());
    println!("populate_inputs  {:>4}", populate.len());
    println!("retrieval        {:>4}", retrieval.len());
    println!("prompts          {:>4}", prompts.len());
    println!(
        "teacher_forced   {:>4} ({} forced, gold presence {:.3})",
        forced.len(),
        forced.iter().filter(|t| t.forced).count(),
        gold_presence(&forced)
    );
    Ok(())
}

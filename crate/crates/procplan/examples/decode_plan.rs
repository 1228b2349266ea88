//! Hard Viterbi decoding over a hand-built graph, checked against the
//! exhaustive oracle, plus transition-only beam search.

use procplan::linalg::Mat;
use procplan::pkg::{build_graph, SequenceCorpus};
use procplan::taxonomy::ActionTaxonomy;
use procplan::viterbi::{beam_search, brute_force_best, viterbi_decode, DEFAULT_LOG_FLOOR};

fn main() -> procplan::Result<()> {
    let corpus = SequenceCorpus::untasked(
        ActionTaxonomy::with_size(4),
        vec![vec![0, 1, 2, 3], vec![0, 2, 3, 1], vec![0, 1, 3, 2]],
    )?;
    let graph = build_graph(&corpus, 0.1)?;

    // Rows are steps, columns actions: how well each action explains the
    // (here invented) observation at each step.
    let emissions = Mat::from_rows(&[
        vec![0.7, 0.1, 0.1, 0.1],
        vec![0.2, 0.5, 0.2, 0.1],
        vec![0.1, 0.2, 0.4, 0.3],
    ]);

    let (plan, trellis) = viterbi_decode(&graph, &emissions, DEFAULT_LOG_FLOOR)?;
    println!("decoded plan {:?}, log score {:.4}", plan.actions, plan.log_score);
    println!("backpointers per step: {:?}", trellis.psi);

    let oracle = brute_force_best(&graph, &emissions, DEFAULT_LOG_FLOOR)?;
    assert_eq!(plan.actions, oracle.actions);
    println!("matches the exhaustive search over all 4^3 paths");

    // Beam search plans between a start and goal action using transitions
    // alone -- no emission model needed.
    let beam = beam_search(&graph, 0, 3, 4, 3)?;
    println!(
        "beam 0 -> 3: {:?} (reached goal: {}, used floor: {})",
        beam.plan.actions, beam.reached_goal, beam.used_floor
    );
    Ok(())
}

//! The relaxed decoder: soft backpointers, the composed soft plan, the
//! collapse to hard decoding as temperature shrinks, and the gradient it
//! provides to whatever produced the emissions.

use procplan::dvl::{compose_soft_plan, dvl_backward, dvl_forward, SmoothConfig};
use procplan::linalg::Mat;
use procplan::losses::plan_loss;
use procplan::pkg::{build_graph, SequenceCorpus};
use procplan::taxonomy::ActionTaxonomy;
use procplan::viterbi::{viterbi_decode, DEFAULT_LOG_FLOOR};

fn main() -> procplan::Result<()> {
    let corpus = SequenceCorpus::untasked(
        ActionTaxonomy::with_size(4),
        vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 2, 3]],
    )?;
    let graph = build_graph(&corpus, 0.2)?;
    let emissions = Mat::from_rows(&[
        vec![0.6, 0.3, 0.05, 0.05],
        vec![0.2, 0.4, 0.3, 0.1],
        vec![0.1, 0.1, 0.5, 0.3],
    ]);

    let (hard, _) = viterbi_decode(&graph, &emissions, DEFAULT_LOG_FLOOR)?;
    println!("hard plan: {:?}", hard.actions);

    for temperature in [2.0, 1.0, 0.1, 1e-6] {
        let cfg = SmoothConfig::with_temperature(temperature);
        let trellis = dvl_forward(&graph, &emissions, cfg)?;
        let soft = compose_soft_plan(&trellis, cfg);
        println!("tau = {temperature}:");
        for (t, row) in soft.probs.iter_rows().enumerate() {
            let pretty: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
            println!("  step {t}: [{}]", pretty.join(", "));
        }
        println!("  per-step argmax: {:?}", soft.argmax_plan());
    }

    // Gradient of a plan-matching loss flows back through the decoder to
    // the emissions -- this is what lets a network train through it.
    let cfg = SmoothConfig::with_temperature(1.0);
    let trellis = dvl_forward(&graph, &emissions, cfg)?;
    let soft = compose_soft_plan(&trellis, cfg);
    let target = vec![0usize, 1, 2];
    let (loss, g_plan) = plan_loss(&soft.probs, &target)?;
    let g_emissions = dvl_backward(&trellis, &g_plan)?;
    println!("loss against {target:?}: {loss:.4}");
    println!(
        "d loss / d emissions, step 0: {:?}",
        g_emissions.row(0).iter().map(|g| (g * 1e3).round() / 1e3).collect::<Vec<_>>()
    );
    Ok(())
}

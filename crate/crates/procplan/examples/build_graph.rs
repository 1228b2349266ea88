//! Estimate a transition graph from a tiny plan corpus, score its
//! coverage, then corrupt it and watch coverage fall.

use procplan::pkg::{build_graph, corrupt_graph, coverage, SequenceCorpus};
use procplan::taxonomy::ActionTaxonomy;

fn main() -> procplan::Result<()> {
    let taxonomy = ActionTaxonomy::new(vec![
        "crack eggs".into(),
        "whisk".into(),
        "heat pan".into(),
        "pour batter".into(),
        "flip".into(),
        "serve".into(),
    ])?;

    let corpus = SequenceCorpus::untasked(
        taxonomy,
        vec![
            vec![0, 1, 2, 3, 4, 5],
            vec![0, 1, 3, 4, 5],
            vec![2, 0, 1, 3, 4],
            vec![0, 1, 2, 3, 4],
            vec![2, 3, 4, 5],
            vec![0, 2, 1, 3, 5],
            vec![1, 2, 3, 5],
            vec![0, 1, 2, 4, 5],
        ],
    )?;

    let graph = build_graph(&corpus, 0.0)?;
    println!("{} actions, {} edges, sink rows {:?}", graph.n(), graph.edge_count(), graph.sink_rows());
    for (i, name) in graph.taxonomy.names().iter().enumerate() {
        let row: Vec<String> = graph
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(j, w)| format!("{} {:.2}", graph.taxonomy.name(j).unwrap(), w))
            .collect();
        println!("  {name:12} -> {}", row.join(", "));
    }

    println!("self-coverage: {:.3}", coverage(&graph, &corpus)?);

    for dropout in [0.1, 0.3, 0.5] {
        let corrupted = corrupt_graph(&graph, dropout, 0.05, 42)?;
        println!(
            "dropout {dropout}: {} edges left, coverage {:.3}",
            corrupted.edge_count(),
            coverage(&corrupted, &corpus)?
        );
    }
    Ok(())
}

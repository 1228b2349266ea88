//! How much decoding quality survives when the transition graph used at
//! inference loses random edges. Training always sees the clean graph.

use procplan::harness::{robustness_sweep, sample_efficiency_sweep, BenchParams};
use procplan::train::TrainConfig;

fn main() -> procplan::Result<()> {
    let params = BenchParams {
        n_actions: 12,
        n_tasks: 3,
        embed_dim: 16,
        n_train: 120,
        n_test: 60,
        ..BenchParams::default()
    };
    let cfg = TrainConfig { epochs: 40, hidden_dim: 32, ..TrainConfig::default() };
    let seeds = [0, 1];

    println!("edge dropout   SR");
    for p in robustness_sweep(&params, &cfg, &[0.0, 0.1, 0.3, 0.5], &seeds)? {
        println!("      {:>4}   {:>6.2}", p.edge_dropout, p.sr_mean);
    }

    // The companion sweep: how both variants scale with training data.
    println!("\ntraining fraction   base SR   decoder-trained SR");
    for p in sample_efficiency_sweep(&params, &cfg, &[0.25, 0.5, 1.0], &seeds)? {
        println!("           {:>5}   {:>7.2}   {:>7.2}", p.x, p.base_sr_mean, p.dvl_sr_mean);
    }
    Ok(())
}

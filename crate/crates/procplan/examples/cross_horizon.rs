//! Train both variants at horizon 5 and evaluate on prefixes of length 3
//! and 4: the graph constraint keeps helping below the trained horizon.

use procplan::harness::{cross_horizon_sweep, BenchParams};
use procplan::train::TrainConfig;

fn main() -> procplan::Result<()> {
    let params = BenchParams {
        n_actions: 12,
        n_tasks: 3,
        embed_dim: 16,
        horizon: 5,
        n_train: 120,
        n_test: 60,
        ..BenchParams::default()
    };
    let cfg = TrainConfig { epochs: 40, hidden_dim: 32, ..TrainConfig::default() };

    let points = cross_horizon_sweep(&params, &cfg, &[3, 4, 5], &[0, 1])?;
    println!("test horizon   base SR   decoder-trained SR");
    for p in points {
        println!("      {:>3}      {:>7.2}   {:>7.2}", p.x, p.base_sr_mean, p.dvl_sr_mean);
    }
    Ok(())
}

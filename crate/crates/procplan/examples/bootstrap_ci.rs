//! Percentile-bootstrap confidence intervals over seed-level scores, and
//! the paired comparison used to call a margin significant.

use procplan::bootstrap::{
    bootstrap_compare, bootstrap_compare_paired, bootstrap_single, DEFAULT_ALPHA,
    DEFAULT_K_COMPARE, DEFAULT_K_SINGLE,
};

fn main() -> procplan::Result<()> {
    // Success rates of one model across five seeds.
    let model_a = [38.2, 41.5, 37.9, 40.3, 39.6];
    let model_b = [35.0, 36.8, 34.1, 37.2, 35.9];

    let report = bootstrap_single(&model_a, DEFAULT_K_SINGLE, DEFAULT_ALPHA, 0)?;
    println!("model A: {}", report.summary());

    // Independent resampling of each side.
    let indep = bootstrap_compare(&model_a, &model_b, DEFAULT_K_COMPARE, DEFAULT_ALPHA, 0)?;
    println!(
        "independent: delta {:+.2}, CI [{:.2}, {:.2}], significant {}",
        indep.delta_obs, indep.ci_low, indep.ci_high, indep.significant
    );

    // Paired: both scores at an index come from the same seed, so the
    // per-seed differences are resampled and seed-level noise cancels.
    let paired = bootstrap_compare_paired(&model_a, &model_b, DEFAULT_K_COMPARE, DEFAULT_ALPHA, 0)?;
    println!(
        "paired:      delta {:+.2}, CI [{:.2}, {:.2}], significant {}",
        paired.delta_obs, paired.ci_low, paired.ci_high, paired.significant
    );

    // Identical scores have no resampling variance at all.
    let constant = bootstrap_single(&[50.0; 5], DEFAULT_K_SINGLE, DEFAULT_ALPHA, 0)?;
    println!("constant scores: CI width {}", constant.ci_width);
    Ok(())
}

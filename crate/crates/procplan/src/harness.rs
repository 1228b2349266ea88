//! Experiment harness shared by the command-line benchmarks and the
//! integration suite: the desk-scale synthetic benchmark, the ablation
//! grid of training variants x inference modes, and the three sweeps
//! (sample efficiency, cross-horizon, graph robustness).

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_compare_paired, BootstrapComparison, DEFAULT_ALPHA, DEFAULT_K_COMPARE};
use crate::error::Result;
use crate::linalg::Mat;
use crate::metrics::EvalReport;
use crate::model::EmissionNet;
use crate::pkg::{build_graph, corrupt_graph, TransitionMatrix};
use crate::synth::{
    dataset_corpus, extract_subhorizon, generate_world, sample_instances, training_subset,
    Dataset, SyntheticWorld, DEFAULT_EMBED_DIM, DEFAULT_N_ACTIONS, DEFAULT_N_TASKS,
    DEFAULT_TEST_INSTANCES, DEFAULT_TRAIN_INSTANCES,
};
use crate::train::{evaluate_on, train, InferenceMode, TrainConfig, TrainResult};

/// Everything one experiment needs: the generating world, train/test
/// splits, the transition graph estimated from the training plans, and
/// the description table for the alignment loss.
pub struct BenchSetup {
    pub world: SyntheticWorld,
    pub train_data: Dataset,
    pub test_data: Dataset,
    pub graph: TransitionMatrix,
    pub descriptions: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchParams {
    pub n_actions: usize,
    pub n_tasks: usize,
    pub embed_dim: usize,
    pub horizon: usize,
    pub branching: f64,
    pub sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub smoothing: f64,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            n_actions: DEFAULT_N_ACTIONS,
            n_tasks: DEFAULT_N_TASKS,
            embed_dim: DEFAULT_EMBED_DIM,
            horizon: 3,
            branching: 2.0,
            sigma: 0.35,
            n_train: DEFAULT_TRAIN_INSTANCES,
            n_test: DEFAULT_TEST_INSTANCES,
            smoothing: 0.5,
        }
    }
}

pub fn description_table(world: &SyntheticWorld) -> Mat {
    let mut d = Mat::zeros(world.n_contexts(), world.embed_dim);
    for c in 0..world.n_contexts() {
        d.row_mut(c).copy_from_slice(world.context_vector(c));
    }
    d
}

pub fn make_benchmark(params: &BenchParams, seed: u64) -> Result<BenchSetup> {
    let world = generate_world(
        params.n_actions,
        params.n_tasks,
        params.embed_dim,
        params.branching,
        params.sigma,
        seed,
    )?;
    let per_train = params.n_train.div_ceil(params.n_tasks);
    let per_test = params.n_test.div_ceil(params.n_tasks);
    let train_data: Dataset = sample_instances(&world, per_train, params.horizon, seed ^ 0xa5a5)?
        .into_iter()
        .take(params.n_train)
        .collect();
    let test_data: Dataset = sample_instances(&world, per_test, params.horizon, seed ^ 0x5a5a)?
        .into_iter()
        .take(params.n_test)
        .collect();
    let graph = build_graph(&dataset_corpus(&world, &train_data)?, params.smoothing)?;
    let descriptions = description_table(&world);
    Ok(BenchSetup { world, train_data, test_data, graph, descriptions })
}

/// Train one variant on the setup's training data.
pub fn train_variant(setup: &BenchSetup, use_dvl: bool, base: &TrainConfig, seed: u64) -> Result<TrainResult> {
    let cfg = TrainConfig { use_dvl, seed, ..*base };
    train(&setup.train_data, &setup.graph, &setup.descriptions, &cfg)
}

/// One row of the ablation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub conf: usize,
    pub trained_with_dvl: bool,
    pub mode: String,
    pub report: EvalReport,
}

pub const ABLATION_MODES: [InferenceMode; 4] = [
    InferenceMode::ArgmaxEmissions,
    InferenceMode::VdOnEmissions,
    InferenceMode::ArgmaxDvl,
    InferenceMode::VdOnDvl,
];

/// The 8-configuration grid: confs 1-4 are the base-trained network under
/// the four inference modes, confs 5-8 the decoder-trained network.
pub fn ablation_grid(
    setup: &BenchSetup,
    base_net: &EmissionNet,
    dvl_net: &EmissionNet,
    temperature: f64,
    log_floor: f64,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(8);
    for (k, (net, trained_with_dvl)) in [(base_net, false), (dvl_net, true)].into_iter().enumerate() {
        for (m, &mode) in ABLATION_MODES.iter().enumerate() {
            let report = evaluate_on(net, &setup.graph, &setup.test_data, mode, temperature, log_floor)?;
            rows.push(AblationRow {
                conf: k * 4 + m + 1,
                trained_with_dvl,
                mode: mode.to_string(),
                report,
            });
        }
    }
    Ok(rows)
}

/// Per-seed test SR of the base variant (argmax over emissions, conf 1)
/// and the structure-aware variant (hard decoding over the soft plan,
/// conf 8), plus their paired comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seeds: Vec<u64>,
    pub base_sr: Vec<f64>,
    pub dvl_sr: Vec<f64>,
    pub comparison: BootstrapComparison,
}

pub fn compare_over_seeds(
    params: &BenchParams,
    train_cfg: &TrainConfig,
    seeds: &[u64],
    base_mode: InferenceMode,
    dvl_mode: InferenceMode,
) -> Result<SeedComparison> {
    let mut base_sr = Vec::with_capacity(seeds.len());
    let mut dvl_sr = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let setup = make_benchmark(params, seed)?;
        let base = train_variant(&setup, false, train_cfg, seed)?;
        let dvl = train_variant(&setup, true, train_cfg, seed)?;
        let rb = evaluate_on(&base.net, &setup.graph, &setup.test_data, base_mode, train_cfg.temperature, train_cfg.log_floor)?;
        let rd = evaluate_on(&dvl.net, &setup.graph, &setup.test_data, dvl_mode, train_cfg.temperature, train_cfg.log_floor)?;
        base_sr.push(rb.sr);
        dvl_sr.push(rd.sr);
    }
    let comparison = bootstrap_compare_paired(&dvl_sr, &base_sr, DEFAULT_K_COMPARE, DEFAULT_ALPHA, 0)?;
    Ok(SeedComparison { seeds: seeds.to_vec(), base_sr, dvl_sr, comparison })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    pub base_sr_mean: f64,
    pub dvl_sr_mean: f64,
    pub base_sr: Vec<f64>,
    pub dvl_sr: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Test SR of both variants trained on nested fractions of the training
/// data, averaged over seeds.
pub fn sample_efficiency_sweep(
    params: &BenchParams,
    train_cfg: &TrainConfig,
    fractions: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::with_capacity(fractions.len());
    for &frac in fractions {
        let mut base_sr = Vec::new();
        let mut dvl_sr = Vec::new();
        for &seed in seeds {
            let full = make_benchmark(params, seed)?;
            let subset = training_subset(&full.train_data, frac)?;
            // The graph is rebuilt from the reduced corpus as well.
            let graph = build_graph(&dataset_corpus(&full.world, &subset)?, params.smoothing)?;
            let setup = BenchSetup { graph, train_data: subset, ..full };
            let base = train_variant(&setup, false, train_cfg, seed)?;
            let dvl = train_variant(&setup, true, train_cfg, seed)?;
            base_sr.push(
                evaluate_on(&base.net, &setup.graph, &setup.test_data, InferenceMode::ArgmaxEmissions, train_cfg.temperature, train_cfg.log_floor)?.sr,
            );
            dvl_sr.push(
                evaluate_on(&dvl.net, &setup.graph, &setup.test_data, InferenceMode::VdOnDvl, train_cfg.temperature, train_cfg.log_floor)?.sr,
            );
        }
        points.push(SweepPoint {
            x: frac,
            base_sr_mean: mean(&base_sr),
            dvl_sr_mean: mean(&dvl_sr),
            base_sr,
            dvl_sr,
        });
    }
    Ok(points)
}

/// Train both variants at `params.horizon` and evaluate on prefix
/// datasets at each shorter test horizon.
pub fn cross_horizon_sweep(
    params: &BenchParams,
    train_cfg: &TrainConfig,
    test_horizons: &[usize],
    seeds: &[u64],
) -> Result<Vec<SweepPoint>> {
    let mut per_seed: Vec<(BenchSetup, EmissionNet, EmissionNet)> = Vec::new();
    for &seed in seeds {
        let setup = make_benchmark(params, seed)?;
        let base = train_variant(&setup, false, train_cfg, seed)?.net;
        let dvl = train_variant(&setup, true, train_cfg, seed)?.net;
        per_seed.push((setup, base, dvl));
    }
    let mut points = Vec::with_capacity(test_horizons.len());
    for &t_test in test_horizons {
        let mut base_sr = Vec::new();
        let mut dvl_sr = Vec::new();
        for (i, (setup, base, dvl)) in per_seed.iter().enumerate() {
            let sub = extract_subhorizon(&setup.world, &setup.test_data, t_test, seeds[i] ^ 0x77)?;
            base_sr.push(
                evaluate_on(base, &setup.graph, &sub, InferenceMode::ArgmaxEmissions, train_cfg.temperature, train_cfg.log_floor)?.sr,
            );
            dvl_sr.push(
                evaluate_on(dvl, &setup.graph, &sub, InferenceMode::VdOnDvl, train_cfg.temperature, train_cfg.log_floor)?.sr,
            );
        }
        points.push(SweepPoint {
            x: t_test as f64,
            base_sr_mean: mean(&base_sr),
            dvl_sr_mean: mean(&dvl_sr),
            base_sr,
            dvl_sr,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub edge_dropout: f64,
    pub sr_mean: f64,
    pub sr: Vec<f64>,
}

/// SR of decoder-trained networks when the graph used at inference is
/// corrupted by edge dropout. Training always uses the clean graph.
pub fn robustness_sweep(
    params: &BenchParams,
    train_cfg: &TrainConfig,
    dropouts: &[f64],
    seeds: &[u64],
) -> Result<Vec<RobustnessPoint>> {
    let mut per_seed: Vec<(BenchSetup, EmissionNet)> = Vec::new();
    for &seed in seeds {
        let setup = make_benchmark(params, seed)?;
        let dvl = train_variant(&setup, true, train_cfg, seed)?.net;
        per_seed.push((setup, dvl));
    }
    let mut points = Vec::with_capacity(dropouts.len());
    for &dropout in dropouts {
        let mut sr = Vec::new();
        for (i, (setup, net)) in per_seed.iter().enumerate() {
            let graph = if dropout == 0.0 {
                setup.graph.clone()
            } else {
                corrupt_graph(&setup.graph, dropout, 0.0, seeds[i] ^ 0xc0ffee)?
            };
            sr.push(
                evaluate_on(net, &graph, &setup.test_data, InferenceMode::VdOnDvl, train_cfg.temperature, train_cfg.log_floor)?.sr,
            );
        }
        points.push(RobustnessPoint { edge_dropout: dropout, sr_mean: mean(&sr), sr });
    }
    Ok(points)
}

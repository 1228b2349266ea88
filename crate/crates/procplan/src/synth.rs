//! Synthetic procedural benchmark generator: per-task ground-truth
//! transition structures, sampled plans, noisy start/goal embeddings,
//! stratified splits, and horizon extraction. Everything is deterministic
//! given its seed.
//!
//! Each task is a random chain over all actions (with wrap-around) plus
//! random branch edges up to the requested expected out-degree. Start and
//! goal embeddings are action-prototype vectors plus isotropic Gaussian
//! noise; the start embedding encodes the state *before* the first action
//! (the chain predecessor's prototype, or a per-task initial-state
//! prototype when the plan starts at the chain head).

use std::io::{BufRead, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::pkg::{SequenceCorpus, TransitionMatrix};
use crate::taxonomy::ActionTaxonomy;

/// Desk-scale defaults.
pub const DEFAULT_N_ACTIONS: usize = 24;
pub const DEFAULT_N_TASKS: usize = 6;
pub const DEFAULT_EMBED_DIM: usize = 32;
pub const DEFAULT_TRAIN_INSTANCES: usize = 500;
pub const DEFAULT_TEST_INSTANCES: usize = 200;

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub taxonomy: ActionTaxonomy,
    pub n_tasks: usize,
    pub embed_dim: usize,
    /// Per-task ground-truth transition matrices, row-stochastic.
    pub task_transitions: Vec<TransitionMatrix>,
    /// Per-task action order of the underlying chain.
    pub task_chains: Vec<Vec<usize>>,
    /// Unit-norm action prototypes, one row per action.
    pub prototypes: Mat,
    /// One initial-state prototype per task, for plans starting at the
    /// chain head.
    pub task_init_prototypes: Mat,
    pub sigma: f64,
    pub seed: u64,
}

impl SyntheticWorld {
    pub fn n_actions(&self) -> usize {
        self.taxonomy.len()
    }

    /// Context prototype for the state before action `a1` of `task`:
    /// the chain predecessor's prototype, or the task's initial-state
    /// prototype when `a1` is the chain head. Returns the row index into
    /// the stacked description table `[prototypes; task_init_prototypes]`.
    pub fn start_context(&self, task: usize, a1: usize) -> usize {
        let chain = &self.task_chains[task];
        let pos = chain.iter().position(|&a| a == a1).expect("action in chain");
        if pos == 0 {
            self.n_actions() + task
        } else {
            chain[pos - 1]
        }
    }

    /// Row `ctx` of the stacked description table.
    pub fn context_vector(&self, ctx: usize) -> &[f64] {
        let n = self.n_actions();
        if ctx < n {
            self.prototypes.row(ctx)
        } else {
            self.task_init_prototypes.row(ctx - n)
        }
    }

    pub fn n_contexts(&self) -> usize {
        self.n_actions() + self.n_tasks
    }
}

/// One planning query: observed start/goal embeddings, the ground-truth
/// plan, and the task label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanInstance {
    pub task: usize,
    pub actions: Vec<usize>,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    /// Index into the world's stacked context table for the true start
    /// context; used as the positive for the alignment loss.
    pub start_ctx: usize,
}

impl PlanInstance {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

pub type Dataset = Vec<PlanInstance>;

fn unit_rows(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for r in 0..rows {
        loop {
            let row = m.row_mut(r);
            for v in row.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
                break;
            }
        }
    }
    m
}

pub fn generate_world(
    n_actions: usize,
    n_tasks: usize,
    embed_dim: usize,
    branching: f64,
    sigma: f64,
    seed: u64,
) -> Result<SyntheticWorld> {
    if n_actions < 2 || n_tasks == 0 || embed_dim == 0 {
        return Err(Error::InvalidArgument(
            "need n_actions >= 2, n_tasks >= 1, embed_dim >= 1".into(),
        ));
    }
    if branching < 1.0 || branching > n_actions as f64 {
        return Err(Error::InvalidArgument(format!(
            "branching must be in [1, {n_actions}]"
        )));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidArgument("sigma must be >= 0".into()));
    }
    let taxonomy = ActionTaxonomy::with_size(n_actions);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mut task_transitions = Vec::with_capacity(n_tasks);
    let mut task_chains = Vec::with_capacity(n_tasks);
    // Probability of each non-chain edge, chosen so the expected
    // out-degree equals `branching` (the chain edge is always present).
    let extra_p = (branching - 1.0) / (n_actions as f64 - 1.0);
    for task in 0..n_tasks {
        let mut chain: Vec<usize> = (0..n_actions).collect();
        chain.shuffle(&mut rng);
        let mut rows = vec![vec![0.0f64; n_actions]; n_actions];
        for pos in 0..n_actions {
            let from = chain[pos];
            let succ = chain[(pos + 1) % n_actions];
            rows[from][succ] = rng.gen_range(0.5..1.5);
            for to in 0..n_actions {
                if to != succ && rng.gen::<f64>() < extra_p {
                    rows[from][to] = rng.gen_range(0.5..1.5);
                }
            }
            let sum: f64 = rows[from].iter().sum();
            for w in &mut rows[from] {
                *w /= sum;
            }
        }
        task_transitions.push(TransitionMatrix::from_weights(
            taxonomy.clone(),
            rows,
            0.0,
            format!("synthetic-task-{task}"),
        )?);
        task_chains.push(chain);
    }

    let prototypes = unit_rows(n_actions, embed_dim, &mut rng);
    let task_init_prototypes = unit_rows(n_tasks, embed_dim, &mut rng);
    for a in 0..n_actions {
        for b in (a + 1)..n_actions {
            let d: f64 = prototypes
                .row(a)
                .iter()
                .zip(prototypes.row(b))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            if d < 1e-12 {
                return Err(Error::Numerical("coinciding prototypes".into()));
            }
        }
    }

    Ok(SyntheticWorld {
        taxonomy,
        n_tasks,
        embed_dim,
        task_transitions,
        task_chains,
        prototypes,
        task_init_prototypes,
        sigma,
        seed,
    })
}

fn sample_row(row: &[f64], rng: &mut ChaCha12Rng) -> Option<usize> {
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut u = rng.gen::<f64>() * total;
    for (j, &w) in row.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return Some(j);
        }
    }
    Some(row.len() - 1)
}

fn noisy(base: &[f64], sigma: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return base.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma >= 0");
    base.iter().map(|&v| v + normal.sample(rng)).collect()
}

const SAMPLE_RETRY_CAP: usize = 100;

/// Sample `per_task` instances of horizon `t_len` for every task. Plans are
/// random walks of the task's transition matrix from a start action drawn
/// from the early quarter of the task's chain.
pub fn sample_instances(
    world: &SyntheticWorld,
    per_task: usize,
    t_len: usize,
    seed: u64,
) -> Result<Dataset> {
    if t_len == 0 || per_task == 0 {
        return Err(Error::InvalidArgument("need t_len >= 1 and per_task >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_start = (world.n_actions() / 4).max(1);
    let mut out = Vec::with_capacity(per_task * world.n_tasks);
    for task in 0..world.n_tasks {
        let graph = &world.task_transitions[task];
        let chain = &world.task_chains[task];
        for _ in 0..per_task {
            let mut actions = Vec::with_capacity(t_len);
            let mut tries = 0;
            loop {
                actions.clear();
                actions.push(chain[rng.gen_range(0..n_start)]);
                while actions.len() < t_len {
                    match sample_row(graph.row(*actions.last().unwrap()), &mut rng) {
                        Some(next) => actions.push(next),
                        None => break,
                    }
                }
                if actions.len() == t_len {
                    break;
                }
                tries += 1;
                if tries >= SAMPLE_RETRY_CAP {
                    return Err(Error::Validation(format!(
                        "task {task} has no length-{t_len} path after {SAMPLE_RETRY_CAP} attempts"
                    )));
                }
            }
            let start_ctx = world.start_context(task, actions[0]);
            let start = noisy(world.context_vector(start_ctx), world.sigma, &mut rng);
            let goal = noisy(
                world.prototypes.row(*actions.last().unwrap()),
                world.sigma,
                &mut rng,
            );
            out.push(PlanInstance { task, actions, start, goal, start_ctx });
        }
    }
    Ok(out)
}

/// Stratified train/test split. Within each task the instances are
/// shuffled once per (seed, task); the train side is the shuffled prefix,
/// so smaller fractions of the same split are nested subsets.
pub fn split(dataset: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&train_frac) || train_frac <= 0.0 {
        return Err(Error::InvalidArgument(
            "train_frac must be in (0, 1); frac = 1 leaves no test set".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let max_task = dataset.iter().map(|i| i.task).max().unwrap();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for task in 0..=max_task {
        let mut idx: Vec<usize> = dataset
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.task == task)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (task as u64).wrapping_mul(0x9e3779b97f4a7c15));
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64) * train_frac).round() as usize;
        let n_train = n_train.clamp(1, idx.len() - 1);
        for (k, &i) in idx.iter().enumerate() {
            if k < n_train {
                train.push(dataset[i].clone());
            } else {
                test.push(dataset[i].clone());
            }
        }
    }
    Ok((train, test))
}

/// Per-task prefix of a dataset in its current order: `frac` of each
/// task's instances. Applied to a split's train side, fractions nest:
/// the 10% subset is contained in the 25% subset.
pub fn training_subset(dataset: &Dataset, frac: f64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&frac) || frac <= 0.0 {
        return Err(Error::InvalidArgument("frac must be in (0, 1]".into()));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let max_task = dataset.iter().map(|i| i.task).max().unwrap();
    let mut out = Vec::new();
    for task in 0..=max_task {
        let of_task: Vec<&PlanInstance> =
            dataset.iter().filter(|inst| inst.task == task).collect();
        if of_task.is_empty() {
            continue;
        }
        let keep = ((of_task.len() as f64) * frac).ceil() as usize;
        out.extend(of_task.into_iter().take(keep.max(1)).cloned());
    }
    Ok(out)
}

/// Length-`t_test` prefix of each plan, with the goal embedding redrawn
/// from the new terminal action's prototype.
pub fn extract_subhorizon(
    world: &SyntheticWorld,
    dataset: &Dataset,
    t_test: usize,
    seed: u64,
) -> Result<Dataset> {
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if t_test == 0 || dataset.iter().any(|i| i.horizon() < t_test) {
        return Err(Error::InvalidArgument(format!(
            "t_test = {t_test} exceeds some plan horizon"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(dataset.len());
    for inst in dataset {
        let actions: Vec<usize> = inst.actions[..t_test].to_vec();
        let goal = noisy(
            world.prototypes.row(actions[t_test - 1]),
            world.sigma,
            &mut rng,
        );
        out.push(PlanInstance {
            task: inst.task,
            actions,
            start: inst.start.clone(),
            goal,
            start_ctx: inst.start_ctx,
        });
    }
    Ok(out)
}

/// All ground-truth plans as a corpus for graph building.
pub fn dataset_corpus(world: &SyntheticWorld, dataset: &Dataset) -> Result<SequenceCorpus> {
    SequenceCorpus::new(
        world.taxonomy.clone(),
        dataset.iter().map(|i| i.actions.clone()).collect(),
        dataset.iter().map(|i| i.task).collect(),
    )
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for inst in dataset {
        serde_json::to_writer(&mut f, inst)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: PlanInstance = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed(format!("line {}: {e}", lineno + 1)))?;
        if inst.actions.is_empty() || inst.start.len() != inst.goal.len() {
            return Err(Error::Malformed(format!("line {}: bad instance shape", lineno + 1)));
        }
        out.push(inst);
    }
    if out.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(out)
}

/// Serialized world: matrices and prototypes, enough to regenerate
/// embeddings and subhorizon datasets.
#[derive(Serialize, Deserialize)]
struct WorldFile {
    names: Vec<String>,
    n_tasks: usize,
    embed_dim: usize,
    transitions: Vec<Vec<Vec<f64>>>,
    chains: Vec<Vec<usize>>,
    prototypes: Mat,
    task_init_prototypes: Mat,
    sigma: f64,
    seed: u64,
}

pub fn write_world(path: &Path, world: &SyntheticWorld) -> Result<()> {
    let file = WorldFile {
        names: world.taxonomy.names().to_vec(),
        n_tasks: world.n_tasks,
        embed_dim: world.embed_dim,
        transitions: world
            .task_transitions
            .iter()
            .map(|g| (0..g.n()).map(|i| g.row(i).to_vec()).collect())
            .collect(),
        chains: world.task_chains.clone(),
        prototypes: world.prototypes.clone(),
        task_init_prototypes: world.task_init_prototypes.clone(),
        sigma: world.sigma,
        seed: world.seed,
    };
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, &file)?;
    Ok(())
}

pub fn read_world(path: &Path) -> Result<SyntheticWorld> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let file: WorldFile = serde_json::from_reader(f)?;
    let taxonomy = ActionTaxonomy::new(file.names)?;
    let mut task_transitions = Vec::with_capacity(file.transitions.len());
    for (task, rows) in file.transitions.into_iter().enumerate() {
        task_transitions.push(TransitionMatrix::from_weights(
            taxonomy.clone(),
            rows,
            0.0,
            format!("synthetic-task-{task}"),
        )?);
    }
    if task_transitions.len() != file.n_tasks || file.chains.len() != file.n_tasks {
        return Err(Error::Malformed("task count mismatch in world file".into()));
    }
    Ok(SyntheticWorld {
        taxonomy,
        n_tasks: file.n_tasks,
        embed_dim: file.embed_dim,
        task_transitions,
        task_chains: file.chains,
        prototypes: file.prototypes,
        task_init_prototypes: file.task_init_prototypes,
        sigma: file.sigma,
        seed: file.seed,
    })
}

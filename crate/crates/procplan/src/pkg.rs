//! Procedural knowledge graph: a fixed, row-stochastic transition model
//! estimated from action co-occurrence counts, plus coverage scoring,
//! controlled corruption, and a JSON serialization.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::ActionTaxonomy;

pub const ROW_SUM_TOL: f64 = 1e-9;

/// Training sequences over a fixed taxonomy. Each sequence is a list of
/// action ids of length >= 2, optionally tagged with a task label.
#[derive(Debug, Clone)]
pub struct SequenceCorpus {
    pub taxonomy: ActionTaxonomy,
    pub sequences: Vec<Vec<usize>>,
    pub tasks: Vec<usize>,
}

impl SequenceCorpus {
    pub fn new(taxonomy: ActionTaxonomy, sequences: Vec<Vec<usize>>, tasks: Vec<usize>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if tasks.len() != sequences.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} sequences but {} task labels",
                sequences.len(),
                tasks.len()
            )));
        }
        let n = taxonomy.len();
        for seq in &sequences {
            if seq.len() < 2 {
                return Err(Error::Validation("sequence shorter than 2 actions".into()));
            }
            for &id in seq {
                if id >= n {
                    return Err(Error::ActionOutOfRange { id, n });
                }
            }
        }
        Ok(Self { taxonomy, sequences, tasks })
    }

    pub fn untasked(taxonomy: ActionTaxonomy, sequences: Vec<Vec<usize>>) -> Result<Self> {
        let tasks = vec![0; sequences.len()];
        Self::new(taxonomy, sequences, tasks)
    }

    /// Keep only the sequences of one task (per-task graph building).
    pub fn filter_task(&self, task: usize) -> Result<Self> {
        let mut sequences = Vec::new();
        let mut tasks = Vec::new();
        for (seq, &t) in self.sequences.iter().zip(&self.tasks) {
            if t == task {
                sequences.push(seq.clone());
                tasks.push(t);
            }
        }
        Self::new(self.taxonomy.clone(), sequences, tasks)
    }

    fn content_hash(&self) -> String {
        // FNV-1a over the sequence stream; provenance tag only.
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: u64| {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.taxonomy.len() as u64);
        for seq in &self.sequences {
            eat(u64::MAX);
            for &id in seq {
                eat(id as u64);
            }
        }
        format!("{h:016x}")
    }
}

/// Line-delimited JSON corpus record: `{"task": int, "actions": [int,...]}`.
#[derive(Debug, Serialize, Deserialize)]
struct CorpusLine {
    task: usize,
    actions: Vec<usize>,
}

pub fn read_corpus(path: &Path, taxonomy: ActionTaxonomy) -> Result<SequenceCorpus> {
    let file = std::fs::File::open(path)?;
    let mut sequences = Vec::new();
    let mut tasks = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusLine = serde_json::from_str(&line)?;
        sequences.push(rec.actions);
        tasks.push(rec.task);
    }
    SequenceCorpus::new(taxonomy, sequences, tasks)
}

pub fn write_corpus(path: &Path, corpus: &SequenceCorpus) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    for (seq, &task) in corpus.sequences.iter().zip(&corpus.tasks) {
        let rec = CorpusLine { task, actions: seq.clone() };
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(())
}

/// Row-stochastic transition matrix over the action taxonomy. Rows with no
/// observed outgoing transition stay all-zero (sink rows) when smoothing
/// is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub taxonomy: ActionTaxonomy,
    weights: Vec<Vec<f64>>,
    pub smoothing: f64,
    pub source_corpus_hash: String,
}

impl TransitionMatrix {
    pub fn from_weights(
        taxonomy: ActionTaxonomy,
        weights: Vec<Vec<f64>>,
        smoothing: f64,
        source_corpus_hash: String,
    ) -> Result<Self> {
        let n = taxonomy.len();
        if weights.len() != n || weights.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!("expected {n}x{n} weights")));
        }
        let m = Self { taxonomy, weights, smoothing, source_corpus_hash };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.weights.iter().enumerate() {
            let mut sum = 0.0;
            for &w in row {
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::Validation(format!("weight out of [0,1] in row {i}")));
                }
                sum += w;
            }
            if sum != 0.0 && (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!("row {i} sums to {sum}, expected 0 or 1")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[from][to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.weights[from]
    }

    /// Rows with no outgoing transition at all.
    pub fn sink_rows(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, row)| row.iter().all(|&w| w == 0.0))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().flatten().filter(|&&w| w > 0.0).count()
    }
}

/// Estimate the transition matrix from bigram counts, with optional
/// additive (Laplace) smoothing per edge.
///
/// With `smoothing == 0`, rows that never appear as a predecessor stay
/// all-zero; with `smoothing > 0` every row is defined (sink rows become
/// uniform in the limit of no observations).
pub fn build_graph(corpus: &SequenceCorpus, smoothing: f64) -> Result<TransitionMatrix> {
    if smoothing < 0.0 {
        return Err(Error::InvalidArgument("smoothing must be >= 0".into()));
    }
    let n = corpus.taxonomy.len();
    let mut counts = vec![vec![0u64; n]; n];
    for seq in &corpus.sequences {
        for pair in seq.windows(2) {
            counts[pair[0]][pair[1]] += 1;
        }
    }
    let mut weights = vec![vec![0.0; n]; n];
    for i in 0..n {
        let observed: u64 = counts[i].iter().sum();
        if observed == 0 && smoothing == 0.0 {
            continue; // sink row
        }
        let denom = observed as f64 + smoothing * n as f64;
        for j in 0..n {
            weights[i][j] = (counts[i][j] as f64 + smoothing) / denom;
        }
    }
    TransitionMatrix::from_weights(
        corpus.taxonomy.clone(),
        weights,
        smoothing,
        corpus.content_hash(),
    )
}

/// Fraction of test sequences all of whose consecutive transitions have
/// nonzero weight in the graph.
pub fn coverage(graph: &TransitionMatrix, test_corpus: &SequenceCorpus) -> Result<f64> {
    if graph.n() != test_corpus.taxonomy.len() {
        return Err(Error::DimensionMismatch(format!(
            "graph over {} actions, corpus over {}",
            graph.n(),
            test_corpus.taxonomy.len()
        )));
    }
    let covered = test_corpus
        .sequences
        .iter()
        .filter(|seq| seq.windows(2).all(|p| graph.weight(p[0], p[1]) > 0.0))
        .count();
    Ok(covered as f64 / test_corpus.sequences.len() as f64)
}

/// Degrade a graph: drop each nonzero edge independently with probability
/// `edge_dropout`, perturb survivors with additive Gaussian noise, clamp
/// at zero and renormalize rows. Deterministic given the seed.
pub fn corrupt_graph(
    graph: &TransitionMatrix,
    edge_dropout: f64,
    weight_noise_sigma: f64,
    rng_seed: u64,
) -> Result<TransitionMatrix> {
    if !(0.0..1.0).contains(&edge_dropout) {
        return Err(Error::InvalidArgument("edge_dropout must be in [0,1)".into()));
    }
    if weight_noise_sigma < 0.0 {
        return Err(Error::InvalidArgument("weight_noise_sigma must be >= 0".into()));
    }
    let n = graph.n();
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let normal = Normal::new(0.0, weight_noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut weights = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let w = graph.weight(i, j);
            if w == 0.0 {
                continue;
            }
            if edge_dropout > 0.0 && rng.gen::<f64>() < edge_dropout {
                continue;
            }
            let noise = if weight_noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            weights[i][j] = (w + noise).max(0.0);
        }
        let sum: f64 = weights[i].iter().sum();
        if sum > 0.0 {
            for w in &mut weights[i] {
                *w /= sum;
            }
        }
        // else: all edges dropped, the row becomes a sink.
    }
    TransitionMatrix::from_weights(
        graph.taxonomy.clone(),
        weights,
        graph.smoothing,
        graph.source_corpus_hash.clone(),
    )
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    names: Vec<String>,
    smoothing: f64,
    source_corpus_hash: String,
    rows: Vec<Vec<f64>>,
}

pub fn serialize_graph(path: &Path, graph: &TransitionMatrix) -> Result<()> {
    let file = GraphFile {
        n: graph.n(),
        names: graph.taxonomy.names().to_vec(),
        smoothing: graph.smoothing,
        source_corpus_hash: graph.source_corpus_hash.clone(),
        rows: graph.weights.clone(),
    };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn deserialize_graph(path: &Path) -> Result<TransitionMatrix> {
    let text = std::fs::read_to_string(path)?;
    let file: GraphFile = serde_json::from_str(&text)?;
    if file.names.len() != file.n || file.rows.len() != file.n {
        return Err(Error::Malformed(format!(
            "declared n={} but {} names / {} rows",
            file.n,
            file.names.len(),
            file.rows.len()
        )));
    }
    let taxonomy = ActionTaxonomy::new(file.names)?;
    TransitionMatrix::from_weights(taxonomy, file.rows, file.smoothing, file.source_corpus_hash)
}

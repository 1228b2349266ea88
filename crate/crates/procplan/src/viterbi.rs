//! Hard Viterbi decoding over the transition graph, an exhaustive
//! brute-force oracle, and the transition-only beam-search baseline.
//!
//! All scoring is in the log domain. Zero probabilities are replaced by a
//! large negative floor so forbidden transitions never beat a permitted
//! path while arithmetic stays finite.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::pkg::TransitionMatrix;

/// Additive mask for log(0).
pub const DEFAULT_LOG_FLOOR: f64 = -1e9;

/// Emission scores, one row per step, entries in [0,1].
pub type EmissionMatrix = Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlan {
    pub actions: Vec<usize>,
    pub log_score: f64,
}

impl DiscretePlan {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Hard trellis: best log-scores and integer backpointers (row 0 unused).
#[derive(Debug, Clone)]
pub struct ViterbiTrellis {
    pub delta: Mat,
    pub psi: Vec<Vec<usize>>,
}

pub(crate) fn floored_ln(p: f64, log_floor: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(log_floor)
    } else {
        log_floor
    }
}

fn check_emissions(graph: &TransitionMatrix, emissions: &Mat) -> Result<()> {
    if emissions.rows() == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    if emissions.cols() != graph.n() {
        return Err(Error::DimensionMismatch(format!(
            "emissions have {} columns, graph has {} actions",
            emissions.cols(),
            graph.n()
        )));
    }
    Ok(())
}

/// Exact argmax of sum_t [log b(t, a_t) + log w(a_{t-1}, a_t)] with a
/// uniform prior over the first action (no transition term at t = 1).
/// Ties resolve to the lowest action id at every max/argmax, applied from
/// the final step backward. Cost O(T N^2).
pub fn viterbi_decode(
    graph: &TransitionMatrix,
    emissions: &EmissionMatrix,
    log_floor: f64,
) -> Result<(DiscretePlan, ViterbiTrellis)> {
    check_emissions(graph, emissions)?;
    let t_len = emissions.rows();
    let n = graph.n();

    let mut delta = Mat::zeros(t_len, n);
    let mut psi = vec![vec![0usize; n]; t_len];

    for j in 0..n {
        delta[(0, j)] = floored_ln(emissions[(0, j)], log_floor);
    }
    for t in 1..t_len {
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0;
            for i in 0..n {
                let s = delta[(t - 1, i)] + floored_ln(graph.weight(i, j), log_floor);
                if s > best {
                    best = s;
                    best_i = i;
                }
            }
            delta[(t, j)] = floored_ln(emissions[(t, j)], log_floor) + best;
            psi[t][j] = best_i;
        }
    }

    let mut last = 0;
    for j in 1..n {
        if delta[(t_len - 1, j)] > delta[(t_len - 1, last)] {
            last = j;
        }
    }
    let mut actions = vec![0usize; t_len];
    actions[t_len - 1] = last;
    for t in (0..t_len - 1).rev() {
        actions[t] = psi[t + 1][actions[t + 1]];
    }
    let log_score = delta[(t_len - 1, last)];
    Ok((DiscretePlan { actions, log_score }, ViterbiTrellis { delta, psi }))
}

/// Recompute the decoding objective for a given plan.
pub fn plan_log_score(
    graph: &TransitionMatrix,
    emissions: &EmissionMatrix,
    actions: &[usize],
    log_floor: f64,
) -> f64 {
    let mut score = 0.0;
    for (t, &a) in actions.iter().enumerate() {
        score += floored_ln(emissions[(t, a)], log_floor);
        if t > 0 {
            score += floored_ln(graph.weight(actions[t - 1], a), log_floor);
        }
    }
    score
}

const BRUTE_FORCE_GUARD: f64 = 1e7;

fn for_each_path(n: usize, t_len: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0usize; t_len];
    loop {
        f(&path);
        let mut pos = t_len;
        while pos > 0 {
            pos -= 1;
            path[pos] += 1;
            if path[pos] < n {
                break;
            }
            path[pos] = 0;
            if pos == 0 {
                return;
            }
        }
    }
}

/// Exhaustive maximum over all N^T paths; the test oracle for
/// `viterbi_decode`, with the same tie-break rule.
pub fn brute_force_best(
    graph: &TransitionMatrix,
    emissions: &EmissionMatrix,
    log_floor: f64,
) -> Result<DiscretePlan> {
    check_emissions(graph, emissions)?;
    let t_len = emissions.rows();
    let n = graph.n();
    let paths = (n as f64).powi(t_len as i32);
    if paths > BRUTE_FORCE_GUARD {
        return Err(Error::SearchSpaceTooLarge { paths, guard: BRUTE_FORCE_GUARD });
    }

    let mut best: Option<DiscretePlan> = None;
    for_each_path(n, t_len, |path| {
        let score = plan_log_score(graph, emissions, path, log_floor);
        let better = match &best {
            None => true,
            Some(b) => {
                score > b.log_score
                    || (score == b.log_score
                        && path.iter().rev().lt(b.actions.iter().rev()))
            }
        };
        if better {
            best = Some(DiscretePlan { actions: path.to_vec(), log_score: score });
        }
    });
    Ok(best.expect("at least one path"))
}

/// log of the total probability sum over all paths of
/// prod_t w(a_{t-1}, a_t) * b(t, a_t); pairs with the forward identity of
/// the smooth decoder at unit temperature.
pub fn brute_force_log_path_sum(
    graph: &TransitionMatrix,
    emissions: &EmissionMatrix,
) -> Result<f64> {
    check_emissions(graph, emissions)?;
    let t_len = emissions.rows();
    let n = graph.n();
    let paths = (n as f64).powi(t_len as i32);
    if paths > BRUTE_FORCE_GUARD {
        return Err(Error::SearchSpaceTooLarge { paths, guard: BRUTE_FORCE_GUARD });
    }
    let mut total = 0.0;
    for_each_path(n, t_len, |path| {
        let mut p = emissions[(0, path[0])];
        for t in 1..t_len {
            p *= graph.weight(path[t - 1], path[t]) * emissions[(t, path[t])];
        }
        total += p;
    });
    Ok(total.ln())
}

#[derive(Debug, Clone)]
pub struct BeamResult {
    pub plan: DiscretePlan,
    /// The selected path ends at the requested end action.
    pub reached_goal: bool,
    /// The selected path crosses at least one zero-probability edge.
    pub used_floor: bool,
}

/// Transition-only beam search over the graph: best length-T path starting
/// at `start_action`, preferring (but not requiring) paths that end at
/// `end_action`. No emission model is involved.
pub fn beam_search(
    graph: &TransitionMatrix,
    start_action: usize,
    end_action: usize,
    horizon: usize,
    beam_width: usize,
) -> Result<BeamResult> {
    let n = graph.n();
    if start_action >= n {
        return Err(Error::ActionOutOfRange { id: start_action, n });
    }
    if end_action >= n {
        return Err(Error::ActionOutOfRange { id: end_action, n });
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    if beam_width == 0 {
        return Err(Error::InvalidArgument("beam_width must be >= 1".into()));
    }

    let log_floor = DEFAULT_LOG_FLOOR;
    let mut beams: Vec<(f64, Vec<usize>)> = vec![(0.0, vec![start_action])];
    for _ in 1..horizon {
        let mut expanded = Vec::with_capacity(beams.len() * n);
        for (score, path) in &beams {
            let from = *path.last().unwrap();
            for to in 0..n {
                let mut next = path.clone();
                next.push(to);
                expanded.push((score + floored_ln(graph.weight(from, to), log_floor), next));
            }
        }
        expanded.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        expanded.truncate(beam_width);
        beams = expanded;
    }

    let pick = |cands: &[(f64, Vec<usize>)]| -> Option<(f64, Vec<usize>)> {
        cands
            .iter()
            .min_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)))
            .cloned()
    };
    let at_goal: Vec<_> = beams
        .iter()
        .filter(|(_, p)| *p.last().unwrap() == end_action)
        .cloned()
        .collect();
    let (score, actions, reached_goal) = match pick(&at_goal) {
        Some((s, p)) => (s, p, true),
        None => {
            let (s, p) = pick(&beams).expect("beam never empty");
            let hit = *p.last().unwrap() == end_action;
            (s, p, hit)
        }
    };
    let used_floor = score <= log_floor / 2.0;
    Ok(BeamResult {
        plan: DiscretePlan { actions, log_score: score },
        reached_goal,
        used_floor,
    })
}

//! Differentiable Viterbi layer: the hard max/argmax of the decoder are
//! replaced by log-sum-exp and softmax relaxations, producing soft
//! backpointer distributions that are recursively composed into a soft
//! plan. The layer holds no trainable state: transitions come from the
//! graph and emissions from the caller; the backward pass is exact
//! reverse accumulation with respect to the emissions only.
//!
//! The recursion runs in the log domain. At unit temperature the smooth
//! max coincides with log-sum-exp, so the forward scores reproduce the
//! HMM forward algorithm's path sum; as the temperature goes to zero the
//! soft plan collapses onto the hard Viterbi plan.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::pkg::TransitionMatrix;
use crate::viterbi::{floored_ln, EmissionMatrix, DEFAULT_LOG_FLOOR};

#[derive(Debug, Clone, Copy)]
pub struct SmoothConfig {
    pub temperature: f64,
    pub log_floor: f64,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        Self { temperature: 1.0, log_floor: DEFAULT_LOG_FLOOR }
    }
}

impl SmoothConfig {
    pub fn with_temperature(temperature: f64) -> Self {
        Self { temperature, ..Self::default() }
    }

    fn check(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::InvalidArgument("temperature must be > 0".into()));
        }
        Ok(())
    }
}

/// Smooth max: tau * log sum exp(x/tau), computed with max subtraction.
pub fn s_max(x: &[f64], tau: f64) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = x.iter().map(|&v| ((v - m) / tau).exp()).sum();
    m + tau * sum.ln()
}

/// Soft argmax: softmax(x/tau). The exact gradient of `s_max` in x.
pub fn s_argmax(x: &[f64], tau: f64) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&v| ((v - m) / tau).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Backward through p = softmax(z/tau): returns dL/dz given dL/dp and p.
fn softmax_temp_backward(grad_p: &[f64], p: &[f64], tau: f64) -> Vec<f64> {
    let inner: f64 = grad_p.iter().zip(p).map(|(g, q)| g * q).sum();
    grad_p
        .iter()
        .zip(p)
        .map(|(g, q)| q * (g - inner) / tau)
        .collect()
}

/// Forward trellis with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct DvlTrellis {
    /// T x N cumulative smooth log-scores.
    pub log_delta: Mat,
    /// One N x N row-stochastic matrix per step t = 1..T-1; row j is the
    /// predecessor distribution of state j at step t.
    pub soft_psi: Vec<Mat>,
    emissions: Mat,
    log_w: Mat,
    cfg: SmoothConfig,
}

impl DvlTrellis {
    pub fn horizon(&self) -> usize {
        self.log_delta.rows()
    }

    pub fn n(&self) -> usize {
        self.log_delta.cols()
    }

    /// Predecessor distribution of state j at step t (t >= 1).
    pub fn psi_row(&self, t: usize, j: usize) -> &[f64] {
        self.soft_psi[t - 1].row(j)
    }
}

/// Row-wise distributions over actions, one per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPlan {
    pub probs: Mat,
}

impl SoftPlan {
    pub fn horizon(&self) -> usize {
        self.probs.rows()
    }

    pub fn argmax_plan(&self) -> Vec<usize> {
        self.probs
            .iter_rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0usize, f64::NEG_INFINITY), |acc, (j, &p)| {
                        if p > acc.1 {
                            (j, p)
                        } else {
                            acc
                        }
                    })
                    .0
            })
            .collect()
    }
}

pub fn dvl_forward(
    graph: &TransitionMatrix,
    emissions: &EmissionMatrix,
    cfg: SmoothConfig,
) -> Result<DvlTrellis> {
    cfg.check()?;
    let t_len = emissions.rows();
    let n = graph.n();
    if t_len == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    if emissions.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "emissions have {} columns, graph has {} actions",
            emissions.cols(),
            n
        )));
    }
    let tau = cfg.temperature;

    let log_b = emissions.map(|p| floored_ln(p, cfg.log_floor));
    let mut log_w = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            log_w[(i, j)] = floored_ln(graph.weight(i, j), cfg.log_floor);
        }
    }

    let mut log_delta = Mat::zeros(t_len, n);
    log_delta.row_mut(0).copy_from_slice(log_b.row(0));

    let mut soft_psi = Vec::with_capacity(t_len.saturating_sub(1));
    let mut scores = vec![0.0; n];
    for t in 1..t_len {
        let mut psi_t = Mat::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                scores[i] = log_delta[(t - 1, i)] + log_w[(i, j)];
            }
            log_delta[(t, j)] = log_b[(t, j)] + s_max(&scores, tau);
            psi_t.row_mut(j).copy_from_slice(&s_argmax(&scores, tau));
        }
        soft_psi.push(psi_t);
    }

    Ok(DvlTrellis {
        log_delta,
        soft_psi,
        emissions: emissions.clone(),
        log_w,
        cfg,
    })
}

/// Recursive composition of the soft backpointers: the final row is the
/// soft argmax of the last trellis scores; earlier rows marginalize the
/// successor distribution through its predecessor distributions. Each row
/// is a convex combination of row-stochastic rows, hence row-stochastic.
pub fn compose_soft_plan(trellis: &DvlTrellis, cfg: SmoothConfig) -> SoftPlan {
    let t_len = trellis.horizon();
    let n = trellis.n();
    let tau = cfg.temperature;
    let mut probs = Mat::zeros(t_len, n);
    probs
        .row_mut(t_len - 1)
        .copy_from_slice(&s_argmax(trellis.log_delta.row(t_len - 1), tau));
    for t in (0..t_len - 1).rev() {
        for k in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += probs[(t + 1, j)] * trellis.soft_psi[t][(j, k)];
            }
            probs[(t, k)] = acc;
        }
    }
    SoftPlan { probs }
}

/// Exact reverse accumulation of `compose_soft_plan` after `dvl_forward`
/// with respect to the emissions. Transitions are constants.
pub fn dvl_backward(trellis: &DvlTrellis, grad_soft_plan: &Mat) -> Result<Mat> {
    let t_len = trellis.horizon();
    let n = trellis.n();
    if grad_soft_plan.rows() != t_len || grad_soft_plan.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "upstream gradient is {}x{}, trellis is {}x{}",
            grad_soft_plan.rows(),
            grad_soft_plan.cols(),
            t_len,
            n
        )));
    }
    let cfg = trellis.cfg;
    let tau = cfg.temperature;
    let plan = compose_soft_plan(trellis, cfg);

    // Reverse of the composition: earlier plan rows depend on later ones,
    // so accumulate forward in t, collecting gradients into each psi and
    // into the final soft-argmax input.
    let mut g_psi: Vec<Mat> = (0..t_len.saturating_sub(1)).map(|_| Mat::zeros(n, n)).collect();
    let mut gbar: Vec<f64> = grad_soft_plan.row(0).to_vec();
    for t in 0..t_len.saturating_sub(1) {
        let mut g_next = vec![0.0; n];
        for j in 0..n {
            let psi_row = trellis.soft_psi[t].row(j);
            let p_next_j = plan.probs[(t + 1, j)];
            let mut acc = 0.0;
            for k in 0..n {
                acc += gbar[k] * psi_row[k];
                g_psi[t][(j, k)] += gbar[k] * p_next_j;
            }
            g_next[j] = acc;
        }
        for (g, up) in g_next.iter_mut().zip(grad_soft_plan.row(t + 1)) {
            *g += up;
        }
        gbar = g_next;
    }

    // Reverse of the forward recursion.
    let mut g_log_delta = Mat::zeros(t_len, n);
    let final_grad = softmax_temp_backward(&gbar, plan.probs.row(t_len - 1), tau);
    g_log_delta.row_mut(t_len - 1).copy_from_slice(&final_grad);

    let mut g_log_b = Mat::zeros(t_len, n);
    let mut scores = vec![0.0; n];
    for t in (1..t_len).rev() {
        for j in 0..n {
            g_log_b[(t, j)] += g_log_delta[(t, j)];
            for i in 0..n {
                scores[i] = trellis.log_delta[(t - 1, i)] + trellis.log_w[(i, j)];
            }
            let psi_row = trellis.soft_psi[t - 1].row(j);
            // Through the smooth max: its gradient is exactly psi_row.
            let g_max = g_log_delta[(t, j)];
            // Through the soft argmax row.
            let g_from_psi = softmax_temp_backward(g_psi[t - 1].row(j), psi_row, tau);
            for i in 0..n {
                g_log_delta[(t - 1, i)] += g_max * psi_row[i] + g_from_psi[i];
            }
        }
    }
    for j in 0..n {
        g_log_b[(0, j)] += g_log_delta[(0, j)];
    }

    // Chain log b -> b; floored entries are flat and get zero gradient.
    let mut g_emissions = Mat::zeros(t_len, n);
    for t in 0..t_len {
        for j in 0..n {
            let b = trellis.emissions[(t, j)];
            if b > 0.0 && b.ln() > cfg.log_floor {
                g_emissions[(t, j)] = g_log_b[(t, j)] / b;
            }
        }
    }
    Ok(g_emissions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pkg::TransitionMatrix;
    use crate::taxonomy::ActionTaxonomy;
    use crate::viterbi::{brute_force_log_path_sum, viterbi_decode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn dense_instance(rng: &mut ChaCha12Rng, n: usize, t: usize) -> (TransitionMatrix, Mat) {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
            let sum: f64 = row.iter().sum();
            for w in &mut row {
                *w /= sum;
            }
            rows.push(row);
        }
        let graph =
            TransitionMatrix::from_weights(ActionTaxonomy::with_size(n), rows, 0.0, "test".into())
                .unwrap();
        let mut emis = Mat::zeros(t, n);
        for v in emis.data_mut() {
            *v = 0.05 + 0.95 * rng.gen::<f64>();
        }
        (graph, emis)
    }

    fn sparse_instance(rng: &mut ChaCha12Rng, n: usize, t: usize) -> (TransitionMatrix, Mat) {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row: Vec<f64> = (0..n)
                .map(|_| if rng.gen::<f64>() < 0.3 { 0.0 } else { rng.gen::<f64>() })
                .collect();
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                row = vec![0.0; n];
            } else {
                for w in &mut row {
                    *w /= sum;
                }
            }
            rows.push(row);
        }
        let graph =
            TransitionMatrix::from_weights(ActionTaxonomy::with_size(n), rows, 0.0, "test".into())
                .unwrap();
        let mut emis = Mat::zeros(t, n);
        for v in emis.data_mut() {
            *v = rng.gen::<f64>();
        }
        (graph, emis)
    }

    #[test]
    fn s_max_basics() {
        assert_eq!(s_max(&[3.7], 1.0), 3.7);
        assert_eq!(s_max(&[3.7], 0.01), 3.7);
        assert!((s_max(&[0.0, 0.0], 1.0) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn s_max_approaches_hard_max() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 20.0 - 10.0).collect();
            let hard = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((s_max(&x, 1e-6) - hard).abs() < 1e-5);
        }
    }

    #[test]
    fn s_max_stable_for_huge_magnitudes() {
        let x = [-1e9, -1e9 + 1.0, 0.5e9];
        let v = s_max(&x, 1.0);
        assert!(v.is_finite());
        assert!((v - 0.5e9).abs() < 1e-6);
    }

    #[test]
    fn s_argmax_basics() {
        assert_eq!(s_argmax(&[7.0], 1.0), vec![1.0]);
        let p = s_argmax(&[0.0, 0.0], 1.0);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn s_argmax_is_gradient_of_s_max() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let tau = 0.5 + rng.gen::<f64>();
            let p = s_argmax(&x, tau);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let h = 1e-6;
            for k in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (s_max(&xp, tau) - s_max(&xm, tau)) / (2.0 * h);
                assert!((fd - p[k]).abs() < 1e-6, "fd {fd} vs analytic {}", p[k]);
            }
        }
    }

    #[test]
    fn forward_single_state() {
        let graph = TransitionMatrix::from_weights(
            ActionTaxonomy::with_size(1),
            vec![vec![1.0]],
            0.0,
            "test".into(),
        )
        .unwrap();
        let emis = Mat::from_rows(&[vec![0.5], vec![0.25], vec![0.125]]);
        let trellis = dvl_forward(&graph, &emis, SmoothConfig::default()).unwrap();
        for m in &trellis.soft_psi {
            assert_eq!(m.row(0), &[1.0]);
        }
        let expect = [0.5f64.ln(), (0.5f64 * 0.25).ln(), (0.5f64 * 0.25 * 0.125).ln()];
        for (t, e) in expect.iter().enumerate() {
            assert!((trellis.log_delta[(t, 0)] - e).abs() < 1e-12);
        }
        let plan = compose_soft_plan(&trellis, SmoothConfig::default());
        for row in plan.probs.iter_rows() {
            assert_eq!(row, &[1.0]);
        }
    }

    #[test]
    fn hard_limit_matches_viterbi() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let cfg = SmoothConfig::with_temperature(1e-6);
        let mut agree = 0;
        let total = 500;
        for _ in 0..total {
            let n = rng.gen_range(2..=5);
            let t = rng.gen_range(2..=5);
            let (graph, emis) = sparse_instance(&mut rng, n, t);
            let (hard, _) = viterbi_decode(&graph, &emis, cfg.log_floor).unwrap();
            let trellis = dvl_forward(&graph, &emis, cfg).unwrap();
            let soft = compose_soft_plan(&trellis, cfg);
            if soft.argmax_plan() == hard.actions {
                agree += 1;
            }
        }
        assert!(agree as f64 >= 0.99 * total as f64, "agreement {agree}/{total}");
    }

    #[test]
    fn unit_temperature_reproduces_forward_path_sum() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let cfg = SmoothConfig::default();
        for _ in 0..100 {
            let n = rng.gen_range(1..=4);
            let t = rng.gen_range(1..=4);
            let (graph, emis) = dense_instance(&mut rng, n, t);
            let trellis = dvl_forward(&graph, &emis, cfg).unwrap();
            let lse = s_max(trellis.log_delta.row(t - 1), 1.0);
            let oracle = brute_force_log_path_sum(&graph, &emis).unwrap();
            assert!((lse - oracle).abs() < 1e-9, "lse {lse} vs {oracle}");
        }
    }

    #[test]
    fn soft_plan_rows_are_stochastic() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.gen_range(2..=6);
            let t = rng.gen_range(1..=5);
            let (graph, emis) = sparse_instance(&mut rng, n, t);
            let cfg = SmoothConfig::with_temperature(0.25 + rng.gen::<f64>());
            let trellis = dvl_forward(&graph, &emis, cfg).unwrap();
            for m in &trellis.soft_psi {
                for j in 0..n {
                    assert!((m.row(j).iter().sum::<f64>() - 1.0).abs() < 1e-7);
                }
            }
            let plan = compose_soft_plan(&trellis, cfg);
            for row in plan.probs.iter_rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn deterministic_chain_concentrates_plan() {
        let n = 4;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][(i + 1) % n] = 1.0;
        }
        let graph =
            TransitionMatrix::from_weights(ActionTaxonomy::with_size(n), rows, 0.0, "test".into())
                .unwrap();
        let mut emis = Mat::zeros(3, n);
        for (t, &a) in [0usize, 1, 2].iter().enumerate() {
            for j in 0..n {
                emis[(t, j)] = if j == a { 0.999 } else { 0.001 };
            }
        }
        let cfg = SmoothConfig::with_temperature(0.1);
        let trellis = dvl_forward(&graph, &emis, cfg).unwrap();
        let plan = compose_soft_plan(&trellis, cfg);
        for (t, &a) in [0usize, 1, 2].iter().enumerate() {
            assert!(plan.probs[(t, a)] >= 0.99, "row {t}: {:?}", plan.probs.row(t));
        }
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let (graph, emis) = sparse_instance(&mut rng, 5, 4);
        let cfg = SmoothConfig::default();
        let a = compose_soft_plan(&dvl_forward(&graph, &emis, cfg).unwrap(), cfg);
        let b = compose_soft_plan(&dvl_forward(&graph, &emis, cfg).unwrap(), cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let h = 1e-5;
        for _ in 0..60 {
            let n = rng.gen_range(2..=6);
            let t = rng.gen_range(1..=5);
            let (graph, emis) = dense_instance(&mut rng, n, t);
            let cfg = SmoothConfig::with_temperature(0.5 + rng.gen::<f64>());
            let coeff = {
                let mut c = Mat::zeros(t, n);
                for v in c.data_mut() {
                    *v = rng.gen::<f64>() * 2.0 - 1.0;
                }
                c
            };
            let loss = |e: &Mat| -> f64 {
                let trellis = dvl_forward(&graph, e, cfg).unwrap();
                let plan = compose_soft_plan(&trellis, cfg);
                plan.probs
                    .data()
                    .iter()
                    .zip(coeff.data())
                    .map(|(p, c)| p * c)
                    .sum()
            };
            let trellis = dvl_forward(&graph, &emis, cfg).unwrap();
            let grad = dvl_backward(&trellis, &coeff).unwrap();
            let mut max_rel = 0.0f64;
            for idx in 0..emis.data().len() {
                let mut ep = emis.clone();
                let mut em = emis.clone();
                ep.data_mut()[idx] += h;
                em.data_mut()[idx] -= h;
                let fd = (loss(&ep) - loss(&em)) / (2.0 * h);
                let g = grad.data()[idx];
                let denom = fd.abs().max(g.abs()).max(1e-6);
                max_rel = max_rel.max((fd - g).abs() / denom);
            }
            assert!(max_rel < 1e-4, "max relative error {max_rel}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let (graph, emis) = sparse_instance(&mut rng, 4, 4);
        let trellis = dvl_forward(&graph, &emis, SmoothConfig::default()).unwrap();
        let grad = dvl_backward(&trellis, &Mat::zeros(4, 4)).unwrap();
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn floored_emissions_get_finite_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        for _ in 0..1000 {
            let n = rng.gen_range(2..=4);
            let t = rng.gen_range(1..=4);
            let (graph, mut emis) = sparse_instance(&mut rng, n, t);
            // Force some exact zeros.
            for v in emis.data_mut() {
                if rng.gen::<f64>() < 0.25 {
                    *v = 0.0;
                }
            }
            let trellis = dvl_forward(&graph, &emis, SmoothConfig::default()).unwrap();
            let mut up = Mat::zeros(t, n);
            for v in up.data_mut() {
                *v = rng.gen::<f64>() * 2.0 - 1.0;
            }
            let grad = dvl_backward(&trellis, &up).unwrap();
            assert!(grad.data().iter().all(|g| g.is_finite()));
            for (g, b) in grad.data().iter().zip(emis.data()) {
                if *b == 0.0 {
                    assert_eq!(*g, 0.0);
                }
            }
        }
    }

    #[test]
    fn soft_plan_permutation_equivariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        let n = 4;
        let (graph, emis) = dense_instance(&mut rng, n, 3);
        let perm = [3usize, 1, 0, 2];
        let mut prows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                prows[perm[i]][perm[j]] = graph.weight(i, j);
            }
        }
        let pgraph =
            TransitionMatrix::from_weights(ActionTaxonomy::with_size(n), prows, 0.0, "t".into())
                .unwrap();
        let mut pemis = Mat::zeros(3, n);
        for t in 0..3 {
            for j in 0..n {
                pemis[(t, perm[j])] = emis[(t, j)];
            }
        }
        let cfg = SmoothConfig::default();
        let plan = compose_soft_plan(&dvl_forward(&graph, &emis, cfg).unwrap(), cfg);
        let pplan = compose_soft_plan(&dvl_forward(&pgraph, &pemis, cfg).unwrap(), cfg);
        for t in 0..3 {
            for j in 0..n {
                assert!((plan.probs[(t, j)] - pplan.probs[(t, perm[j])]).abs() < 1e-12);
            }
        }
    }
}

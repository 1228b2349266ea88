//! The three training losses and their analytic gradients. All three are
//! averaged so their scales stay comparable under equal weighting.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Mat};

/// MSE between the soft plan and the one-hot ground truth, averaged over
/// steps: L = (1/T) sum_t ||pi_t - onehot(a_t)||^2. Returns the loss and
/// its gradient in the soft plan.
pub fn plan_loss(soft_plan: &Mat, gt: &[usize]) -> Result<(f64, Mat)> {
    let t_len = soft_plan.rows();
    let n = soft_plan.cols();
    if gt.len() != t_len {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} steps, ground truth has {}",
            t_len,
            gt.len()
        )));
    }
    if let Some(&bad) = gt.iter().find(|&&a| a >= n) {
        return Err(Error::ActionOutOfRange { id: bad, n });
    }
    let inv_t = 1.0 / t_len as f64;
    let mut loss = 0.0;
    let mut grad = Mat::zeros(t_len, n);
    for t in 0..t_len {
        for j in 0..n {
            let target = if gt[t] == j { 1.0 } else { 0.0 };
            let d = soft_plan[(t, j)] - target;
            loss += d * d * inv_t;
            grad[(t, j)] = 2.0 * d * inv_t;
        }
    }
    Ok((loss, grad))
}

/// MSE between head scores and the one-hot task label, averaged over
/// classes: L = (1/K) sum_n (c_hat_n - c_n)^2.
pub fn task_loss(head_out: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let k = head_out.len();
    if label >= k {
        return Err(Error::ActionOutOfRange { id: label, n: k });
    }
    let inv_k = 1.0 / k as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; k];
    for (n, &c_hat) in head_out.iter().enumerate() {
        let target = if n == label { 1.0 } else { 0.0 };
        let d = c_hat - target;
        loss += d * d * inv_k;
        grad[n] = 2.0 * d * inv_k;
    }
    Ok((loss, grad))
}

/// Cross-entropy over cosine similarities against the positive description,
/// one term per query. Returns the per-query loss and gradient.
fn contrastive_term(query: &[f64], descriptions: &Mat, positive: usize) -> Result<(f64, Vec<f64>)> {
    let k = descriptions.rows();
    if k < 2 {
        return Err(Error::InvalidArgument("need at least 2 descriptions".into()));
    }
    if positive >= k {
        return Err(Error::ActionOutOfRange { id: positive, n: k });
    }
    let qn = norm(query);
    if qn <= 1e-12 {
        return Err(Error::Numerical("zero-norm query embedding".into()));
    }
    let mut sims = Vec::with_capacity(k);
    let mut dnorms = Vec::with_capacity(k);
    for d in descriptions.iter_rows() {
        let dn = norm(d);
        if dn <= 1e-12 {
            return Err(Error::Numerical("zero-norm description vector".into()));
        }
        sims.push(dot(query, d) / (qn * dn));
        dnorms.push(dn);
    }
    let m = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sims.iter().map(|&s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let loss = -(probs[positive].max(1e-300)).ln();

    // dL/dsim_i = p_i - 1[i = positive]; dsim_i/dq = d_i/(|q||d_i|) - sim_i q/|q|^2.
    let mut grad = vec![0.0; query.len()];
    for i in 0..k {
        let g_sim = probs[i] - if i == positive { 1.0 } else { 0.0 };
        let d = descriptions.row(i);
        let a = 1.0 / (qn * dnorms[i]);
        let b = sims[i] / (qn * qn);
        for (e, (&dv, &qv)) in grad.iter_mut().zip(d.iter().zip(query)) {
            *e += g_sim * (dv * a - qv * b);
        }
    }
    Ok((loss, grad))
}

/// Alignment loss: contrastive terms for the encoded start and goal against
/// the shared description table. Gradients are in the encoded embeddings;
/// descriptions are constants.
pub fn align_loss(
    start_enc: &[f64],
    goal_enc: &[f64],
    descriptions: &Mat,
    positive_start: usize,
    positive_goal: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if start_enc.len() != descriptions.cols() || goal_enc.len() != descriptions.cols() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings of dim {}/{} vs descriptions of dim {}",
            start_enc.len(),
            goal_enc.len(),
            descriptions.cols()
        )));
    }
    let (ls, gs) = contrastive_term(start_enc, descriptions, positive_start)?;
    let (lg, gg) = contrastive_term(goal_enc, descriptions, positive_goal)?;
    Ok((ls + lg, gs, gg))
}

/// Which loss terms participate in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LossSwitches {
    pub plan: bool,
    pub task: bool,
    pub align: bool,
}

impl Default for LossSwitches {
    fn default() -> Self {
        Self { plan: true, task: true, align: true }
    }
}

/// Equal-weight sum of the enabled terms.
pub fn total_loss(plan: f64, task: f64, align: f64, switches: LossSwitches) -> f64 {
    let mut l = 0.0;
    if switches.plan {
        l += plan;
    }
    if switches.task {
        l += task;
    }
    if switches.align {
        l += align;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn plan_loss_exact_one_hot_is_zero() {
        let mut p = Mat::zeros(3, 4);
        for (t, &a) in [1usize, 0, 3].iter().enumerate() {
            p[(t, a)] = 1.0;
        }
        let (l, g) = plan_loss(&p, &[1, 0, 3]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn plan_loss_uniform_closed_form() {
        // Uniform over N=4: 3*(1/4)^2 + (3/4)^2 = 0.75 per step.
        let p = Mat::from_rows(&[vec![0.25; 4], vec![0.25; 4]]);
        let (l, _) = plan_loss(&p, &[2, 0]).unwrap();
        assert!((l - 0.75).abs() < 1e-12);
    }

    #[test]
    fn plan_loss_gradient_matches_fd() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let h = 1e-6;
        for _ in 0..20 {
            let t = rng.gen_range(1..=4);
            let n = rng.gen_range(2..=5);
            let gt: Vec<usize> = (0..t).map(|_| rng.gen_range(0..n)).collect();
            let mut p = Mat::zeros(t, n);
            for v in p.data_mut() {
                *v = rng.gen::<f64>();
            }
            let (_, grad) = plan_loss(&p, &gt).unwrap();
            for idx in 0..p.data().len() {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp.data_mut()[idx] += h;
                pm.data_mut()[idx] -= h;
                let fd = (plan_loss(&pp, &gt).unwrap().0 - plan_loss(&pm, &gt).unwrap().0) / (2.0 * h);
                let g = grad.data()[idx];
                assert!((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6) < 1e-6);
            }
        }
    }

    #[test]
    fn task_loss_closed_forms() {
        let (l, _) = task_loss(&[0.0, 1.0, 0.0], 1).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = task_loss(&[0.0; 5], 3).unwrap();
        assert!((l - 0.2).abs() < 1e-12);
    }

    #[test]
    fn task_loss_gradient_matches_fd() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let h = 1e-6;
        for _ in 0..20 {
            let k = rng.gen_range(2..=6);
            let label = rng.gen_range(0..k);
            let out: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let (_, grad) = task_loss(&out, label).unwrap();
            for i in 0..k {
                let mut op = out.clone();
                let mut om = out.clone();
                op[i] += h;
                om[i] -= h;
                let fd = (task_loss(&op, label).unwrap().0 - task_loss(&om, label).unwrap().0) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn align_loss_orthogonal_closed_form() {
        // Query equals its positive, the single negative is orthogonal:
        // sims are [1, 0], loss per term = -ln(e/(e+1)).
        let descriptions = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (l, _, _) = align_loss(&[1.0, 0.0], &[0.0, 1.0], &descriptions, 0, 1).unwrap();
        let per_term = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((l - 2.0 * per_term).abs() < 1e-12);
        assert!((per_term - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn align_loss_large_margin_near_zero() {
        // Cosine sims are bounded by 1, so a "large margin" means the
        // positive at +1 and negatives at -1.
        let descriptions = Mat::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let (l, _, _) = align_loss(&[5.0, 0.0], &[5.0, 0.0], &descriptions, 0, 0).unwrap();
        assert!(l < 0.3, "loss {l}");
    }

    #[test]
    fn align_loss_gradient_matches_fd() {
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        let h = 1e-6;
        for _ in 0..20 {
            let e = rng.gen_range(2..=5);
            let k = rng.gen_range(2..=5);
            let mut descriptions = Mat::zeros(k, e);
            for v in descriptions.data_mut() {
                *v = rng.gen::<f64>() * 2.0 - 1.0;
            }
            let s: Vec<f64> = (0..e).map(|_| rng.gen::<f64>() + 0.2).collect();
            let g: Vec<f64> = (0..e).map(|_| rng.gen::<f64>() + 0.2).collect();
            let ps = rng.gen_range(0..k);
            let pg = rng.gen_range(0..k);
            let (_, gs, gg) = align_loss(&s, &g, &descriptions, ps, pg).unwrap();
            for i in 0..e {
                let mut sp = s.clone();
                let mut sm = s.clone();
                sp[i] += h;
                sm[i] -= h;
                let fd = (align_loss(&sp, &g, &descriptions, ps, pg).unwrap().0
                    - align_loss(&sm, &g, &descriptions, ps, pg).unwrap().0)
                    / (2.0 * h);
                assert!((fd - gs[i]).abs() < 1e-6, "start dim {i}: {fd} vs {}", gs[i]);
                let mut gp = g.clone();
                let mut gm = g.clone();
                gp[i] += h;
                gm[i] -= h;
                let fd = (align_loss(&s, &gp, &descriptions, ps, pg).unwrap().0
                    - align_loss(&s, &gm, &descriptions, ps, pg).unwrap().0)
                    / (2.0 * h);
                assert!((fd - gg[i]).abs() < 1e-6, "goal dim {i}: {fd} vs {}", gg[i]);
            }
        }
    }

    #[test]
    fn align_loss_rejects_degenerate_inputs() {
        let d = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(align_loss(&[0.0, 0.0], &[1.0, 0.0], &d, 0, 1).is_err());
        let single = Mat::from_rows(&[vec![1.0, 0.0]]);
        assert!(align_loss(&[1.0, 0.0], &[1.0, 0.0], &single, 0, 0).is_err());
        let with_zero = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(align_loss(&[1.0, 0.0], &[1.0, 0.0], &with_zero, 0, 0).is_err());
    }

    #[test]
    fn total_loss_switches() {
        let all = LossSwitches::default();
        assert_eq!(total_loss(0.0, 0.0, 0.0, all), 0.0);
        assert_eq!(total_loss(1.5, 2.5, 4.0, all), 8.0);
        let only_plan = LossSwitches { plan: true, task: false, align: false };
        assert_eq!(total_loss(1.5, 2.5, 4.0, only_plan), 1.5);
        let no_align = LossSwitches { plan: true, task: true, align: false };
        assert_eq!(total_loss(1.5, 2.5, 4.0, no_align), 4.0);
    }
}

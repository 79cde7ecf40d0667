//! Balanced classification risk over state-action densities, empirical
//! co-training risks over minibatches, and tabular classifier training.
//!
//! The exact paths operate on full density tables and feed the identity
//! checks; the empirical paths operate on batches and feed the trainers.
//! Both are exposed so tests can compare them directly.

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::mdp::StateActionDensity;

/// A tabular score function g(s,a) with an attached loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    n_states: usize,
    n_actions: usize,
    scores: Vec<f64>,
    loss: LossSpec,
}

impl Classifier {
    pub fn zeros(n_states: usize, n_actions: usize, loss: LossSpec) -> Classifier {
        Classifier {
            n_states,
            n_actions,
            scores: vec![0.0; n_states * n_actions],
            loss,
        }
    }

    pub fn new(
        n_states: usize,
        n_actions: usize,
        scores: Vec<f64>,
        loss: LossSpec,
    ) -> Result<Classifier> {
        if scores.len() != n_states * n_actions {
            return Err(Error::invariant("classifier score table has wrong size"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invariant("classifier scores must be finite"));
        }
        Ok(Classifier { n_states, n_actions, scores, loss })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn score(&self, s: usize, a: usize) -> f64 {
        self.scores[s * self.n_actions + a]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn max_abs_score(&self) -> f64 {
        self.scores.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Errors unless the attached loss is symmetric (the precondition of
    /// every robustness guarantee).
    pub fn require_symmetric(&self) -> Result<f64> {
        self.loss
            .symmetry_constant
            .ok_or_else(|| Error::domain(format!("loss `{}` is not symmetric", self.loss.kind)))
    }
}

/// The three-term empirical risk, with its coefficients baked in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskReport {
    pub total: f64,
    pub term_data: f64,
    pub term_pseudo: f64,
    pub term_policy: f64,
    pub lambda: f64,
}

/// Balanced risk `1/2 E_pos[l(g)] + 1/2 E_neg[l(-g)]` from exact densities.
pub fn balanced_risk_exact(
    g: &Classifier,
    rho_pos: &StateActionDensity,
    rho_neg: &StateActionDensity,
) -> Result<f64> {
    check_density_shape(g, rho_pos)?;
    check_density_shape(g, rho_neg)?;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for s in 0..g.n_states {
        for a in 0..g.n_actions {
            let z = g.score(s, a);
            pos += rho_pos.get(s, a) * g.loss.eval_finite(z);
            neg += rho_neg.get(s, a) * g.loss.eval_finite(-z);
        }
    }
    Ok(0.5 * pos + 0.5 * neg)
}

/// Mixture `lambda * rho_n + (1 - lambda) * rho_pi`.
pub fn mixture_density_lambda(
    rho_n: &StateActionDensity,
    rho_pi: &StateActionDensity,
    lambda: f64,
) -> Result<StateActionDensity> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda must lie in [0,1], got {lambda}")));
    }
    rho_pi.blend(rho_n, lambda)
}

/// Both sides of the balanced-risk decomposition identity.
///
/// The left side is the risk of `g` against the contaminated density
/// `alpha * rho_e + (1-alpha) * rho_n` and the policy mixture
/// `lambda * rho_n + (1-lambda) * rho_pi`; the right side rewrites it as an
/// affine function of the clean expert/non-expert risk. Equality requires a
/// symmetric loss and `rho_pi = kappa * rho_e + (1-kappa) * rho_n`, which
/// the caller is responsible for constructing.
pub fn lemma1_decompose(
    g: &Classifier,
    rho_e: &StateActionDensity,
    rho_n: &StateActionDensity,
    rho_pi: &StateActionDensity,
    alpha: f64,
    kappa: f64,
    lambda: f64,
) -> Result<(f64, f64)> {
    let c = g.require_symmetric()?;
    lemma1_decompose_with_constant(g, rho_e, rho_n, rho_pi, alpha, kappa, lambda, c)
}

/// Debug variant that takes the symmetry constant explicitly, so tests can
/// demonstrate that the identity fails for non-symmetric losses (using
/// `2 * l(0)` as the stand-in constant).
#[allow(clippy::too_many_arguments)]
pub fn lemma1_decompose_with_constant(
    g: &Classifier,
    rho_e: &StateActionDensity,
    rho_n: &StateActionDensity,
    rho_pi: &StateActionDensity,
    alpha: f64,
    kappa: f64,
    lambda: f64,
    c: f64,
) -> Result<(f64, f64)> {
    if !(0.0 < alpha && alpha < 1.0) && alpha != 1.0 {
        return Err(Error::domain(format!("alpha must lie in (0,1], got {alpha}")));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::domain(format!("kappa must lie in [0,1], got {kappa}")));
    }
    let rho_prime = rho_e.blend(rho_n, 1.0 - alpha)?;
    let rho_pi_lambda = mixture_density_lambda(rho_n, rho_pi, lambda)?;
    let lhs = balanced_risk_exact(g, &rho_prime, &rho_pi_lambda)?;
    let clean = balanced_risk_exact(g, rho_e, rho_n)?;
    let shrink = alpha - kappa * (1.0 - lambda);
    let rhs = shrink * clean + 0.5 * (1.0 - alpha + kappa * (1.0 - lambda)) * c;
    Ok((lhs, rhs))
}

/// Empirical co-training risk: `1/2 E_data[l(g)] + lambda/2 E_pseudo[l(-g)]
/// + (1-lambda)/2 E_policy[l(-g)]`. An empty pseudo batch contributes zero.
pub fn empirical_risk_co(
    g: &Classifier,
    data: &[(usize, usize)],
    pseudo: &[(usize, usize)],
    policy_batch: &[(usize, usize)],
    lambda: f64,
) -> Result<RiskReport> {
    empirical_risk(g, data, pseudo, policy_batch, lambda)
}

/// Same formula as [`empirical_risk_co`]; the naive-pseudo-labeling
/// ablation differs only in where its batches come from (unsplit data,
/// self-labeled pseudo samples), which is the trainer's business.
pub fn empirical_risk_pseudo(
    g: &Classifier,
    data: &[(usize, usize)],
    pseudo: &[(usize, usize)],
    policy_batch: &[(usize, usize)],
    lambda: f64,
) -> Result<RiskReport> {
    empirical_risk(g, data, pseudo, policy_batch, lambda)
}

fn empirical_risk(
    g: &Classifier,
    data: &[(usize, usize)],
    pseudo: &[(usize, usize)],
    policy_batch: &[(usize, usize)],
    lambda: f64,
) -> Result<RiskReport> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda must lie in [0,1], got {lambda}")));
    }
    if data.is_empty() {
        return Err(Error::domain("data batch must not be empty"));
    }
    if policy_batch.is_empty() {
        return Err(Error::domain("policy batch must not be empty"));
    }
    let mean_pos = |batch: &[(usize, usize)]| -> f64 {
        batch
            .iter()
            .map(|&(s, a)| g.loss.eval_finite(g.score(s, a)))
            .sum::<f64>()
            / batch.len() as f64
    };
    let mean_neg = |batch: &[(usize, usize)]| -> f64 {
        batch
            .iter()
            .map(|&(s, a)| g.loss.eval_finite(-g.score(s, a)))
            .sum::<f64>()
            / batch.len() as f64
    };
    let term_data = 0.5 * mean_pos(data);
    let term_pseudo = if pseudo.is_empty() {
        0.0
    } else {
        0.5 * lambda * mean_neg(pseudo)
    };
    let term_policy = 0.5 * (1.0 - lambda) * mean_neg(policy_batch);
    Ok(RiskReport {
        total: term_data + term_pseudo + term_policy,
        term_data,
        term_pseudo,
        term_policy,
        lambda,
    })
}

/// Gradient of the empirical risk plus `weight_decay * ||g||^2` with
/// respect to every table entry. Each batch occurrence of an (s,a) pair
/// contributes its loss derivative at the pair's current score.
pub fn risk_gradient(
    g: &Classifier,
    data: &[(usize, usize)],
    pseudo: &[(usize, usize)],
    policy_batch: &[(usize, usize)],
    lambda: f64,
    weight_decay: f64,
) -> Vec<f64> {
    let na = g.n_actions;
    let mut grad = vec![0.0; g.scores.len()];
    if !data.is_empty() {
        let w = 0.5 / data.len() as f64;
        for &(s, a) in data {
            grad[s * na + a] += w * g.loss.grad_finite(g.score(s, a));
        }
    }
    if !pseudo.is_empty() {
        let w = 0.5 * lambda / pseudo.len() as f64;
        for &(s, a) in pseudo {
            // d/dg l(-g) = -l'(-g)
            grad[s * na + a] -= w * g.loss.grad_finite(-g.score(s, a));
        }
    }
    if !policy_batch.is_empty() {
        let w = 0.5 * (1.0 - lambda) / policy_batch.len() as f64;
        for &(s, a) in policy_batch {
            grad[s * na + a] -= w * g.loss.grad_finite(-g.score(s, a));
        }
    }
    if weight_decay != 0.0 {
        for (gr, s) in grad.iter_mut().zip(&g.scores) {
            *gr += 2.0 * weight_decay * s;
        }
    }
    grad
}

/// One gradient-descent step on the empirical risk with an L2 penalty.
pub fn classifier_grad_step(
    g: &Classifier,
    data: &[(usize, usize)],
    pseudo: &[(usize, usize)],
    policy_batch: &[(usize, usize)],
    lambda: f64,
    step_size: f64,
    weight_decay: f64,
) -> Result<Classifier> {
    if !(step_size > 0.0) {
        return Err(Error::domain(format!("step size must be positive, got {step_size}")));
    }
    // surface the batch-shape errors the risk itself would raise
    empirical_risk(g, data, pseudo, policy_batch, lambda)?;
    let grad = risk_gradient(g, data, pseudo, policy_batch, lambda, weight_decay);
    let scores = g
        .scores
        .iter()
        .zip(&grad)
        .map(|(s, d)| s - step_size * d)
        .collect();
    Classifier::new(g.n_states, g.n_actions, scores, g.loss)
}

fn check_density_shape(g: &Classifier, rho: &StateActionDensity) -> Result<()> {
    if g.n_states != rho.n_states() || g.n_actions != rho.n_actions() {
        return Err(Error::invariant("density shape does not match classifier"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossKind;
    use crate::mdp::NormalizationMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_density(
        n: usize,
        na: usize,
        rng: &mut ChaCha8Rng,
    ) -> StateActionDensity {
        let mut table = vec![0.0; n * na];
        let mut sum = 0.0;
        for t in table.iter_mut() {
            *t = -(rng.gen::<f64>().max(1e-12)).ln();
            sum += *t;
        }
        for t in table.iter_mut() {
            *t /= sum;
        }
        StateActionDensity::new(n, na, table, NormalizationMode::InfiniteHorizon).unwrap()
    }

    pub(crate) fn random_classifier(
        n: usize,
        na: usize,
        kind: LossKind,
        rng: &mut ChaCha8Rng,
    ) -> Classifier {
        let scores = (0..n * na).map(|_| rng.gen_range(-3.0..3.0)).collect();
        Classifier::new(n, na, scores, LossSpec::new(kind)).unwrap()
    }

    #[test]
    fn zero_classifier_risk_is_half_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in LossKind::symmetric() {
            let g = Classifier::zeros(5, 3, LossSpec::new(kind));
            let c = g.require_symmetric().unwrap();
            let rho_a = random_density(5, 3, &mut rng);
            let rho_b = random_density(5, 3, &mut rng);
            let r = balanced_risk_exact(&g, &rho_a, &rho_b).unwrap();
            assert!((r - c / 2.0).abs() < 1e-12, "{kind}: {r} vs {}", c / 2.0);
        }
    }

    #[test]
    fn perfect_separation_drives_risk_to_zero() {
        // disjoint supports: positives on state 0, negatives on state 1
        let rho_pos = StateActionDensity::new(
            2,
            1,
            vec![1.0, 0.0],
            NormalizationMode::InfiniteHorizon,
        )
        .unwrap();
        let rho_neg = StateActionDensity::new(
            2,
            1,
            vec![0.0, 1.0],
            NormalizationMode::InfiniteHorizon,
        )
        .unwrap();
        let g = Classifier::new(
            2,
            1,
            vec![40.0, -40.0],
            LossSpec::new(LossKind::Sigmoid),
        )
        .unwrap();
        let r = balanced_risk_exact(&g, &rho_pos, &rho_neg).unwrap();
        assert!(r < 1e-12, "risk {r}");
    }

    #[test]
    fn exact_risk_matches_double_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [LossKind::Ap, LossKind::Logistic, LossKind::Unhinged] {
            let g = random_classifier(6, 4, kind, &mut rng);
            let rho_pos = random_density(6, 4, &mut rng);
            let rho_neg = random_density(6, 4, &mut rng);
            let mut oracle = 0.0;
            for s in 0..6 {
                for a in 0..4 {
                    oracle += 0.5 * rho_pos.get(s, a) * g.loss().eval(g.score(s, a)).unwrap();
                    oracle += 0.5 * rho_neg.get(s, a) * g.loss().eval(-g.score(s, a)).unwrap();
                }
            }
            let r = balanced_risk_exact(&g, &rho_pos, &rho_neg).unwrap();
            assert!((r - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_density_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho_n = random_density(4, 2, &mut rng);
        let rho_pi = random_density(4, 2, &mut rng);
        let at0 = mixture_density_lambda(&rho_n, &rho_pi, 0.0).unwrap();
        assert_eq!(at0.table(), rho_pi.table());
        let at1 = mixture_density_lambda(&rho_n, &rho_pi, 1.0).unwrap();
        assert_eq!(at1.table(), rho_n.table());
        let mid = mixture_density_lambda(&rho_n, &rho_pi, 0.5).unwrap();
        for ((m, n), p) in mid.table().iter().zip(rho_n.table()).zip(rho_pi.table()) {
            assert!((m - 0.5 * (n + p)).abs() < 1e-15);
        }
        assert!(mixture_density_lambda(&rho_n, &rho_pi, 1.2).is_err());
        assert!(mixture_density_lambda(&rho_n, &rho_pi, -0.1).is_err());
    }

    #[test]
    fn lemma1_identity_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in LossKind::symmetric() {
            let mut worst = 0.0f64;
            for _ in 0..200 {
                let g = random_classifier(25, 4, kind, &mut rng);
                let rho_e = random_density(25, 4, &mut rng);
                let rho_n = random_density(25, 4, &mut rng);
                let alpha = rng.gen_range(0.5001..1.0);
                let kappa = rng.gen_range(0.0..=1.0);
                let lambda = rng.gen_range(0.0..=1.0);
                let rho_pi = rho_e.blend(&rho_n, 1.0 - kappa).unwrap();
                let (lhs, rhs) =
                    lemma1_decompose(&g, &rho_e, &rho_n, &rho_pi, alpha, kappa, lambda).unwrap();
                worst = worst.max((lhs - rhs).abs());
            }
            assert!(worst < 1e-9, "{kind}: worst defect {worst}");
        }
    }

    #[test]
    fn lemma1_fails_for_logistic_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let g = random_classifier(10, 3, LossKind::Logistic, &mut rng);
            let rho_e = random_density(10, 3, &mut rng);
            let rho_n = random_density(10, 3, &mut rng);
            let kappa = rng.gen_range(0.0..=1.0);
            let rho_pi = rho_e.blend(&rho_n, 1.0 - kappa).unwrap();
            let c_bar = 2.0 * g.loss().eval(0.0).unwrap();
            let (lhs, rhs) = lemma1_decompose_with_constant(
                &g, &rho_e, &rho_n, &rho_pi, 0.7, kappa, 0.5, c_bar,
            )
            .unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
        assert!(worst > 1e-3, "identity unexpectedly held: worst {worst}");
        // the checked entry point refuses outright
        let g = random_classifier(4, 2, LossKind::Logistic, &mut rng);
        let rho_e = random_density(4, 2, &mut rng);
        let rho_n = random_density(4, 2, &mut rng);
        let rho_pi = rho_e.blend(&rho_n, 0.5).unwrap();
        assert!(lemma1_decompose(&g, &rho_e, &rho_n, &rho_pi, 0.7, 0.5, 0.5).is_err());
    }

    #[test]
    fn lemma1_direct_substitution_at_unit_alpha_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_classifier(8, 2, LossKind::Ap, &mut rng);
        let rho_e = random_density(8, 2, &mut rng);
        let rho_n = random_density(8, 2, &mut rng);
        let (lhs, rhs) =
            lemma1_decompose(&g, &rho_e, &rho_n, &rho_e, 1.0, 1.0, 0.5).unwrap();
        // alpha=1, kappa=1, lambda=0.5: shrink = 0.5, constant term = 0.25 * c
        let clean = balanced_risk_exact(&g, &rho_e, &rho_n).unwrap();
        let direct = 0.5 * clean + 0.25;
        assert!((lhs - rhs).abs() < 1e-12);
        assert!((rhs - direct).abs() < 1e-12);
    }

    #[test]
    fn empirical_risk_zero_scores() {
        let g = Classifier::zeros(4, 2, LossSpec::new(LossKind::Ap));
        let batch = vec![(0, 0), (1, 1), (3, 0)];
        for lambda in [0.0, 0.3, 0.5, 1.0] {
            let r = empirical_risk_co(&g, &batch, &batch, &batch, lambda).unwrap();
            assert!((r.total - 0.5).abs() < 1e-12, "lambda {lambda}: {}", r.total);
            // coefficients sum to one
            assert!((0.5 + lambda / 2.0 + (1.0 - lambda) / 2.0 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_zero_drops_the_pseudo_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = random_classifier(5, 2, LossKind::Ap, &mut rng);
        let batch = vec![(0, 0), (2, 1), (4, 1)];
        let r = empirical_risk_co(&g, &batch, &batch, &batch, 0.0).unwrap();
        assert_eq!(r.term_pseudo, 0.0);
        assert!((r.total - (r.term_data + r.term_policy)).abs() < 1e-15);
    }

    #[test]
    fn empty_pseudo_batch_contributes_zero() {
        let g = Classifier::zeros(3, 2, LossSpec::new(LossKind::Ap));
        let data = vec![(0, 0), (1, 1)];
        let policy = vec![(2, 0), (2, 1)];
        let r = empirical_risk_pseudo(&g, &data, &[], &policy, 0.5).unwrap();
        assert_eq!(r.term_pseudo, 0.0);
        // 1/2 * l(0) + 1/4 * l(0) with l(0) = 0.5
        assert!((r.total - 0.375).abs() < 1e-12);
    }

    #[test]
    fn empirical_risk_matches_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = random_classifier(6, 3, LossKind::Sigmoid, &mut rng);
        let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<(usize, usize)> {
            (0..n)
                .map(|_| (rng.gen_range(0..6), rng.gen_range(0..3)))
                .collect()
        };
        let data = draw(&mut rng, 40);
        let pseudo = draw(&mut rng, 10);
        let policy = draw(&mut rng, 25);
        let lambda = 0.5;
        let r = empirical_risk_co(&g, &data, &pseudo, &policy, lambda).unwrap();
        let mut oracle = 0.0;
        for &(s, a) in &data {
            oracle += 0.5 * g.loss().eval(g.score(s, a)).unwrap() / data.len() as f64;
        }
        for &(s, a) in &pseudo {
            oracle += 0.25 * g.loss().eval(-g.score(s, a)).unwrap() / pseudo.len() as f64;
        }
        for &(s, a) in &policy {
            oracle += 0.25 * g.loss().eval(-g.score(s, a)).unwrap() / policy.len() as f64;
        }
        assert!((r.total - oracle).abs() < 1e-12);
        // pseudo-path entry point computes the identical number
        let r2 = empirical_risk_pseudo(&g, &data, &pseudo, &policy, lambda).unwrap();
        assert_eq!(r.total, r2.total);
    }

    #[test]
    fn empty_required_batches_are_rejected() {
        let g = Classifier::zeros(2, 2, LossSpec::new(LossKind::Ap));
        assert!(empirical_risk_co(&g, &[], &[], &[(0, 0)], 0.5).is_err());
        assert!(empirical_risk_co(&g, &[(0, 0)], &[], &[], 0.5).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut worst_rel = 0.0f64;
        for trial in 0..100 {
            let kind = LossKind::symmetric()[trial % 5];
            let g = random_classifier(5, 3, kind, &mut rng);
            let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<(usize, usize)> {
                (0..n)
                    .map(|_| (rng.gen_range(0..5), rng.gen_range(0..3)))
                    .collect()
            };
            let data = draw(&mut rng, 12);
            let pseudo = draw(&mut rng, 6);
            let policy = draw(&mut rng, 9);
            let lambda = rng.gen_range(0.0..=1.0);
            let wd = 1e-4;
            let grad = risk_gradient(&g, &data, &pseudo, &policy, lambda, wd);
            let objective = |scores: &[f64]| -> f64 {
                let gg = Classifier::new(5, 3, scores.to_vec(), *g.loss()).unwrap();
                let r = empirical_risk_co(&gg, &data, &pseudo, &policy, lambda).unwrap();
                r.total + wd * scores.iter().map(|s| s * s).sum::<f64>()
            };
            let h = 1e-5;
            for i in 0..grad.len() {
                let mut plus = g.scores().to_vec();
                plus[i] += h;
                let mut minus = g.scores().to_vec();
                minus[i] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let rel = (grad[i] - fd).abs() / grad[i].abs().max(1.0);
                worst_rel = worst_rel.max(rel);
            }
        }
        assert!(worst_rel < 1e-5, "worst relative error {worst_rel}");
    }

    #[test]
    fn grad_step_descends_and_respects_flat_regions() {
        // unhinged loss with balanced coefficients: data pushes down by
        // 1/2, policy pushes up by (1-lambda)/2 = 1/2 at lambda=0, so the
        // risk gradient cancels and only weight decay moves the scores.
        let g = Classifier::new(
            2,
            2,
            vec![1.0, -2.0, 0.5, 0.0],
            LossSpec::new(LossKind::Unhinged),
        )
        .unwrap();
        let batch = vec![(0, 0), (1, 1)];
        let wd = 0.01;
        let stepped = classifier_grad_step(&g, &batch, &[], &batch, 0.0, 0.1, wd).unwrap();
        for (before, after) in g.scores().iter().zip(stepped.scores()) {
            let expected = before - 0.1 * 2.0 * wd * before;
            assert!((after - expected).abs() < 1e-12);
        }

        // a single-sample batch strictly decreases the risk for a small step
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = random_classifier(4, 2, LossKind::Ap, &mut rng);
        let data = vec![(1, 0)];
        let policy = vec![(3, 1)];
        let before = empirical_risk_co(&g, &data, &[], &policy, 0.5).unwrap();
        let stepped = classifier_grad_step(&g, &data, &[], &policy, 0.5, 1e-3, 0.0).unwrap();
        let after = empirical_risk_co(&stepped, &data, &[], &policy, 0.5).unwrap();
        assert!(after.total < before.total);
    }

    #[test]
    fn report_terms_sum_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let g = random_classifier(5, 3, LossKind::Ap, &mut rng);
        let batch = vec![(0, 1), (4, 2), (2, 0)];
        let r = empirical_risk_co(&g, &batch, &batch, &batch, 0.37).unwrap();
        assert!((r.total - (r.term_data + r.term_pseudo + r.term_policy)).abs() < 1e-12);
    }
}

//! Training loops: the co-pseudo-labeling method, its naive-pseudo-label
//! and GAIL-style ablations, and behavior cloning.
//!
//! One run is strictly sequential; all randomness flows from the config
//! seed through fixed stream tags, so records are byte-reproducible.
//! The true reward table is read only to fill evaluation columns, never to
//! train.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demo::{split_dataset, DemoDataset, Minibatch, SampleSource};
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossSpec};
use crate::mdp::{
    occupancy_exact, return_from_density, sample_occupancy_pair, value_iteration_from,
    MdpSpec, NormalizationMode, StateActionDensity, TabularPolicy, Trajectory,
};
use crate::pseudo::{co_pseudo_label, pseudo_label_relaxed, self_pseudo_label, PseudoBatch, PseudoSource};
use crate::risk::{classifier_grad_step, empirical_risk_co, Classifier, RiskReport};
use crate::verify::kappa_estimate;

/// Classifier scores beyond this magnitude flag a run warning; expected
/// only for unbounded losses run without weight decay.
pub const SCORE_MAGNITUDE_WARN: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    RilCo,
    RilP,
    GailLogistic,
    GailUnhinged,
    GailAp,
    Bc,
}

impl Method {
    pub fn token(&self) -> &'static str {
        match self {
            Method::RilCo => "ril-co",
            Method::RilP => "ril-p",
            Method::GailLogistic => "gail-logistic",
            Method::GailUnhinged => "gail-unhinged",
            Method::GailAp => "gail-ap",
            Method::Bc => "bc",
        }
    }

    pub fn from_token(token: &str) -> Result<Method> {
        match token {
            "ril-co" => Ok(Method::RilCo),
            "ril-p" => Ok(Method::RilP),
            "gail-logistic" => Ok(Method::GailLogistic),
            "gail-unhinged" => Ok(Method::GailUnhinged),
            "gail-ap" => Ok(Method::GailAp),
            "bc" => Ok(Method::Bc),
            other => Err(Error::domain(format!("unknown method `{other}`"))),
        }
    }

    /// The loss each GAIL variant is defined with; `None` where the loss
    /// is a free choice.
    pub fn fixed_loss(&self) -> Option<LossKind> {
        match self {
            Method::GailLogistic => Some(LossKind::Logistic),
            Method::GailUnhinged => Some(LossKind::Unhinged),
            Method::GailAp => Some(LossKind::Ap),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlMode {
    /// Plan against the synthetic reward and mix toward the softened
    /// greedy policy. Deterministic and fast.
    Exact,
    /// Score-function gradient on tabular softmax logits from sampled
    /// rollouts, with a per-state mean baseline.
    Reinforce,
}

impl RlMode {
    pub fn token(&self) -> &'static str {
        match self {
            RlMode::Exact => "exact",
            RlMode::Reinforce => "reinforce",
        }
    }

    pub fn from_token(token: &str) -> Result<RlMode> {
        match token {
            "exact" => Ok(RlMode::Exact),
            "reinforce" => Ok(RlMode::Reinforce),
            other => Err(Error::domain(format!("unknown rl mode `{other}`"))),
        }
    }
}

/// Linear schedule for the pseudo-label weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaAnneal {
    pub start: f64,
    pub end: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub method: Method,
    pub lambda: f64,
    pub loss: LossSpec,
    /// On-policy samples collected per iteration.
    pub batch_b: usize,
    /// Candidate batch sizes for pseudo-label selection.
    pub batch_u: usize,
    pub batch_v: usize,
    /// Demonstration minibatch size for the classifier's data term.
    pub batch_d: usize,
    /// Pseudo-label budget per selection.
    pub k: usize,
    pub classifier_step: f64,
    /// Gradient steps per iteration on the same batches.
    pub classifier_inner_steps: usize,
    pub weight_decay: f64,
    pub rl_mode: RlMode,
    /// Exact mode: mixing weight in (0,1]. Reinforce mode: logit step size.
    pub rl_step: f64,
    /// Temperature of the softened greedy target in exact mode.
    pub policy_temperature: f64,
    pub iterations: usize,
    pub seed: u64,
    pub lambda_anneal: Option<LambdaAnneal>,
    /// Permit a non-symmetric loss in the robust methods (ablation).
    pub allow_nonsymmetric: bool,
    /// Pseudo-label selection ignores the negative-score filter (ablation).
    pub relaxed_selection: bool,
}

impl TrainerConfig {
    /// Desk-scale profile: small batches sized for a 25-state benchmark.
    pub fn desk(method: Method) -> TrainerConfig {
        let loss = LossSpec::new(method.fixed_loss().unwrap_or(LossKind::Ap));
        TrainerConfig {
            method,
            lambda: if method.fixed_loss().is_some() { 0.0 } else { 0.5 },
            loss,
            batch_b: 64,
            batch_u: 64,
            batch_v: 64,
            batch_d: 64,
            k: 16,
            classifier_step: 0.2,
            classifier_inner_steps: 1,
            weight_decay: 1e-4,
            rl_mode: RlMode::Exact,
            rl_step: 0.1,
            policy_temperature: 0.02,
            iterations: 2000,
            seed: 1,
            lambda_anneal: None,
            allow_nonsymmetric: false,
            relaxed_selection: false,
        }
    }

    /// Full-size batches (B = U = V = 640, K = 128, classifier minibatch 128).
    pub fn paper_faithful(method: Method) -> TrainerConfig {
        TrainerConfig {
            batch_b: 640,
            batch_u: 640,
            batch_v: 640,
            batch_d: 128,
            k: 128,
            ..TrainerConfig::desk(method)
        }
    }

    /// Validate the configuration; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invariant(format!(
                "lambda must lie in [0,1], got {}",
                self.lambda
            )));
        }
        if self.iterations == 0 {
            return Err(Error::invariant("iterations must be positive"));
        }
        if self.method == Method::Bc {
            return Ok(warnings);
        }
        if self.batch_b == 0 || self.batch_u == 0 || self.batch_v == 0 || self.batch_d == 0 {
            return Err(Error::invariant("batch sizes must be positive"));
        }
        if self.k == 0 || self.k > self.batch_u || self.k > self.batch_v {
            return Err(Error::invariant(format!(
                "pseudo budget k = {} must lie in 1..=min(U, V) = {}",
                self.k,
                self.batch_u.min(self.batch_v)
            )));
        }
        if !(self.classifier_step > 0.0) {
            return Err(Error::invariant("classifier step must be positive"));
        }
        if self.classifier_inner_steps == 0 {
            return Err(Error::invariant("classifier inner steps must be positive"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invariant("weight decay must be non-negative"));
        }
        if !(self.policy_temperature > 0.0) {
            return Err(Error::invariant("policy temperature must be positive"));
        }
        match self.rl_mode {
            RlMode::Exact => {
                if !(self.rl_step > 0.0 && self.rl_step <= 1.0) {
                    return Err(Error::invariant(format!(
                        "exact rl step must lie in (0,1], got {}",
                        self.rl_step
                    )));
                }
            }
            RlMode::Reinforce => {
                if !(self.rl_step > 0.0) {
                    return Err(Error::invariant("reinforce step must be positive"));
                }
            }
        }
        if let Some(fixed) = self.method.fixed_loss() {
            if self.loss.kind != fixed {
                return Err(Error::invariant(format!(
                    "method {} is defined with the {} loss, got {}",
                    self.method,
                    fixed,
                    self.loss.kind
                )));
            }
            if self.lambda != 0.0 {
                return Err(Error::invariant(format!(
                    "method {} omits pseudo-labeling and requires lambda = 0",
                    self.method
                )));
            }
        }
        if matches!(self.method, Method::RilCo | Method::RilP) {
            if !self.loss.is_symmetric() && !self.allow_nonsymmetric {
                return Err(Error::invariant(format!(
                    "{} requires a symmetric loss; `{}` is not (pass the \
                     non-symmetric override to run the ablation)",
                    self.method, self.loss.kind
                )));
            }
            let effective_min = self
                .lambda_anneal
                .map(|a| a.start.min(a.end))
                .unwrap_or(self.lambda);
            if effective_min < 0.5 {
                warnings.push(format!(
                    "lambda = {effective_min} is below 0.5; the identification \
                     guarantee can fail once the policy nears the expert"
                ));
            }
            if let Some(a) = self.lambda_anneal {
                if !(0.0..=1.0).contains(&a.start) || !(0.0..=1.0).contains(&a.end) || a.iterations == 0 {
                    return Err(Error::invariant("lambda anneal schedule out of range"));
                }
            }
        } else if self.lambda_anneal.is_some() {
            return Err(Error::invariant(
                "lambda annealing only applies to the pseudo-labeling methods",
            ));
        }
        Ok(warnings)
    }

    fn lambda_at(&self, iteration: usize) -> f64 {
        match self.lambda_anneal {
            Some(a) => {
                let frac = (iteration as f64 / a.iterations as f64).min(1.0);
                a.start + (a.end - a.start) * frac
            }
            None => self.lambda,
        }
    }
}

/// Exact densities needed for the evaluation-only diagnostics.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub rho_e: StateActionDensity,
    pub rho_n: StateActionDensity,
}

/// One logged iteration. Only the spec'd CSV columns are serialized; the
/// remaining fields support in-process invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRow {
    pub iteration: usize,
    pub report: Option<RiskReport>,
    pub true_return: f64,
    pub pseudo_size: usize,
    pub pseudo_precision: Option<f64>,
    pub kappa: Option<(f64, f64)>,
    /// Mean synthetic reward objective over the on-policy batch.
    pub policy_objective: Option<f64>,
    pub p1_source: Option<PseudoSource>,
    pub p2_source: Option<PseudoSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub rows: Vec<IterationRow>,
    pub warnings: Vec<String>,
    /// Mean true return over the last 10% of iterations.
    pub final_mean_return: f64,
}

impl TrainRecord {
    fn finish(rows: Vec<IterationRow>, warnings: Vec<String>) -> TrainRecord {
        let tail = (rows.len() / 10).max(1);
        let final_mean_return =
            rows[rows.len() - tail..].iter().map(|r| r.true_return).sum::<f64>() / tail as f64;
        TrainRecord { rows, warnings, final_mean_return }
    }
}

/// Serialize a record to the run CSV (header, one row per iteration, and a
/// trailing summary row carrying the final mean return).
pub fn record_to_csv(record: &TrainRecord) -> String {
    let mut out = String::from(
        "iteration,total,term_data,term_pseudo,term_policy,lambda,true_return,pseudo_size,pseudo_precision,kappa_hat,kappa_residual\n",
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for row in &record.rows {
        let (total, data, pseudo, policy, lambda) = match &row.report {
            Some(r) => (
                format!("{}", r.total),
                format!("{}", r.term_data),
                format!("{}", r.term_pseudo),
                format!("{}", r.term_policy),
                format!("{}", r.lambda),
            ),
            None => Default::default(),
        };
        let (kappa_hat, kappa_residual) = match row.kappa {
            Some((k, r)) => (format!("{k}"), format!("{r}")),
            None => Default::default(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.iteration,
            total,
            data,
            pseudo,
            policy,
            lambda,
            row.true_return,
            row.pseudo_size,
            opt(row.pseudo_precision),
            kappa_hat,
            kappa_residual,
        ));
    }
    out.push_str(&format!("summary,,,,,,{},,,,\n", record.final_mean_return));
    out
}

/// Synthetic reward `l(-g(x))`: high where the classifier scores the pair
/// expert-like. Requires a symmetric loss, matching the theory.
pub fn synth_reward(g: &Classifier, x: (usize, usize)) -> Result<f64> {
    g.require_symmetric()?;
    Ok(g.loss().eval_finite(-g.score(x.0, x.1)))
}

/// Synthetic reward for the whole table, without the symmetry gate (the
/// ablations deliberately run non-symmetric losses through it).
pub fn synth_reward_table(g: &Classifier) -> Vec<f64> {
    let mut table = vec![0.0; g.n_states() * g.n_actions()];
    for s in 0..g.n_states() {
        for a in 0..g.n_actions() {
            table[s * g.n_actions() + a] = g.loss().eval_finite(-g.score(s, a));
        }
    }
    table
}

/// One policy-improvement step against the classifier's synthetic reward.
pub fn rl_step(
    mdp: &MdpSpec,
    policy: &TabularPolicy,
    g: &Classifier,
    mode: RlMode,
    step: f64,
    policy_temperature: f64,
    batch: &[Trajectory],
) -> Result<TabularPolicy> {
    let reward = synth_reward_table(g);
    match mode {
        RlMode::Exact => {
            let mut q = vec![0.0; mdp.n_states() * mdp.n_actions()];
            exact_step(mdp, policy, &reward, step, policy_temperature, &mut q)
        }
        RlMode::Reinforce => reinforce_step(mdp, policy, &reward, step, batch),
    }
}

fn exact_step(
    mdp: &MdpSpec,
    policy: &TabularPolicy,
    reward: &[f64],
    step: f64,
    temperature: f64,
    warm_q: &mut Vec<f64>,
) -> Result<TabularPolicy> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::domain(format!("exact rl step must lie in (0,1], got {step}")));
    }
    let planning = mdp.with_reward(reward.to_vec())?;
    let q = value_iteration_from(&planning, 1e-9, std::mem::take(warm_q))?;
    let target = TabularPolicy::softmax(&q, mdp.n_states(), mdp.n_actions(), temperature)?;
    *warm_q = q;
    policy.mix_with(&target, step)
}

fn reinforce_step(
    mdp: &MdpSpec,
    policy: &TabularPolicy,
    reward: &[f64],
    step: f64,
    batch: &[Trajectory],
) -> Result<TabularPolicy> {
    if batch.is_empty() {
        return Err(Error::domain("reinforce mode needs a trajectory batch"));
    }
    if !(step > 0.0) {
        return Err(Error::domain("reinforce step must be positive"));
    }
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let gamma = mdp.gamma();

    // discounted returns-to-go per step
    let mut returns: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
    for tr in batch {
        let mut g_to_go = vec![0.0; tr.steps.len()];
        let mut acc = 0.0;
        for (t, &(s, a)) in tr.steps.iter().enumerate().rev() {
            acc = reward[s * na + a] + gamma * acc;
            g_to_go[t] = acc;
        }
        returns.push(g_to_go);
    }
    // per-state mean baseline over all visits in the batch
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0usize; n];
    for (tr, g_to_go) in batch.iter().zip(&returns) {
        for (&(s, _), &g) in tr.steps.iter().zip(g_to_go) {
            sum[s] += g;
            count[s] += 1;
        }
    }
    let baseline: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();

    // softmax-logit score function: d log pi(a_t|s_t) / d theta[s][a]
    let mut grad = vec![0.0f64; n * na];
    for (tr, g_to_go) in batch.iter().zip(&returns) {
        let mut discount = 1.0;
        for (&(s, a_t), &g) in tr.steps.iter().zip(g_to_go) {
            let advantage = g - baseline[s];
            let w = discount * advantage;
            for a in 0..na {
                let indicator = if a == a_t { 1.0 } else { 0.0 };
                grad[s * na + a] += w * (indicator - policy.prob(s, a));
            }
            discount *= gamma;
        }
    }
    let scale = step / batch.len() as f64;
    let mut logits: Vec<f64> = policy.table().iter().map(|p| p.max(1e-300).ln()).collect();
    for (l, g) in logits.iter_mut().zip(&grad) {
        *l += scale * g;
    }
    TabularPolicy::softmax(&logits, n, na, 1.0)
}

fn derive_seed(base: u64, tag: u64) -> u64 {
    // splitmix64 over base ^ golden-ratio-scaled tag
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_SPLIT: u64 = 1;
const TAG_POLICY_BATCH: u64 = 2;
const TAG_BATCH_U: u64 = 3;
const TAG_BATCH_V: u64 = 4;
const TAG_BATCH_D1: u64 = 5;
const TAG_BATCH_D2: u64 = 6;

fn check_dataset(mdp: &MdpSpec, dataset: &DemoDataset) -> Result<()> {
    for &(s, a) in dataset.samples() {
        if s >= mdp.n_states() || a >= mdp.n_actions() {
            return Err(Error::invariant(format!(
                "dataset sample ({s},{a}) is outside the environment's state-action space"
            )));
        }
    }
    Ok(())
}

/// Dispatch on the configured method.
pub fn train(
    mdp: &MdpSpec,
    dataset: &DemoDataset,
    cfg: &TrainerConfig,
    eval: Option<&EvalContext>,
) -> Result<(TabularPolicy, TrainRecord)> {
    match cfg.method {
        Method::RilCo => train_ril_co(mdp, dataset, cfg, eval),
        Method::Bc => train_bc(mdp, dataset, cfg, eval),
        _ => train_baseline(mdp, dataset, cfg, eval),
    }
}

/// The full co-pseudo-labeling loop: split the demonstrations, cross-label
/// negatives between two classifiers, descend both empirical risks, and
/// improve the policy against the first classifier's synthetic reward.
pub fn train_ril_co(
    mdp: &MdpSpec,
    dataset: &DemoDataset,
    cfg: &TrainerConfig,
    eval: Option<&EvalContext>,
) -> Result<(TabularPolicy, TrainRecord)> {
    if cfg.method != Method::RilCo {
        return Err(Error::invariant("train_ril_co requires the ril-co method"));
    }
    let mut warnings = cfg.validate()?;
    check_dataset(mdp, dataset)?;
    let split = split_dataset(dataset, derive_seed(cfg.seed, TAG_SPLIT))?;
    let mut loop_state = LoopState::new(mdp, cfg);
    let mut g1 = Classifier::zeros(mdp.n_states(), mdp.n_actions(), cfg.loss);
    let mut g2 = Classifier::zeros(mdp.n_states(), mdp.n_actions(), cfg.loss);
    let mut rows = Vec::with_capacity(cfg.iterations);

    for t in 0..cfg.iterations {
        let lambda = cfg.lambda_at(t);
        let (policy_pairs, trajectories) = loop_state.collect_on_policy(mdp)?;

        let u = split.d2.sample_minibatch(cfg.batch_u, derive_seed(cfg.seed, TAG_BATCH_U), t as u64)?;
        let p1 = select_pseudo(cfg, &g2, &u, PseudoSource::FromD2)?;
        let v = split.d1.sample_minibatch(cfg.batch_v, derive_seed(cfg.seed, TAG_BATCH_V), t as u64)?;
        let p2 = select_pseudo(cfg, &g1, &v, PseudoSource::FromD1)?;
        let d1_batch =
            split.d1.sample_minibatch(cfg.batch_d, derive_seed(cfg.seed, TAG_BATCH_D1), t as u64)?;
        let d2_batch =
            split.d2.sample_minibatch(cfg.batch_d, derive_seed(cfg.seed, TAG_BATCH_D2), t as u64)?;

        // risk of the reward classifier before this iteration's descent
        let report = empirical_risk_co(&g1, &d1_batch.pairs, &p1.samples, &policy_pairs, lambda)?;
        let policy_objective = mean_negated_loss(&g1, &policy_pairs);

        for _ in 0..cfg.classifier_inner_steps {
            g1 = classifier_grad_step(
                &g1,
                &d1_batch.pairs,
                &p1.samples,
                &policy_pairs,
                lambda,
                cfg.classifier_step,
                cfg.weight_decay,
            )?;
            g2 = classifier_grad_step(
                &g2,
                &d2_batch.pairs,
                &p2.samples,
                &policy_pairs,
                lambda,
                cfg.classifier_step,
                cfg.weight_decay,
            )?;
        }
        // rewards come from the freshly trained first classifier, never g2
        loop_state.improve_policy(mdp, cfg, &g1, &trajectories)?;
        loop_state.flag_magnitude(&g1, &mut warnings);

        let precision = pseudo_precision(&[&p1, &p2], &[&split.d2, &split.d1]);
        rows.push(loop_state.evaluate_row(
            mdp,
            eval,
            t,
            Some(report),
            p1.len() + p2.len(),
            precision,
            Some(policy_objective),
            Some(p1.source),
            Some(p2.source),
        )?);
    }
    Ok((loop_state.policy, TrainRecord::finish(rows, warnings)))
}

/// The single-classifier baselines: GAIL variants (lambda = 0, no
/// pseudo-labeling) and the naive-pseudo-labeling ablation.
pub fn train_baseline(
    mdp: &MdpSpec,
    dataset: &DemoDataset,
    cfg: &TrainerConfig,
    eval: Option<&EvalContext>,
) -> Result<(TabularPolicy, TrainRecord)> {
    match cfg.method {
        Method::RilP | Method::GailLogistic | Method::GailUnhinged | Method::GailAp => {}
        Method::Bc => return train_bc(mdp, dataset, cfg, eval),
        Method::RilCo => return Err(Error::invariant("use train_ril_co for the ril-co method")),
    }
    let mut warnings = cfg.validate()?;
    check_dataset(mdp, dataset)?;
    let is_ril_p = cfg.method == Method::RilP;
    let mut loop_state = LoopState::new(mdp, cfg);
    let mut g = Classifier::zeros(mdp.n_states(), mdp.n_actions(), cfg.loss);
    let mut rows = Vec::with_capacity(cfg.iterations);

    for t in 0..cfg.iterations {
        let lambda = cfg.lambda_at(t);
        let (policy_pairs, trajectories) = loop_state.collect_on_policy(mdp)?;

        let pseudo = if is_ril_p {
            let u = dataset.sample_minibatch(cfg.batch_u, derive_seed(cfg.seed, TAG_BATCH_U), t as u64)?;
            Some(if cfg.relaxed_selection {
                pseudo_label_relaxed(&g, &u, cfg.k, PseudoSource::SelfLabeled)?
            } else {
                self_pseudo_label(&g, &u, cfg.k)?
            })
        } else {
            None
        };
        let pseudo_samples: &[(usize, usize)] =
            pseudo.as_ref().map(|p| p.samples.as_slice()).unwrap_or(&[]);
        let d_batch =
            dataset.sample_minibatch(cfg.batch_d, derive_seed(cfg.seed, TAG_BATCH_D1), t as u64)?;

        let report = empirical_risk_co(&g, &d_batch.pairs, pseudo_samples, &policy_pairs, lambda)?;
        let policy_objective = mean_negated_loss(&g, &policy_pairs);

        for _ in 0..cfg.classifier_inner_steps {
            g = classifier_grad_step(
                &g,
                &d_batch.pairs,
                pseudo_samples,
                &policy_pairs,
                lambda,
                cfg.classifier_step,
                cfg.weight_decay,
            )?;
        }
        loop_state.improve_policy(mdp, cfg, &g, &trajectories)?;
        loop_state.flag_magnitude(&g, &mut warnings);

        let (pseudo_size, precision, source) = match &pseudo {
            Some(p) => (p.len(), pseudo_precision(&[p], &[dataset]), Some(p.source)),
            None => (0, None, None),
        };
        rows.push(loop_state.evaluate_row(
            mdp,
            eval,
            t,
            Some(report),
            pseudo_size,
            precision,
            Some(policy_objective),
            source,
            None,
        )?);
    }
    Ok((loop_state.policy, TrainRecord::finish(rows, warnings)))
}

/// Behavior cloning: the add-one-smoothed maximum-likelihood policy. Never
/// interacts with the environment dynamics.
pub fn train_bc(
    mdp: &MdpSpec,
    dataset: &DemoDataset,
    cfg: &TrainerConfig,
    eval: Option<&EvalContext>,
) -> Result<(TabularPolicy, TrainRecord)> {
    if cfg.method != Method::Bc {
        return Err(Error::invariant("train_bc requires the bc method"));
    }
    let warnings = cfg.validate()?;
    check_dataset(mdp, dataset)?;
    if dataset.is_empty() {
        return Err(Error::domain("behavior cloning needs a non-empty dataset"));
    }
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let mut counts = vec![0.0f64; n * na];
    for &(s, a) in dataset.samples() {
        counts[s * na + a] += 1.0;
    }
    let mut probs = vec![0.0; n * na];
    for s in 0..n {
        let total: f64 = counts[s * na..][..na].iter().sum();
        for a in 0..na {
            probs[s * na + a] = (counts[s * na + a] + 1.0) / (total + na as f64);
        }
        let sum: f64 = probs[s * na..][..na].iter().sum();
        for a in 0..na {
            probs[s * na + a] /= sum;
        }
    }
    let policy = TabularPolicy::new(n, na, probs)?;
    let rho = occupancy_exact(mdp, &policy, NormalizationMode::InfiniteHorizon)?;
    let kappa = eval
        .map(|e| kappa_estimate(&rho, &e.rho_e, &e.rho_n))
        .transpose()?;
    let row = IterationRow {
        iteration: 1,
        report: None,
        true_return: return_from_density(mdp, &rho),
        pseudo_size: 0,
        pseudo_precision: None,
        kappa,
        policy_objective: None,
        p1_source: None,
        p2_source: None,
    };
    Ok((policy, TrainRecord::finish(vec![row], warnings)))
}

fn select_pseudo(
    cfg: &TrainerConfig,
    scorer: &Classifier,
    candidates: &Minibatch,
    source: PseudoSource,
) -> Result<PseudoBatch> {
    if cfg.relaxed_selection {
        pseudo_label_relaxed(scorer, candidates, cfg.k, source)
    } else {
        co_pseudo_label(scorer, candidates, cfg.k, source)
    }
}

fn mean_negated_loss(g: &Classifier, batch: &[(usize, usize)]) -> f64 {
    batch
        .iter()
        .map(|&(s, a)| g.loss().eval_finite(-g.score(s, a)))
        .sum::<f64>()
        / batch.len() as f64
}

/// Fraction of selected pseudo samples that are truly non-expert, judged
/// by hidden provenance. `None` when provenance is unavailable or nothing
/// was selected.
fn pseudo_precision(batches: &[&PseudoBatch], sources: &[&DemoDataset]) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (batch, dataset) in batches.iter().zip(sources) {
        let tags = dataset.provenance_for_eval()?;
        for &idx in &batch.indices {
            total += 1;
            if matches!(tags[idx], SampleSource::NonExpert(_)) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        None
    } else {
        Some(hits as f64 / total as f64)
    }
}

/// Mutable per-run state: the policy, its RNG stream, and the warm-start
/// Q table for exact planning.
struct LoopState {
    policy: TabularPolicy,
    rollout_rng: ChaCha8Rng,
    warm_q: Vec<f64>,
    batch_b: usize,
    mode: RlMode,
    magnitude_flagged: bool,
}

impl LoopState {
    fn new(mdp: &MdpSpec, cfg: &TrainerConfig) -> LoopState {
        let mut rollout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_POLICY_BATCH));
        rollout_rng.set_stream(0);
        LoopState {
            policy: TabularPolicy::uniform(mdp.n_states(), mdp.n_actions()),
            rollout_rng,
            warm_q: vec![0.0; mdp.n_states() * mdp.n_actions()],
            batch_b: cfg.batch_b,
            mode: cfg.rl_mode,
            magnitude_flagged: false,
        }
    }

    /// Collect the on-policy batch. Exact mode draws i.i.d. pairs from the
    /// discounted occupancy; reinforce mode collects whole trajectories
    /// until the step budget is met and flattens them.
    fn collect_on_policy(&mut self, mdp: &MdpSpec) -> Result<(Vec<(usize, usize)>, Vec<Trajectory>)> {
        Ok(match self.mode {
            RlMode::Exact => {
                let pairs = (0..self.batch_b)
                    .map(|_| sample_occupancy_pair(mdp, &self.policy, &mut self.rollout_rng))
                    .collect();
                (pairs, Vec::new())
            }
            RlMode::Reinforce => {
                let mut trajectories = Vec::new();
                let mut pairs = Vec::new();
                while pairs.len() < self.batch_b {
                    let tr = rollout_with(mdp, &self.policy, &mut self.rollout_rng);
                    pairs.extend_from_slice(&tr.steps);
                    trajectories.push(tr);
                }
                (pairs, trajectories)
            }
        })
    }

    fn improve_policy(
        &mut self,
        mdp: &MdpSpec,
        cfg: &TrainerConfig,
        g: &Classifier,
        trajectories: &[Trajectory],
    ) -> Result<()> {
        let reward = synth_reward_table(g);
        self.policy = match cfg.rl_mode {
            RlMode::Exact => exact_step(
                mdp,
                &self.policy,
                &reward,
                cfg.rl_step,
                cfg.policy_temperature,
                &mut self.warm_q,
            )?,
            RlMode::Reinforce => {
                reinforce_step(mdp, &self.policy, &reward, cfg.rl_step, trajectories)?
            }
        };
        Ok(())
    }

    fn flag_magnitude(&mut self, g: &Classifier, warnings: &mut Vec<String>) {
        if !self.magnitude_flagged && g.max_abs_score() > SCORE_MAGNITUDE_WARN {
            warnings.push(format!(
                "classifier score magnitude exceeded {SCORE_MAGNITUDE_WARN:.0}; an unbounded \
                 loss without weight decay diverges"
            ));
            self.magnitude_flagged = true;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate_row(
        &self,
        mdp: &MdpSpec,
        eval: Option<&EvalContext>,
        t: usize,
        report: Option<RiskReport>,
        pseudo_size: usize,
        pseudo_precision: Option<f64>,
        policy_objective: Option<f64>,
        p1_source: Option<PseudoSource>,
        p2_source: Option<PseudoSource>,
    ) -> Result<IterationRow> {
        let rho = occupancy_exact(mdp, &self.policy, NormalizationMode::InfiniteHorizon)?;
        let kappa = eval
            .map(|e| kappa_estimate(&rho, &e.rho_e, &e.rho_n))
            .transpose()?;
        Ok(IterationRow {
            iteration: t + 1,
            report,
            true_return: return_from_density(mdp, &rho),
            pseudo_size,
            pseudo_precision,
            kappa,
            policy_objective,
            p1_source,
            p2_source,
        })
    }
}

fn rollout_with(mdp: &MdpSpec, policy: &TabularPolicy, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut steps = Vec::with_capacity(mdp.horizon());
    let mut s = sample_idx(mdp.initial(), rng.gen::<f64>());
    for _ in 0..mdp.horizon() {
        let a = sample_idx(policy.row(s), rng.gen::<f64>());
        steps.push((s, a));
        s = sample_idx(mdp.transition_row(s, a), rng.gen::<f64>());
    }
    Trajectory { steps }
}

fn sample_idx(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

//! Finite MDPs: exact occupancy measures, planning, and rollout sampling.
//!
//! The discounted state-action density (normalized occupancy measure) is
//! the central object: it is computed exactly by a linear solve, uniquely
//! corresponds to a policy on visited states, and is what both the risk
//! machinery and the verification suites consume.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::parallel::par_map;

const ROW_SUM_TOL: f64 = 1e-12;
const DENSITY_SUM_TOL: f64 = 1e-9;

/// A finite MDP. The reward table is the *true* task reward and is used
/// for evaluation and snapshot construction only; imitation trainers never
/// read it.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    n_states: usize,
    n_actions: usize,
    /// Row-major `[s][a][s']` transition probabilities.
    transition: Vec<f64>,
    /// Initial state distribution.
    initial: Vec<f64>,
    /// `[s][a]` reward table.
    reward: Vec<f64>,
    gamma: f64,
    horizon: usize,
}

impl MdpSpec {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        initial: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        horizon: usize,
    ) -> Result<MdpSpec> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invariant("MDP needs at least one state and action"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invariant(format!(
                "discount must lie in (0,1), got {gamma}"
            )));
        }
        if horizon == 0 {
            return Err(Error::invariant("horizon must be positive"));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::invariant("transition tensor has wrong size"));
        }
        if initial.len() != n_states {
            return Err(Error::invariant("initial distribution has wrong size"));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::invariant("reward table has wrong size"));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                check_distribution_row(row, ROW_SUM_TOL)
                    .map_err(|e| Error::invariant(format!("transition row (s={s}, a={a}): {e}")))?;
            }
        }
        check_distribution_row(&initial, ROW_SUM_TOL)
            .map_err(|e| Error::invariant(format!("initial distribution: {e}")))?;
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::invariant("reward table contains non-finite entries"));
        }
        Ok(MdpSpec {
            n_states,
            n_actions,
            transition,
            initial,
            reward,
            gamma,
            horizon,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transition_prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Same dynamics with a different reward table (used for planning under
    /// a synthetic reward).
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<MdpSpec> {
        MdpSpec::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.initial.clone(),
            reward,
            self.gamma,
            self.horizon,
        )
    }
}

fn check_distribution_row(row: &[f64], tol: f64) -> std::result::Result<(), String> {
    let mut sum = 0.0;
    for &p in row {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(format!("entry {p} is not a probability"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > tol {
        return Err(format!("row sums to {sum}, expected 1"));
    }
    Ok(())
}

/// A stochastic policy table pi(a|s).
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<TabularPolicy> {
        if probs.len() != n_states * n_actions {
            return Err(Error::invariant("policy table has wrong size"));
        }
        for s in 0..n_states {
            check_distribution_row(&probs[s * n_actions..][..n_actions], ROW_SUM_TOL)
                .map_err(|e| Error::invariant(format!("policy row s={s}: {e}")))?;
        }
        Ok(TabularPolicy { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> TabularPolicy {
        let p = 1.0 / n_actions as f64;
        TabularPolicy {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    /// Rows proportional to `exp(logits / temperature)`, computed stably.
    pub fn softmax(logits: &[f64], n_states: usize, n_actions: usize, temperature: f64) -> Result<TabularPolicy> {
        if temperature <= 0.0 {
            return Err(Error::domain(format!(
                "softmax temperature must be positive, got {temperature}"
            )));
        }
        let mut probs = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            let row = &logits[s * n_actions..][..n_actions];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for a in 0..n_actions {
                let e = ((row[a] - m) / temperature).exp();
                probs[s * n_actions + a] = e;
                sum += e;
            }
            for a in 0..n_actions {
                probs[s * n_actions + a] /= sum;
            }
        }
        TabularPolicy::new(n_states, n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..][..self.n_actions]
    }

    pub fn table(&self) -> &[f64] {
        &self.probs
    }

    /// Convex combination `(1-eta) * self + eta * other`, row-stochastic by
    /// construction.
    pub fn mix_with(&self, other: &TabularPolicy, eta: f64) -> Result<TabularPolicy> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::domain(format!("mix weight must be in [0,1], got {eta}")));
        }
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::invariant("policy shapes differ"));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (1.0 - eta) * a + eta * b)
            .collect();
        TabularPolicy::new(self.n_states, self.n_actions, probs)
    }
}

/// How a [`StateActionDensity`] was normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationMode {
    /// Exact discounted flow over an infinite horizon (linear solve).
    InfiniteHorizon,
    /// Forward recursion over the MDP horizon, rescaled to sum to one.
    FiniteHorizon,
}

/// A normalized discounted state-action visitation table.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionDensity {
    n_states: usize,
    n_actions: usize,
    density: Vec<f64>,
    mode: NormalizationMode,
}

impl StateActionDensity {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        density: Vec<f64>,
        mode: NormalizationMode,
    ) -> Result<StateActionDensity> {
        if density.len() != n_states * n_actions {
            return Err(Error::invariant("density table has wrong size"));
        }
        let mut sum = 0.0;
        for &d in &density {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::invariant(format!("density entry {d} is negative or non-finite")));
            }
            sum += d;
        }
        if (sum - 1.0).abs() > DENSITY_SUM_TOL {
            return Err(Error::invariant(format!("density sums to {sum}, expected 1")));
        }
        Ok(StateActionDensity { n_states, n_actions, density, mode })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.density[s * self.n_actions + a]
    }

    pub fn table(&self) -> &[f64] {
        &self.density
    }

    pub fn mode(&self) -> NormalizationMode {
        self.mode
    }

    /// Marginal state mass `rho(s)`.
    pub fn state_mass(&self, s: usize) -> f64 {
        self.density[s * self.n_actions..][..self.n_actions].iter().sum()
    }

    /// Elementwise convex combination of two densities over the same space.
    pub fn blend(&self, other: &StateActionDensity, weight_other: f64) -> Result<StateActionDensity> {
        if !(0.0..=1.0).contains(&weight_other) {
            return Err(Error::domain(format!(
                "blend weight must be in [0,1], got {weight_other}"
            )));
        }
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::invariant("density shapes differ"));
        }
        if self.mode != other.mode {
            return Err(Error::invariant("cannot blend densities with different normalization modes"));
        }
        let table = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (1.0 - weight_other) * a + weight_other * b)
            .collect();
        StateActionDensity::new(self.n_states, self.n_actions, table, self.mode)
    }

    /// Total variation distance to another density on the same space.
    pub fn total_variation(&self, other: &StateActionDensity) -> f64 {
        0.5 * self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// One rollout: `horizon` consecutive (state, action) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
}

/// Exact normalized occupancy measure of `policy` in `mdp`.
///
/// Infinite-horizon mode solves the discounted flow equation
/// `d = (1-gamma) * p1 + gamma * P_pi^T d` by LU factorization; the
/// finite-horizon mode runs the forward recursion over the MDP horizon and
/// rescales by `(1-gamma) / (1-gamma^T)` so the table sums to one.
pub fn occupancy_exact(
    mdp: &MdpSpec,
    policy: &TabularPolicy,
    mode: NormalizationMode,
) -> Result<StateActionDensity> {
    check_shapes(mdp, policy)?;
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let state_mass = match mode {
        NormalizationMode::InfiniteHorizon => {
            // A[s2][s] = delta - gamma * sum_a pi(a|s) p(s2|s,a)
            let gamma = mdp.gamma();
            let mut a = DMatrix::<f64>::identity(n, n);
            for s in 0..n {
                for act in 0..na {
                    let p_sa = policy.prob(s, act);
                    if p_sa == 0.0 {
                        continue;
                    }
                    let row = mdp.transition_row(s, act);
                    for s2 in 0..n {
                        a[(s2, s)] -= gamma * p_sa * row[s2];
                    }
                }
            }
            let b = DVector::from_fn(n, |s, _| (1.0 - gamma) * mdp.initial()[s]);
            let d = a
                .lu()
                .solve(&b)
                .ok_or_else(|| Error::Numeric("occupancy flow system is singular".into()))?;
            d.iter().cloned().collect::<Vec<f64>>()
        }
        NormalizationMode::FiniteHorizon => {
            let gamma = mdp.gamma();
            let t_max = mdp.horizon();
            let mut d_t = mdp.initial().to_vec();
            let mut acc = vec![0.0; n];
            let mut weight = 1.0;
            for t in 0..t_max {
                for s in 0..n {
                    acc[s] += weight * d_t[s];
                }
                weight *= gamma;
                if t + 1 < t_max {
                    let mut next = vec![0.0; n];
                    for s in 0..n {
                        if d_t[s] == 0.0 {
                            continue;
                        }
                        for act in 0..na {
                            let w = d_t[s] * policy.prob(s, act);
                            if w == 0.0 {
                                continue;
                            }
                            let row = mdp.transition_row(s, act);
                            for s2 in 0..n {
                                next[s2] += w * row[s2];
                            }
                        }
                    }
                    d_t = next;
                }
            }
            let scale = (1.0 - gamma) / (1.0 - gamma.powi(t_max as i32));
            acc.iter().map(|v| v * scale).collect()
        }
    };
    let mut table = vec![0.0; n * na];
    for s in 0..n {
        // LU round-off can leave tiny negatives on unreachable states
        let mass = state_mass[s].max(0.0);
        for a in 0..na {
            table[s * na + a] = mass * policy.prob(s, a);
        }
    }
    StateActionDensity::new(n, na, table, mode)
}

/// Expected discounted return `E_rho[r] / (1-gamma)` computed from the
/// exact infinite-horizon occupancy.
pub fn expected_return(mdp: &MdpSpec, policy: &TabularPolicy) -> Result<f64> {
    let rho = occupancy_exact(mdp, policy, NormalizationMode::InfiniteHorizon)?;
    Ok(return_from_density(mdp, &rho))
}

/// Expected discounted return read off an occupancy table directly.
pub fn return_from_density(mdp: &MdpSpec, rho: &StateActionDensity) -> f64 {
    let mut sum = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            sum += rho.get(s, a) * mdp.reward(s, a);
        }
    }
    sum / (1.0 - mdp.gamma())
}

/// The unique policy a density corresponds to: `pi(a|s) = rho(s,a) / rho(s)`,
/// with zero-mass states mapped to the uniform row.
pub fn policy_from_density(rho: &StateActionDensity) -> TabularPolicy {
    let n = rho.n_states();
    let na = rho.n_actions();
    let mut probs = vec![0.0; n * na];
    for s in 0..n {
        let mass = rho.state_mass(s);
        if mass > 0.0 {
            for a in 0..na {
                probs[s * na + a] = rho.get(s, a) / mass;
            }
            // counter rounding so constructor validation never trips
            let sum: f64 = probs[s * na..][..na].iter().sum();
            for a in 0..na {
                probs[s * na + a] /= sum;
            }
        } else {
            for a in 0..na {
                probs[s * na + a] = 1.0 / na as f64;
            }
        }
    }
    TabularPolicy::new(n, na, probs).expect("normalized rows")
}

/// Optimal Q table by value iteration, run until the sup-norm Bellman
/// residual drops below `tol`.
pub fn value_iteration(mdp: &MdpSpec, tol: f64) -> Result<Vec<f64>> {
    value_iteration_from(mdp, tol, vec![0.0; mdp.n_states() * mdp.n_actions()])
}

/// Value iteration warm-started from an existing Q table.
pub fn value_iteration_from(mdp: &MdpSpec, tol: f64, mut q: Vec<f64>) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let n = mdp.n_states();
    let na = mdp.n_actions();
    if q.len() != n * na {
        return Err(Error::invariant("warm-start Q table has wrong size"));
    }
    let gamma = mdp.gamma();
    let mut values: Vec<f64> = (0..n)
        .map(|s| q[s * na..][..na].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    loop {
        let mut delta = 0.0f64;
        for s in 0..n {
            for a in 0..na {
                let row = mdp.transition_row(s, a);
                let mut future = 0.0;
                for s2 in 0..n {
                    future += row[s2] * values[s2];
                }
                let updated = mdp.reward(s, a) + gamma * future;
                delta = delta.max((updated - q[s * na + a]).abs());
                q[s * na + a] = updated;
            }
        }
        for s in 0..n {
            values[s] = q[s * na..][..na].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        // q = T(q_prev), so its own residual is at most gamma * delta
        if gamma * delta <= tol {
            return Ok(q);
        }
    }
}

/// Greedy policy for a Q table, ties split uniformly.
pub fn greedy_policy(q: &[f64], n_states: usize, n_actions: usize) -> TabularPolicy {
    let mut probs = vec![0.0; n_states * n_actions];
    for s in 0..n_states {
        let row = &q[s * n_actions..][..n_actions];
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..n_actions).filter(|&a| row[a] == best).collect();
        for &a in &ties {
            probs[s * n_actions + a] = 1.0 / ties.len() as f64;
        }
    }
    TabularPolicy::new(n_states, n_actions, probs).expect("greedy rows normalized")
}

/// Softmax-over-Q policy ladder. Index 0 (the lowest temperature) plays the
/// expert; the rest are progressively softened snapshots.
pub fn snapshot_policies(mdp: &MdpSpec, temperatures: &[f64]) -> Result<Vec<TabularPolicy>> {
    if temperatures.is_empty() {
        return Err(Error::domain("need at least one snapshot temperature"));
    }
    for w in temperatures.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::domain("snapshot temperatures must be strictly ascending"));
        }
    }
    if temperatures[0] <= 0.0 {
        return Err(Error::domain("snapshot temperatures must be positive"));
    }
    let q = value_iteration(mdp, 1e-10)?;
    temperatures
        .iter()
        .map(|&t| TabularPolicy::softmax(&q, mdp.n_states(), mdp.n_actions(), t))
        .collect()
}

fn check_shapes(mdp: &MdpSpec, policy: &TabularPolicy) -> Result<()> {
    if mdp.n_states() != policy.n_states() || mdp.n_actions() != policy.n_actions() {
        return Err(Error::invariant("policy shape does not match MDP"));
    }
    Ok(())
}

fn sample_index(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn rollout(mdp: &MdpSpec, policy: &TabularPolicy, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut steps = Vec::with_capacity(mdp.horizon());
    let mut s = sample_index(mdp.initial(), rng.gen::<f64>());
    for _ in 0..mdp.horizon() {
        let a = sample_index(policy.row(s), rng.gen::<f64>());
        steps.push((s, a));
        s = sample_index(mdp.transition_row(s, a), rng.gen::<f64>());
    }
    Trajectory { steps }
}

/// Sample `count` independent rollouts. Each trajectory draws from its own
/// RNG stream keyed by `(rng_seed, index)`, so output is reproducible and
/// independent of thread count.
pub fn sample_trajectories(
    mdp: &MdpSpec,
    policy: &TabularPolicy,
    count: usize,
    rng_seed: u64,
) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::domain("trajectory count must be at least 1"));
    }
    check_shapes(mdp, policy)?;
    Ok(par_map(count, |i| {
        let mut rng = rng_for(rng_seed, i as u64);
        rollout(mdp, policy, &mut rng)
    }))
}

/// One (state, action) pair distributed as the finite-horizon discounted
/// occupancy: the timestep is drawn from the truncated geometric law and
/// the chain is simulated exactly that far.
pub fn sample_occupancy_pair(
    mdp: &MdpSpec,
    policy: &TabularPolicy,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let gamma = mdp.gamma();
    let t_max = mdp.horizon();
    // P(t) proportional to gamma^(t-1) for t in 1..=t_max
    let u: f64 = rng.gen();
    let mass = 1.0 - gamma.powi(t_max as i32);
    let t = (1.0 + (1.0 - u * mass).ln() / gamma.ln()).floor() as usize;
    let t = t.clamp(1, t_max);
    let mut s = sample_index(mdp.initial(), rng.gen::<f64>());
    let mut a = sample_index(policy.row(s), rng.gen::<f64>());
    for _ in 1..t {
        s = sample_index(mdp.transition_row(s, a), rng.gen::<f64>());
        a = sample_index(policy.row(s), rng.gen::<f64>());
    }
    (s, a)
}

/// Monte-Carlo estimate of the expected discounted return; returns
/// `(mean, standard_error)`.
pub fn mc_expected_return(
    mdp: &MdpSpec,
    policy: &TabularPolicy,
    count: usize,
    rng_seed: u64,
) -> Result<(f64, f64)> {
    if count < 2 {
        return Err(Error::domain("need at least two rollouts for a standard error"));
    }
    check_shapes(mdp, policy)?;
    let returns = par_map(count, |i| {
        let mut rng = rng_for(rng_seed, i as u64);
        let mut s = sample_index(mdp.initial(), rng.gen::<f64>());
        let mut total = 0.0;
        let mut w = 1.0;
        for _ in 0..mdp.horizon() {
            let a = sample_index(policy.row(s), rng.gen::<f64>());
            total += w * mdp.reward(s, a);
            w *= mdp.gamma();
            s = sample_index(mdp.transition_row(s, a), rng.gen::<f64>());
        }
        total
    });
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Monte-Carlo discount-weighted visitation histogram, normalized to a
/// density. Chunked so memory stays flat at large rollout counts.
pub fn mc_occupancy(
    mdp: &MdpSpec,
    policy: &TabularPolicy,
    count: usize,
    rng_seed: u64,
) -> Result<StateActionDensity> {
    if count == 0 {
        return Err(Error::domain("rollout count must be at least 1"));
    }
    check_shapes(mdp, policy)?;
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let chunk = 1024usize;
    let n_chunks = count.div_ceil(chunk);
    let partials = par_map(n_chunks, |c| {
        let lo = c * chunk;
        let hi = (lo + chunk).min(count);
        let mut table = vec![0.0f64; n * na];
        for i in lo..hi {
            let mut rng = rng_for(rng_seed, i as u64);
            let mut s = sample_index(mdp.initial(), rng.gen::<f64>());
            let mut w = 1.0;
            for _ in 0..mdp.horizon() {
                let a = sample_index(policy.row(s), rng.gen::<f64>());
                table[s * na + a] += w;
                w *= mdp.gamma();
                s = sample_index(mdp.transition_row(s, a), rng.gen::<f64>());
            }
        }
        table
    });
    let mut table = vec![0.0f64; n * na];
    for part in partials {
        for (t, p) in table.iter_mut().zip(part) {
            *t += p;
        }
    }
    let total: f64 = table.iter().sum();
    for t in table.iter_mut() {
        *t /= total;
    }
    StateActionDensity::new(n, na, table, NormalizationMode::FiniteHorizon)
}

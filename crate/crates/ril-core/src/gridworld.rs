//! The benchmark task family: a slippery gridworld with a recurring goal.
//!
//! The agent starts in the top-left corner; reaching the bottom-right goal
//! pays reward 1 and teleports the agent back to the start, so good
//! policies keep harvesting the goal and the return separates policy
//! quality cleanly. Slip makes every state reachable under any policy.

use crate::error::{Error, Result};
use crate::mdp::MdpSpec;

/// Temperature ladder for snapshot policies: index 0 is the expert, the
/// rest degrade toward uniform.
pub const DEFAULT_TEMPERATURES: [f64; 6] = [0.01, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, Copy)]
pub struct GridworldParams {
    pub size: usize,
    pub slip: f64,
    pub gamma: f64,
    pub goal_reward: f64,
    /// `None` picks the smallest horizon with `gamma^T < 1e-8`.
    pub horizon: Option<usize>,
}

impl Default for GridworldParams {
    fn default() -> Self {
        GridworldParams {
            size: 5,
            slip: 0.1,
            gamma: 0.95,
            goal_reward: 1.0,
            horizon: None,
        }
    }
}

/// Smallest `T` with `gamma^T` below `tail`.
pub fn horizon_for_tail(gamma: f64, tail: f64) -> usize {
    let t = (tail.ln() / gamma.ln()).ceil() as usize;
    t.max(1)
}

/// Build the gridworld MDP. Actions are up/right/down/left; moves that
/// would leave the grid stay in place; the intended direction is taken
/// with probability `1 - slip` and each other direction with `slip / 3`.
pub fn build(params: &GridworldParams) -> Result<MdpSpec> {
    if params.size < 2 {
        return Err(Error::domain("gridworld size must be at least 2"));
    }
    if !(0.0..1.0).contains(&params.slip) {
        return Err(Error::domain(format!(
            "slip probability must lie in [0,1), got {}",
            params.slip
        )));
    }
    if !(params.gamma > 0.0 && params.gamma < 1.0) {
        return Err(Error::domain(format!(
            "discount must lie in (0,1), got {}",
            params.gamma
        )));
    }
    if !params.goal_reward.is_finite() {
        return Err(Error::domain("goal reward must be finite"));
    }
    let n = params.size * params.size;
    let na = 4usize;
    let start = 0usize;
    let goal = n - 1;
    let size = params.size;

    let step = |s: usize, dir: usize| -> usize {
        let (r, c) = (s / size, s % size);
        let (r2, c2) = match dir {
            0 => (r.saturating_sub(1), c),                  // up
            1 => (r, (c + 1).min(size - 1)),                // right
            2 => ((r + 1).min(size - 1), c),                // down
            _ => (r, c.saturating_sub(1)),                  // left
        };
        r2 * size + c2
    };

    let mut transition = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];
    for s in 0..n {
        for a in 0..na {
            let row = &mut transition[(s * na + a) * n..][..n];
            if s == goal {
                // goal teleports back to the start on any action
                row[start] = 1.0;
                reward[s * na + a] = params.goal_reward;
                continue;
            }
            for dir in 0..na {
                let p = if dir == a {
                    1.0 - params.slip
                } else {
                    params.slip / 3.0
                };
                row[step(s, dir)] += p;
            }
        }
    }
    let mut initial = vec![0.0; n];
    initial[start] = 1.0;

    let horizon = params
        .horizon
        .unwrap_or_else(|| horizon_for_tail(params.gamma, 1e-8));
    MdpSpec::new(n, na, transition, initial, reward, params.gamma, horizon)
}

/// The default benchmark environment (5x5, slip 0.1, gamma 0.95).
pub fn benchmark() -> MdpSpec {
    build(&GridworldParams::default()).expect("default gridworld parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{expected_return, snapshot_policies};

    #[test]
    fn builds_and_validates() {
        let mdp = benchmark();
        assert_eq!(mdp.n_states(), 25);
        assert_eq!(mdp.n_actions(), 4);
        assert!(mdp.gamma() == 0.95);
        // gamma^T < 1e-8
        assert!(mdp.gamma().powi(mdp.horizon() as i32) < 1e-8);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut p = GridworldParams::default();
        p.slip = 1.5;
        assert!(build(&p).is_err());
        let mut p = GridworldParams::default();
        p.size = 1;
        assert!(build(&p).is_err());
        let mut p = GridworldParams::default();
        p.gamma = 1.0;
        assert!(build(&p).is_err());
    }

    #[test]
    fn snapshot_ladder_returns_strictly_descend() {
        let mdp = benchmark();
        let snaps = snapshot_policies(&mdp, &DEFAULT_TEMPERATURES).unwrap();
        let returns: Vec<f64> = snaps
            .iter()
            .map(|p| expected_return(&mdp, p).unwrap())
            .collect();
        for w in returns.windows(2) {
            assert!(w[0] > w[1], "snapshot returns not descending: {returns:?}");
        }
        // the expert strictly dominates every other snapshot
        for r in &returns[1..] {
            assert!(returns[0] > *r);
        }
    }
}

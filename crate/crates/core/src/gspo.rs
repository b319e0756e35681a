//! Group sequence policy optimization: objective values for one rollout group.
//!
//! For a group of `G` responses to one prompt:
//!
//! - advantage `Â_i = (r_i − mean(r)) / std(r)` with the population standard
//!   deviation, and all zeros when every reward is equal;
//! - sequence ratio `s_i = exp(mean_t(log π_new(y_i,t) − log π_old(y_i,t)))`;
//! - objective `(1/G) Σ_i min(s_i Â_i, clip(s_i, 1 − ε, 1 + ε) Â_i)`.
//!
//! Sums run over sorted values so that the results do not depend on the order of
//! group members.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

fn sorted_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// Group-normalized advantages.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return invalid(format!("group needs at least 2 rewards, got {}", rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return invalid("rewards must be finite");
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = sorted_sum(rewards.iter().copied()) / n;
    let var = sorted_sum(rewards.iter().map(|r| (r - mean) * (r - mean))) / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Length-normalized sequence importance ratio.
pub fn sequence_ratio(lp_new: &[f64], lp_old: &[f64]) -> Result<f64> {
    if lp_new.len() != lp_old.len() {
        return invalid(format!(
            "log-probability length mismatch: {} new vs {} old",
            lp_new.len(),
            lp_old.len()
        ));
    }
    if lp_new.is_empty() {
        return invalid("response must have at least one token");
    }
    let diff = sorted_sum(lp_new.iter().zip(lp_old).map(|(n, o)| n - o));
    Ok((diff / lp_new.len() as f64).exp())
}

/// Rewards and per-token log-probabilities of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRollouts {
    pub rewards: Vec<f64>,
    /// Per-response token log-probabilities under the current policy.
    pub token_logprobs_new: Vec<Vec<f64>>,
    /// Per-response token log-probabilities under the sampling policy.
    pub token_logprobs_old: Vec<Vec<f64>>,
    pub clip_eps: f64,
}

impl GroupRollouts {
    pub fn validate(&self) -> Result<()> {
        let g = self.rewards.len();
        if g < 2 {
            return invalid(format!("group size must be at least 2, got {g}"));
        }
        if self.token_logprobs_new.len() != g || self.token_logprobs_old.len() != g {
            return invalid(format!(
                "{g} rewards but {} new / {} old log-probability vectors",
                self.token_logprobs_new.len(),
                self.token_logprobs_old.len()
            ));
        }
        if !(self.clip_eps.is_finite() && self.clip_eps > 0.0) {
            return invalid(format!("clip_eps must be positive, got {}", self.clip_eps));
        }
        for (i, (n, o)) in self.token_logprobs_new.iter().zip(&self.token_logprobs_old).enumerate() {
            if n.len() != o.len() || n.is_empty() {
                return invalid(format!("response {i}: {} new vs {} old log-probabilities", n.len(), o.len()));
            }
            if n.iter().chain(o).any(|lp| !lp.is_finite() || *lp > 0.0) {
                return invalid(format!("response {i}: log-probabilities must be finite and <= 0"));
            }
        }
        Ok(())
    }
}

/// Objective value with all intermediates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GspoResult {
    pub advantages: Vec<f64>,
    pub ratios: Vec<f64>,
    pub clipped_terms: Vec<f64>,
    pub objective: f64,
}

/// Clipped surrogate term of one member.
pub fn clipped_term(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

pub fn gspo_objective(rollouts: &GroupRollouts) -> Result<GspoResult> {
    rollouts.validate()?;
    let advantages = group_advantages(&rollouts.rewards)?;
    let ratios = rollouts
        .token_logprobs_new
        .iter()
        .zip(&rollouts.token_logprobs_old)
        .map(|(n, o)| sequence_ratio(n, o))
        .collect::<Result<Vec<_>>>()?;
    let clipped_terms: Vec<f64> = ratios
        .iter()
        .zip(&advantages)
        .map(|(&s, &a)| clipped_term(s, a, rollouts.clip_eps))
        .collect();
    let objective = sorted_sum(clipped_terms.iter().copied()) / clipped_terms.len() as f64;
    Ok(GspoResult {
        advantages,
        ratios,
        clipped_terms,
        objective,
    })
}

/// Evaluate independent groups in parallel; the batch objective is the mean over groups.
pub fn gspo_batch(groups: &[GroupRollouts]) -> Result<(Vec<GspoResult>, f64)> {
    if groups.is_empty() {
        return invalid("empty batch");
    }
    let results = groups.par_iter().map(gspo_objective).collect::<Result<Vec<_>>>()?;
    let mean = sorted_sum(results.iter().map(|r| r.objective)) / results.len() as f64;
    Ok((results, mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_gives_zero_advantages() {
        assert_eq!(group_advantages(&[1.0, 1.0, 1.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(group_advantages(&[0.1, 0.1, 0.1]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn two_member_advantages() {
        assert_eq!(group_advantages(&[1.0, 0.0]).unwrap(), vec![1.0, -1.0]);
    }

    #[test]
    fn three_member_advantages() {
        let a = group_advantages(&[2.0, 0.0, 1.0]).unwrap();
        let k = 1.5f64.sqrt();
        for (x, y) in a.iter().zip([k, -k, 0.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn too_small_group_rejected() {
        assert!(group_advantages(&[1.0]).is_err());
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(sequence_ratio(&[-1.0, -2.0], &[-1.0, -2.0]).unwrap(), 1.0);
        let s = sequence_ratio(&[-1.0, -2.0, -0.5], &[-2.0, -3.0, -1.5]).unwrap();
        assert!((s - std::f64::consts::E).abs() < 1e-12);
        let old = [-3.0, -4.0];
        let new = [old[0] + 2f64.ln(), old[1] + 8f64.ln()];
        assert!((sequence_ratio(&new, &old).unwrap() - 4.0).abs() < 1e-12);
        assert!(sequence_ratio(&[-1.0], &[-1.0, -1.0]).is_err());
        assert!(sequence_ratio(&[], &[]).is_err());
    }

    /// Log-probabilities whose sequence ratio is exactly `exp(log_s)` for one token.
    fn single_token(log_s: f64) -> (Vec<f64>, Vec<f64>) {
        (vec![-5.0 + log_s], vec![-5.0])
    }

    #[test]
    fn clipped_two_member_group() {
        let (n0, o0) = single_token(1.5f64.ln());
        let (n1, o1) = single_token(0.5f64.ln());
        let r = gspo_objective(&GroupRollouts {
            rewards: vec![1.0, 0.0],
            token_logprobs_new: vec![n0, n1],
            token_logprobs_old: vec![o0, o1],
            clip_eps: 0.2,
        })
        .unwrap();
        assert_eq!(r.advantages, vec![1.0, -1.0]);
        assert!((r.clipped_terms[0] - 1.2).abs() < 1e-12);
        assert!((r.clipped_terms[1] + 0.8).abs() < 1e-12);
        assert!((r.objective - 0.2).abs() < 1e-12);
    }

    #[test]
    fn equal_rewards_zero_objective() {
        let r = gspo_objective(&GroupRollouts {
            rewards: vec![0.7; 3],
            token_logprobs_new: vec![vec![-0.1], vec![-3.0, -0.2], vec![-0.01]],
            token_logprobs_old: vec![vec![-2.0], vec![-0.5, -0.9], vec![-4.0]],
            clip_eps: 0.2,
        })
        .unwrap();
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn interior_ratios_leave_clip_inactive() {
        let ratios = [1.05, 0.9, 1.1];
        let rollouts = GroupRollouts {
            rewards: vec![3.0, 1.0, 2.0],
            token_logprobs_new: ratios.iter().map(|s: &f64| single_token(s.ln()).0).collect(),
            token_logprobs_old: ratios.iter().map(|_| vec![-5.0]).collect(),
            clip_eps: 0.2,
        };
        let r = gspo_objective(&rollouts).unwrap();
        let plain: f64 = r.ratios.iter().zip(&r.advantages).map(|(s, a)| s * a).sum::<f64>() / 3.0;
        assert!((r.objective - plain).abs() < 1e-12);
    }

    #[test]
    fn invalid_rollouts() {
        let base = GroupRollouts {
            rewards: vec![1.0, 0.0],
            token_logprobs_new: vec![vec![-1.0], vec![-1.0]],
            token_logprobs_old: vec![vec![-1.0], vec![-1.0]],
            clip_eps: 0.2,
        };
        assert!(gspo_objective(&base).is_ok());
        let mut bad = base.clone();
        bad.token_logprobs_new[0] = vec![0.5];
        assert!(gspo_objective(&bad).is_err());
        let mut bad = base.clone();
        bad.clip_eps = 0.0;
        assert!(gspo_objective(&bad).is_err());
        let mut bad = base;
        bad.token_logprobs_old[1] = vec![-1.0, -1.0];
        assert!(gspo_objective(&bad).is_err());
    }
}

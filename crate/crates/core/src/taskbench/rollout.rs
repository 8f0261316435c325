use serde::{Deserialize, Serialize};

use super::{evaluate, history_of, Evaluation, TaskInstance};
use crate::diffusion::Observation;
use crate::error::Result;
use crate::se3::{Action, ActionVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub max_keyposes: usize,
    pub history_len: usize,
    /// Keyposes executed from each plan before replanning.
    pub execute_per_plan: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            max_keyposes: 8,
            history_len: 2,
            execute_per_plan: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub plans: usize,
    /// Executed keyposes, start excluded.
    pub keyposes: Vec<Action>,
    /// Evaluation of the last executed keypose.
    pub evaluation: Evaluation,
}

/// Closed-loop episode: plan, execute up to `execute_per_plan` keyposes,
/// replan. Ends at the first keypose inside the success region or after
/// `max_keyposes`.
///
/// `policy` receives the observation and the plan index.
pub fn rollout<F>(instance: &TaskInstance, cfg: &RolloutConfig, mut policy: F) -> Result<EpisodeOutcome>
where
    F: FnMut(&Observation, usize) -> Result<ActionVector>,
{
    let mut visited = vec![instance.start()];
    let mut plans = 0;
    let mut last = evaluate(instance, &instance.start());
    'outer: while visited.len() <= cfg.max_keyposes {
        let obs = Observation::new(
            instance.gripper.clone(),
            instance.scene.clone(),
            history_of(&visited, cfg.history_len),
            instance.family.id(),
        )?;
        let plan = policy(&obs, plans)?;
        plans += 1;
        for d in plan.decode_all().into_iter().take(cfg.execute_per_plan.max(1)) {
            visited.push(d.action);
            last = evaluate(instance, &d.action);
            if last.success || visited.len() > cfg.max_keyposes {
                break 'outer;
            }
        }
    }
    Ok(EpisodeOutcome {
        success: last.success,
        plans,
        keyposes: visited[1..].to_vec(),
        evaluation: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::encode;
    use crate::taskbench::{expert_action, generate_instance, TaskFamily};

    #[test]
    fn expert_policy_succeeds() {
        for s in 0..20 {
            let inst = generate_instance(TaskFamily::SweepPush, 0, s);
            let out = rollout(&inst, &RolloutConfig::default(), |obs, _| {
                let mut cur = crate::se3::decode(obs.history.last().unwrap()).action;
                let mut v = Vec::new();
                for _ in 0..4 {
                    cur = expert_action(&inst, &cur);
                    v.extend_from_slice(&encode(&cur).unwrap());
                }
                ActionVector::new(v, 4)
            })
            .unwrap();
            assert!(out.success);
            assert!(out.keyposes.len() <= 8 && out.plans <= 2);
        }
    }

    #[test]
    fn idle_policy_fails_after_budget() {
        let inst = generate_instance(TaskFamily::Reach, 0, 1);
        let start = encode(&inst.start()).unwrap();
        let out = rollout(&inst, &RolloutConfig::default(), |_, _| {
            ActionVector::new(start.iter().copied().cycle().take(40).collect(), 4)
        })
        .unwrap();
        assert!(!out.success);
        assert_eq!(out.keyposes.len(), 8);
        assert_eq!(out.plans, 2);
    }
}

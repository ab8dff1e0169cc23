use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The two Stackelberg agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    Leader,
    Follower,
}

impl Agent {
    pub fn other(self) -> Agent {
        match self {
            Agent::Leader => Agent::Follower,
            Agent::Follower => Agent::Leader,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Agent::Leader => "leader",
            Agent::Follower => "follower",
        }
    }
}

/// Disjoint coordinate sets owned by the leader and the follower.
///
/// Control of each agent is the coordinate mask of its set, which is how the
/// characteristic functions of the two control subspaces are realized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlPartition {
    pub leader_idx: Vec<usize>,
    pub follower_idx: Vec<usize>,
}

impl ControlPartition {
    pub fn new(leader_idx: Vec<usize>, follower_idx: Vec<usize>) -> Self {
        Self {
            leader_idx,
            follower_idx,
        }
    }

    /// First `⌈p/2⌉` coordinates to the leader, the rest to the follower.
    pub fn split_default(p: usize) -> Self {
        let cut = p.div_ceil(2);
        Self::new((0..cut).collect(), (cut..p).collect())
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.leader_idx.is_empty() || self.follower_idx.is_empty() {
            return Err(Error::InvalidProblem(
                "both agents need at least one coordinate".into(),
            ));
        }
        let mut owner = vec![None; p];
        for (agent, set) in [
            (Agent::Leader, &self.leader_idx),
            (Agent::Follower, &self.follower_idx),
        ] {
            for &i in set {
                match owner.get_mut(i) {
                    None => {
                        return Err(Error::InvalidProblem(format!(
                            "partition index {i} out of range for p = {p}"
                        )))
                    }
                    Some(Some(_)) => {
                        return Err(Error::InvalidProblem(format!(
                            "coordinate {i} assigned twice"
                        )))
                    }
                    Some(slot) => *slot = Some(agent),
                }
            }
        }
        if let Some(i) = owner.iter().position(Option::is_none) {
            return Err(Error::InvalidProblem(format!(
                "coordinate {i} is not assigned to an agent"
            )));
        }
        Ok(())
    }

    pub fn indices(&self, agent: Agent) -> &[usize] {
        match agent {
            Agent::Leader => &self.leader_idx,
            Agent::Follower => &self.follower_idx,
        }
    }

    /// Zeroes every coordinate outside the agent's set.
    pub fn mask_in_place(&self, agent: Agent, v: &mut DVector<f64>) {
        let other = self.indices(agent.other());
        for &i in other {
            v[i] = 0.0;
        }
    }

    pub fn mask(&self, agent: Agent, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.mask_in_place(agent, &mut out);
        out
    }

    /// True when `v` vanishes outside the agent's set.
    pub fn is_masked(&self, agent: Agent, v: &DVector<f64>) -> bool {
        self.indices(agent.other()).iter().all(|&i| v[i] == 0.0)
    }
}

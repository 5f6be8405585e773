use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Drive the agent to the goal.
    Reach,
    /// Push the target object to the goal.
    Push,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Reach => "reach",
            Task::Push => "push",
        }
    }
}

/// Reset distribution. ID and OOD differ only in how states are sampled;
/// dynamics and the expert are the same in every regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Id,
    /// Wider relevant sampling radius and shifted nuisance dims.
    Ood,
    /// Wider relevant sampling radius only.
    OodRelevant,
    /// Shifted nuisance dims only.
    OodIrrelevant,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Id, Regime::Ood, Regime::OodRelevant, Regime::OodIrrelevant];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Id => "id",
            Regime::Ood => "ood",
            Regime::OodRelevant => "ood-relevant",
            Regime::OodIrrelevant => "ood-irrelevant",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown regime {s:?} (expected id, ood, ood-relevant, ood-irrelevant)")))
    }

    pub fn relevant_radius(self, env: &EnvSpec) -> f64 {
        match self {
            Regime::Id | Regime::OodIrrelevant => env.id_radius,
            Regime::Ood | Regime::OodRelevant => env.ood_radius,
        }
    }

    pub fn nuisance_offset(self, env: &EnvSpec) -> f64 {
        match self {
            Regime::Id | Regime::OodRelevant => 0.0,
            Regime::Ood | Regime::OodIrrelevant => env.ood_offset,
        }
    }
}

/// A 2-D point-mass task with a disentangled state.
///
/// State layout: `[agent (2), goal (2), object (2, Push only),
/// distractor poses (2 each), nuisance scalars]`. The expert reads only the
/// agent, goal and object entries; everything after them is irrelevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub task: Task,
    pub distractors: usize,
    pub nuisance: usize,
    /// Speed limit on the commanded velocity (m per unit time).
    pub max_speed: f64,
    pub dt: f64,
    pub horizon: usize,
    /// Success when the target is within this distance of the goal.
    pub success_radius: f64,
    /// Proportional gain of the scripted expert.
    pub gain: f64,
    /// Push only: the object moves with the agent while they are this close.
    pub contact_radius: f64,
    pub agent_center: [f64; 2],
    pub goal_center: [f64; 2],
    pub object_center: [f64; 2],
    pub id_radius: f64,
    pub ood_radius: f64,
    /// Shift added to every nuisance dim in the OOD regimes.
    pub ood_offset: f64,
}

impl EnvSpec {
    pub fn reach() -> Self {
        Self {
            task: Task::Reach,
            distractors: 4,
            nuisance: 4,
            max_speed: 0.05,
            dt: 1.0,
            horizon: 100,
            success_radius: 0.05,
            gain: 1.0,
            contact_radius: 0.03,
            agent_center: [-0.1, -0.1],
            goal_center: [0.1, 0.1],
            object_center: [0.0, 0.0],
            id_radius: 0.1,
            ood_radius: 0.2,
            ood_offset: 2.0,
        }
    }

    pub fn push() -> Self {
        Self {
            task: Task::Push,
            agent_center: [-0.15, 0.0],
            object_center: [0.0, 0.0],
            goal_center: [0.2, 0.0],
            ..Self::reach()
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Reach => Self::reach(),
            Task::Push => Self::push(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_speed", self.max_speed),
            ("dt", self.dt),
            ("success_radius", self.success_radius),
            ("gain", self.gain),
            ("contact_radius", self.contact_radius),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("env.{name} must be positive, got {v}")));
        }
        if self.horizon == 0 {
            return Err(Error::Config("env.horizon must be at least 1".into()));
        }
        if !(self.id_radius >= 0.0 && self.ood_radius >= 0.0 && self.ood_offset.is_finite()) {
            return Err(Error::Config("sampling radii must be nonnegative and the offset finite".into()));
        }
        Ok(())
    }

    fn entity_count(&self) -> usize {
        match self.task {
            Task::Reach => 2,
            Task::Push => 3,
        }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.entity_count() + 2 * self.distractors + self.nuisance
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    pub fn agent_index(&self) -> usize {
        0
    }

    pub fn goal_index(&self) -> usize {
        2
    }

    pub fn object_index(&self) -> Option<usize> {
        (self.task == Task::Push).then_some(4)
    }

    /// Ground-truth relevant state indices. Evaluation and reporting only.
    pub fn relevant_indices(&self) -> Vec<usize> {
        (0..2 * self.entity_count()).collect()
    }

    pub fn irrelevant_indices(&self) -> Vec<usize> {
        (2 * self.entity_count()..self.state_dim()).collect()
    }

    fn pos(s: &[f64], idx: usize) -> [f64; 2] {
        [s[idx], s[idx + 1]]
    }

    /// The entity that must reach the goal.
    pub fn target_position(&self, s: &[f64]) -> [f64; 2] {
        Self::pos(s, self.object_index().unwrap_or(self.agent_index()))
    }

    pub fn goal_distance(&self, s: &[f64]) -> f64 {
        norm(sub(Self::pos(s, self.goal_index()), self.target_position(s)))
    }

    pub fn is_success(&self, s: &[f64]) -> bool {
        self.goal_distance(s) <= self.success_radius
    }

    /// Samples an initial state. Agent, goal and object are uniform in a disc
    /// of the regime's radius around their centers; distractor poses and
    /// nuisance scalars are Uniform(−1, 1) plus the regime's offset. Starts
    /// that are already solved are redrawn.
    pub fn reset<R: Rng + ?Sized>(&self, regime: Regime, rng: &mut R) -> Vec<f64> {
        let radius = regime.relevant_radius(self);
        let offset = regime.nuisance_offset(self);
        loop {
            let mut s = Vec::with_capacity(self.state_dim());
            let mut centers = vec![self.agent_center, self.goal_center];
            if self.task == Task::Push {
                centers.push(self.object_center);
            }
            for c in centers {
                let p = sample_disc(c, radius, rng);
                s.extend_from_slice(&p);
            }
            for _ in 0..2 * self.distractors + self.nuisance {
                s.push(rng.random_range(-1.0..1.0) + offset);
            }
            if !self.is_success(&s) {
                return s;
            }
        }
    }

    /// Point-mass dynamics: the command is clipped to `max_speed` (by norm)
    /// and integrated over `dt`. In Push, an object within contact radius of
    /// the agent at the start of the step moves with the agent.
    pub fn step(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let v = clip([a[0], a[1]], self.max_speed);
        let disp = [v[0] * self.dt, v[1] * self.dt];
        let mut next = s.to_vec();
        let agent = Self::pos(s, self.agent_index());
        if let Some(obj) = self.object_index() {
            if norm(sub(Self::pos(s, obj), agent)) <= self.contact_radius {
                next[obj] += disp[0];
                next[obj + 1] += disp[1];
            }
        }
        next[0] += disp[0];
        next[1] += disp[1];
        next
    }

    /// Scripted expert. Reads only agent, goal and object entries.
    ///
    /// Reach: `clip(K (g − agent), max_speed)`. Push: approach the object
    /// center, then once in contact drive it with `clip(K (g − object))`.
    pub fn expert_action(&self, s: &[f64]) -> Vec<f64> {
        let agent = Self::pos(s, self.agent_index());
        let goal = Self::pos(s, self.goal_index());
        let k = self.gain;
        let cmd = match self.object_index() {
            None => scale(sub(goal, agent), k),
            Some(obj) => {
                let obj = Self::pos(s, obj);
                if norm(sub(obj, agent)) <= self.contact_radius {
                    scale(sub(goal, obj), k)
                } else {
                    scale(sub(obj, agent), k)
                }
            }
        };
        clip(cmd, self.max_speed).to_vec()
    }
}

fn sample_disc<R: Rng + ?Sized>(center: [f64; 2], radius: f64, rng: &mut R) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn scale(a: [f64; 2], k: f64) -> [f64; 2] {
    [k * a[0], k * a[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Scales `v` down to norm `limit` if it is longer.
pub fn clip(v: [f64; 2], limit: f64) -> [f64; 2] {
    let n = norm(v);
    if n > limit {
        scale(v, limit / n)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reach_state(agent: [f64; 2], goal: [f64; 2]) -> Vec<f64> {
        let env = EnvSpec::reach();
        let mut s = vec![0.0; env.state_dim()];
        s[..2].copy_from_slice(&agent);
        s[2..4].copy_from_slice(&goal);
        s
    }

    #[test]
    fn layout() {
        let reach = EnvSpec::reach();
        assert_eq!(reach.state_dim(), 16);
        assert_eq!(reach.relevant_indices(), vec![0, 1, 2, 3]);
        assert_eq!(reach.irrelevant_indices().len(), 12);
        let push = EnvSpec::push();
        assert_eq!(push.state_dim(), 18);
        assert_eq!(push.relevant_indices().len(), 6);
    }

    #[test]
    fn zero_action_keeps_agent() {
        let env = EnvSpec::reach();
        let s = reach_state([0.1, -0.2], [0.3, 0.3]);
        assert_eq!(env.step(&s, &[0.0, 0.0]), s);
    }

    #[test]
    fn step_clips_then_integrates() {
        let env = EnvSpec { max_speed: 0.5, ..EnvSpec::reach() };
        let s = reach_state([0.0, 0.0], [1.0, 1.0]);
        let next = env.step(&s, &[1.0, 0.0]);
        assert_eq!(&next[..2], &[0.5, 0.0]);
        assert_eq!(&next[2..], &s[2..]);
    }

    #[test]
    fn expert_examples() {
        let env = EnvSpec { max_speed: 0.5, ..EnvSpec::reach() };
        assert_eq!(env.expert_action(&reach_state([0.0, 0.0], [1.0, 0.0])), vec![0.5, 0.0]);
        assert_eq!(EnvSpec::reach().expert_action(&reach_state([0.2, 0.1], [0.2, 0.1])), vec![0.0, 0.0]);
    }

    #[test]
    fn reset_is_deterministic_and_respects_radius() {
        let env = EnvSpec::reach();
        for regime in Regime::ALL {
            let a = env.reset(regime, &mut ChaCha8Rng::seed_from_u64(4));
            let b = env.reset(regime, &mut ChaCha8Rng::seed_from_u64(4));
            assert_eq!(a, b);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (regime, radius) in [(Regime::Id, 0.1), (Regime::Ood, 0.2)] {
            for _ in 0..500 {
                let s = env.reset(regime, &mut rng);
                assert!(norm(sub([s[0], s[1]], env.agent_center)) <= radius + 1e-12);
                assert!(norm(sub([s[2], s[3]], env.goal_center)) <= radius + 1e-12);
                assert!(!env.is_success(&s));
            }
        }
    }

    #[test]
    fn push_object_follows_agent_in_contact() {
        let env = EnvSpec::push();
        let mut s = vec![0.0; env.state_dim()];
        s[2] = 0.5;
        s[4] = 0.01;
        let next = env.step(&s, &[0.05, 0.0]);
        assert!((next[4] - 0.06).abs() < 1e-15);
        s[4] = 0.2;
        let next = env.step(&s, &[0.05, 0.0]);
        assert_eq!(next[4], 0.2);
    }

    #[test]
    fn regime_parse() {
        for r in Regime::ALL {
            assert_eq!(Regime::parse(r.as_str()).unwrap(), r);
        }
        assert!(Regime::parse("sideways").is_err());
    }
}

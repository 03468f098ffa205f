use alloc::vec::Vec;

/// Transitions collected by one worker for one rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segment {
    /// Normalized observations, row-major.
    pub obs: Vec<f64>,
    /// Observations before normalization, for updating the normalizer.
    pub raw_obs: Vec<f64>,
    pub primitive: Vec<usize>,
    pub unit_args: Vec<f64>,
    pub log_prob: Vec<f64>,
    pub reward: Vec<f64>,
    pub value: Vec<f64>,
    pub done: Vec<bool>,
    pub bootstrap: f64,
    pub low_level_steps: u64,
    /// Returns of episodes that finished during this segment.
    pub episode_returns: Vec<f64>,
    pub episode_successes: Vec<bool>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// One rollout across all workers, stored env-major: sample `e * steps + t`
/// is step `t` of worker `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub arg_dim: usize,
    pub steps: usize,
    pub segments: Vec<Segment>,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, arg_dim: usize, segments: Vec<Segment>) -> Self {
        let steps = segments.first().map_or(0, Segment::len);
        for s in &segments {
            assert_eq!(s.len(), steps, "segments must have equal length");
            assert_eq!(s.obs.len(), steps * obs_dim);
            assert_eq!(s.unit_args.len(), steps * arg_dim);
            assert_eq!(s.primitive.len(), steps);
            assert_eq!(s.log_prob.len(), steps);
            assert_eq!(s.value.len(), steps);
            assert_eq!(s.done.len(), steps);
        }
        Self {
            obs_dim,
            arg_dim,
            steps,
            segments,
        }
    }

    pub fn num_envs(&self) -> usize {
        self.segments.len()
    }

    pub fn len(&self) -> usize {
        self.steps * self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn locate(&self, i: usize) -> (&Segment, usize) {
        (&self.segments[i / self.steps], i % self.steps)
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        let (s, t) = self.locate(i);
        &s.obs[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn unit_args(&self, i: usize) -> &[f64] {
        let (s, t) = self.locate(i);
        &s.unit_args[t * self.arg_dim..(t + 1) * self.arg_dim]
    }

    pub fn primitive(&self, i: usize) -> usize {
        let (s, t) = self.locate(i);
        s.primitive[t]
    }

    pub fn log_prob(&self, i: usize) -> f64 {
        let (s, t) = self.locate(i);
        s.log_prob[t]
    }

    pub fn low_level_steps(&self) -> u64 {
        self.segments.iter().map(|s| s.low_level_steps).sum()
    }

    /// GAE over every worker's segment, concatenated env-major.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let mut adv = Vec::with_capacity(self.len());
        let mut ret = Vec::with_capacity(self.len());
        for s in &self.segments {
            let (a, r) = super::gae::compute_gae(&s.reward, &s.value, &s.done, s.bootstrap, gamma, lambda);
            adv.extend(a);
            ret.extend(r);
        }
        (adv, ret)
    }
}

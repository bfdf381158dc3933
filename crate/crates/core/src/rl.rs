//! Tabular SARSA(λ) learner for the shooting task: state discretization,
//! ε-greedy action selection, eligibility-trace updates and the shot reward.
//!
//! The policy is a sparse lookup table over `StateKey × ActionId`. Missing
//! entries read as 0.0, so an empty table is the "no knowledge" policy.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use thiserror::Error;

/// Eligibility traces below this are dropped from the sparse map.
pub const TRACE_DROP_THRESHOLD: f64 = 1e-8;

/// Horizontal skew steps available to the shooter.
pub const H_SKEWS: [i8; 5] = [-2, -1, 0, 1, 2];
/// Vertical skew steps available to the shooter.
pub const V_SKEWS: [i8; 3] = [-1, 0, 1];
/// Total number of distinct shooting actions.
pub const ACTION_COUNT: usize = H_SKEWS.len() * V_SKEWS.len();

#[derive(Debug, Error, PartialEq)]
pub enum RlError {
    #[error("malformed observation: {0} is not finite")]
    MalformedObservation(&'static str),
    #[error("negative distance in observation")]
    NegativeDistance,
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
}

/// Discretized egocentric observation of the opponent.
///
/// Each index lies in `[0, bucket_count)` for its feature; the full state
/// space is the product of the four bucket counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub rel_speed_bucket: u8,
    pub rel_direction_bucket: u8,
    pub rel_rotation_bucket: u8,
    pub distance_bucket: u8,
}

impl StateKey {
    /// Mixed-radix ordinal, consistent with the derived `Ord`.
    pub fn ordinal(&self, cfg: &DiscretizerConfig) -> usize {
        let mut n = self.rel_speed_bucket as usize;
        n = n * cfg.direction_buckets as usize + self.rel_direction_bucket as usize;
        n = n * cfg.rotation_buckets as usize + self.rel_rotation_bucket as usize;
        n * cfg.distance_buckets as usize + self.distance_bucket as usize
    }

    /// Iterate the whole state space in ordinal order.
    pub fn enumerate(cfg: &DiscretizerConfig) -> impl Iterator<Item = StateKey> {
        let (s, d, r, z) = (
            cfg.speed_buckets,
            cfg.direction_buckets,
            cfg.rotation_buckets,
            cfg.distance_buckets,
        );
        (0..s).flat_map(move |a| {
            (0..d).flat_map(move |b| {
                (0..r).flat_map(move |c| {
                    (0..z).map(move |e| StateKey {
                        rel_speed_bucket: a,
                        rel_direction_bucket: b,
                        rel_rotation_bucket: c,
                        distance_bucket: e,
                    })
                })
            })
        })
    }
}

/// One shooting action: aim at the opponent's position skewed horizontally
/// by `h_skew` steps and vertically by `v_skew` steps. `(0, 0)` aims directly
/// at the opponent's absolute position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId {
    pub h_skew: i8,
    pub v_skew: i8,
}

impl ActionId {
    pub const CENTER: ActionId = ActionId { h_skew: 0, v_skew: 0 };

    pub fn new(h_skew: i8, v_skew: i8) -> Option<ActionId> {
        if H_SKEWS.contains(&h_skew) && V_SKEWS.contains(&v_skew) {
            Some(ActionId { h_skew, v_skew })
        } else {
            None
        }
    }

    /// Ordinal in `[0, 15)`; lexicographic in `(h_skew, v_skew)`.
    pub fn ordinal(&self) -> usize {
        (self.h_skew + 2) as usize * V_SKEWS.len() + (self.v_skew + 1) as usize
    }

    pub fn from_ordinal(ord: usize) -> Option<ActionId> {
        if ord >= ACTION_COUNT {
            return None;
        }
        Some(ActionId {
            h_skew: (ord / V_SKEWS.len()) as i8 - 2,
            v_skew: (ord % V_SKEWS.len()) as i8 - 1,
        })
    }

    /// All 15 actions in ordinal order.
    pub fn all() -> impl Iterator<Item = ActionId> {
        (0..ACTION_COUNT).map(|o| ActionId::from_ordinal(o).unwrap())
    }
}

/// Learning hyperparameters and the shot reward scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub hit_reward: f64,
    pub miss_penalty: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            alpha: 0.1,
            gamma: 0.5,
            lambda: 0.9,
            epsilon: 0.15,
            hit_reward: 250.0,
            miss_penalty: -1.0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(RlError::InvalidConfig(format!("alpha {} not in (0,1]", self.alpha)));
        }
        if !in_unit(self.gamma) {
            return Err(RlError::InvalidConfig(format!("gamma {} not in [0,1]", self.gamma)));
        }
        if !in_unit(self.lambda) {
            return Err(RlError::InvalidConfig(format!("lambda {} not in [0,1]", self.lambda)));
        }
        if !in_unit(self.epsilon) {
            return Err(RlError::InvalidConfig(format!("epsilon {} not in [0,1]", self.epsilon)));
        }
        if !(self.hit_reward > 0.0 && self.miss_penalty < 0.0) {
            return Err(RlError::InvalidConfig(
                "hit_reward must be > 0 and miss_penalty < 0".into(),
            ));
        }
        Ok(())
    }
}

/// Bucket layout and scales used to discretize raw observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizerConfig {
    pub speed_buckets: u8,
    pub direction_buckets: u8,
    pub rotation_buckets: u8,
    pub distance_buckets: u8,
    /// Relative speed equal to this maps to bucket ratio 1.0 (one combatant's
    /// base speed per tick).
    pub speed_scale: f64,
    /// Ascending upper edges for distance buckets 0..n-2; the last bucket is
    /// open-ended. Length must equal `distance_buckets - 1`.
    pub distance_edges: Vec<f64>,
}

impl Default for DiscretizerConfig {
    fn default() -> Self {
        DiscretizerConfig {
            speed_buckets: 4,
            direction_buckets: 8,
            rotation_buckets: 8,
            distance_buckets: 5,
            speed_scale: 1.0,
            distance_edges: vec![5.0, 10.0, 18.0, 30.0],
        }
    }
}

impl DiscretizerConfig {
    pub fn state_count(&self) -> usize {
        self.speed_buckets as usize
            * self.direction_buckets as usize
            * self.rotation_buckets as usize
            * self.distance_buckets as usize
    }
}

/// Raw egocentric kinematics of the opponent, before discretization.
///
/// Angles are degrees; `rel_direction_deg` is the bearing of the relative
/// velocity in the learner's forward-facing frame, `rel_rotation_deg` is how
/// far the opponent's facing deviates from looking straight at the learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawObservation {
    pub rel_speed: f64,
    pub rel_direction_deg: f64,
    pub rel_rotation_deg: f64,
    pub distance: f64,
}

/// Wrap an angle into `[0, 360)`.
pub fn wrap_deg(a: f64) -> f64 {
    let r = a % 360.0;
    if r < 0.0 {
        r + 360.0
    } else {
        r
    }
}

/// Signed smallest difference `a - b`, in `[-180, 180)`.
pub fn ang_diff_deg(a: f64, b: f64) -> f64 {
    let d = wrap_deg(a - b);
    if d >= 180.0 {
        d - 360.0
    } else {
        d
    }
}

fn circular_bucket(angle_deg: f64, buckets: u8) -> u8 {
    // Buckets are centered on their sector midpoints: bucket 0 spans
    // [-w/2, w/2), so 359.9 deg and 0.1 deg land together.
    let width = 360.0 / buckets as f64;
    let shifted = wrap_deg(angle_deg + width / 2.0);
    let idx = (shifted / width) as u8;
    idx.min(buckets - 1)
}

/// Discretize a raw observation into a `StateKey`.
///
/// Deterministic; direction and rotation buckets wrap circularly. Non-finite
/// inputs are rejected.
pub fn discretize(obs: &RawObservation, cfg: &DiscretizerConfig) -> Result<StateKey, RlError> {
    if !obs.rel_speed.is_finite() {
        return Err(RlError::MalformedObservation("rel_speed"));
    }
    if !obs.rel_direction_deg.is_finite() {
        return Err(RlError::MalformedObservation("rel_direction_deg"));
    }
    if !obs.rel_rotation_deg.is_finite() {
        return Err(RlError::MalformedObservation("rel_rotation_deg"));
    }
    if !obs.distance.is_finite() {
        return Err(RlError::MalformedObservation("distance"));
    }
    if obs.distance < 0.0 {
        return Err(RlError::NegativeDistance);
    }

    // Speed ratio buckets: uniform width 0.5 in units of speed_scale, the
    // top bucket open-ended.
    let ratio = obs.rel_speed.abs() / cfg.speed_scale;
    let speed = ((ratio / 0.5) as u8).min(cfg.speed_buckets - 1);

    let direction = circular_bucket(obs.rel_direction_deg, cfg.direction_buckets);
    let rotation = circular_bucket(obs.rel_rotation_deg, cfg.rotation_buckets);

    let mut dist = cfg.distance_buckets - 1;
    for (i, edge) in cfg.distance_edges.iter().enumerate() {
        if obs.distance < *edge {
            dist = i as u8;
            break;
        }
    }

    Ok(StateKey {
        rel_speed_bucket: speed,
        rel_direction_bucket: direction,
        rel_rotation_bucket: rotation,
        distance_bucket: dist,
    })
}

/// Outcome of one fired shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotResult {
    Hit,
    Miss,
}

/// Reward scheme: a hit pays out, a miss costs a little.
pub fn reward_for_shot(outcome: ShotResult, cfg: &LearnerConfig) -> f64 {
    match outcome {
        ShotResult::Hit => cfg.hit_reward,
        ShotResult::Miss => cfg.miss_penalty,
    }
}

/// Sorted, values-only copy of a Q-table. Snapshots never carry traces and
/// drop entries that are exactly zero, so equality is semantic.
pub type Snapshot = BTreeMap<(StateKey, ActionId), f64>;

/// Sparse action-value table with eligibility traces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    values: HashMap<(StateKey, ActionId), f64>,
    traces: HashMap<(StateKey, ActionId), f64>,
}

impl QTable {
    pub fn new() -> QTable {
        QTable::default()
    }

    /// Rebuild a table from snapshot values; traces start empty.
    pub fn from_snapshot(snapshot: &Snapshot) -> QTable {
        QTable {
            values: snapshot.iter().map(|(k, v)| (*k, *v)).collect(),
            traces: HashMap::new(),
        }
    }

    pub fn q(&self, s: StateKey, a: ActionId) -> f64 {
        self.values.get(&(s, a)).copied().unwrap_or(0.0)
    }

    pub fn set_q(&mut self, s: StateKey, a: ActionId, v: f64) {
        self.values.insert((s, a), v);
    }

    pub fn trace(&self, s: StateKey, a: ActionId) -> f64 {
        self.traces.get(&(s, a)).copied().unwrap_or(0.0)
    }

    pub fn value_count(&self) -> usize {
        self.values.len()
    }

    pub fn nonzero_trace_count(&self) -> usize {
        self.traces.len()
    }

    /// Zero all eligibility traces, leaving Q-values untouched. Called at
    /// the start of each episode (each learner life).
    pub fn reset_traces(&mut self) {
        self.traces.clear();
    }

    /// Wipe the table back to "no knowledge": values and traces.
    pub fn clear(&mut self) {
        self.values.clear();
        self.traces.clear();
    }

    /// Values-only snapshot, sorted, with exact zeros dropped.
    pub fn snapshot(&self) -> Snapshot {
        self.values
            .iter()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (*k, *v))
            .collect()
    }

    /// Replace this table's values with a milestone snapshot. Traces are
    /// zeroed: they belong to the policy that produced them.
    pub fn load_snapshot(&mut self, snapshot: &Snapshot) {
        *self = QTable::from_snapshot(snapshot);
    }

    /// Greedy action in `s`: argmax over all 15 actions, ties broken by
    /// lowest action ordinal.
    pub fn greedy_action(&self, s: StateKey) -> ActionId {
        let mut best = ActionId::from_ordinal(0).unwrap();
        let mut best_q = self.q(s, best);
        for a in ActionId::all().skip(1) {
            let q = self.q(s, a);
            if q > best_q {
                best = a;
                best_q = q;
            }
        }
        best
    }
}

/// ε-greedy selection over the 15 actions.
///
/// With probability `epsilon` a uniformly random action is returned,
/// otherwise the greedy one (lowest ordinal on ties).
pub fn select_action<R: Rng>(q: &QTable, s: StateKey, epsilon: f64, rng: &mut R) -> ActionId {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        ActionId::from_ordinal(rng.gen_range(0..ACTION_COUNT)).unwrap()
    } else {
        q.greedy_action(s)
    }
}

/// One SARSA(λ) backup with replacing traces.
///
/// δ = r + γ·Q(s',a') − Q(s,a); the trace at (s,a) is set to 1, every traced
/// entry moves by α·δ·trace, then all traces decay by γλ and tiny ones are
/// dropped.
pub fn sarsa_lambda_update(
    q: &mut QTable,
    s: StateKey,
    a: ActionId,
    r: f64,
    s_next: StateKey,
    a_next: ActionId,
    cfg: &LearnerConfig,
) {
    let target = r + cfg.gamma * q.q(s_next, a_next);
    sarsa_backup(q, s, a, target, cfg);
}

/// Terminal variant used when an episode ends (the learner died): there is
/// no successor pair, so the target is the reward alone.
pub fn sarsa_terminal_update(q: &mut QTable, s: StateKey, a: ActionId, r: f64, cfg: &LearnerConfig) {
    sarsa_backup(q, s, a, target_terminal(r), cfg);
}

fn target_terminal(r: f64) -> f64 {
    r
}

fn sarsa_backup(q: &mut QTable, s: StateKey, a: ActionId, target: f64, cfg: &LearnerConfig) {
    let delta = target - q.q(s, a);
    q.traces.insert((s, a), 1.0);

    let decay = cfg.gamma * cfg.lambda;
    let alpha = cfg.alpha;
    let values = &mut q.values;
    q.traces.retain(|key, e| {
        // Each traced entry is touched exactly once, so iteration order of
        // the sparse map cannot affect the result.
        let entry = values.entry(*key).or_insert(0.0);
        *entry += alpha * delta * *e;
        *e *= decay;
        *e >= TRACE_DROP_THRESHOLD
    });
}

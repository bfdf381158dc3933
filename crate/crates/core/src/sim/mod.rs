//! Discrete-time 1-vs-1 deathmatch arena: planar kinematics with facing and
//! an abstract elevation aim axis, probabilistic shot resolution, health,
//! kills, deaths and respawns.
//!
//! One tick is 250 ms of game time. All randomness flows through a single
//! seeded generator per game, so runs are bit-reproducible.

mod opponent;
pub mod game;

pub use game::{
    duel, run_game, Actor, Controller, DuelOutcome, Game, GameLog, GameMode, GameReport,
    GameSetup, Incident, IncidentEvent, Outcome,
};
pub use opponent::{opponent_policy_step, ActorStep, CombatMovement, OpponentProfile, ScriptState};

use rand::Rng;
use thiserror::Error;

use crate::rl::{wrap_deg, ActionId, RawObservation};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("game duration must be positive")]
    ZeroDuration,
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
}

/// 2D vector in arena units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Vec2 {
        Vec2 { x, y }
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Bearing of this vector in degrees, in [0, 360).
    pub fn angle_deg(self) -> f64 {
        wrap_deg(self.y.atan2(self.x).to_degrees())
    }

    pub fn from_angle_deg(deg: f64) -> Vec2 {
        let r = deg.to_radians();
        Vec2::new(r.cos(), r.sin())
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            Vec2::ZERO
        } else {
            self.scale(1.0 / n)
        }
    }
}

/// Position, velocity, facing and health of one combatant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombatantState {
    pub pos: Vec2,
    pub vel: Vec2,
    pub facing_deg: f64,
    pub health: i32,
}

impl CombatantState {
    pub fn spawn_at(pos: Vec2, facing_deg: f64, max_health: i32) -> CombatantState {
        CombatantState {
            pos,
            vel: Vec2::ZERO,
            facing_deg,
            health: max_health,
        }
    }
}

/// Outcome of one resolved shot; damage is zero iff the shot missed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotOutcome {
    pub result: crate::rl::ShotResult,
    pub damage: i32,
}

impl ShotOutcome {
    pub fn miss() -> ShotOutcome {
        ShotOutcome {
            result: crate::rl::ShotResult::Miss,
            damage: 0,
        }
    }

    pub fn hit(damage: i32) -> ShotOutcome {
        ShotOutcome {
            result: crate::rl::ShotResult::Hit,
            damage,
        }
    }
}

/// Arena geometry, combat constants and the fixed movement scripts.
#[derive(Debug, Clone, PartialEq)]
pub struct ArenaConfig {
    pub width: f64,
    pub height: f64,
    pub spawn_points: Vec<Vec2>,
    /// Base running speed, arena units per tick.
    pub base_speed: f64,
    pub max_health: i32,
    pub damage_per_hit: i32,
    /// Peak hit probability for a perfectly aimed, point-blank shot.
    pub p_max: f64,
    /// Half-width of the hit cone in degrees; aim error at or beyond this
    /// always misses.
    pub cone_half_deg: f64,
    /// Fraction of p_max lost at the cone edge (linear in angular error).
    pub edge_loss: f64,
    /// Weight of vertical error in the combined metric. Elevation mistakes
    /// are punished harder than horizontal ones, so the vertical skew is a
    /// real choice rather than a free rider of a good horizontal one.
    pub v_error_weight: f64,
    /// Horizontal skew step, degrees per h_skew unit.
    pub h_skew_step_deg: f64,
    /// Vertical skew step, degrees per v_skew unit.
    pub v_skew_step_deg: f64,
    /// Projectile speed, arena units per tick; sets the lead angle a moving
    /// target requires.
    pub bullet_speed: f64,
    /// Aim sway from the shooter's own sideways motion, degrees per unit of
    /// perpendicular speed. This is what makes run-and-gun a learned skill.
    pub sway_deg_per_perp_speed: f64,
    /// Shape of scripted-opponent aim error within ±aim_error: 0 is uniform,
    /// 1 is triangular (errors cluster near the target).
    pub aim_error_mix: f64,
    /// Required elevation compensation, degrees per unit of distance beyond
    /// `falloff_close`.
    pub drop_deg_per_unit: f64,
    /// Distance at or below which there is no range penalty.
    pub falloff_close: f64,
    /// Softness of the range penalty; larger keeps shots effective farther.
    pub falloff_scale: f64,
    /// Health below which a stationary-class opponent starts evading.
    pub weak_health: i32,
    /// Learner script: distance band it tries to fight at.
    pub learner_range: f64,
    pub learner_range_tol: f64,
    /// Learner script: chance per tick of flipping strafe direction.
    pub learner_strafe_flip: f64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        ArenaConfig {
            width: 40.0,
            height: 40.0,
            // Clustered near the middle: respawns drop straight back into
            // combat range, the way a small deathmatch map plays.
            spawn_points: vec![
                Vec2::new(13.0, 13.0),
                Vec2::new(27.0, 27.0),
                Vec2::new(13.0, 27.0),
                Vec2::new(27.0, 13.0),
            ],
            base_speed: 1.0,
            max_health: 100,
            damage_per_hit: 18,
            p_max: 0.85,
            cone_half_deg: 6.0,
            edge_loss: 0.4,
            v_error_weight: 2.0,
            h_skew_step_deg: 4.0,
            v_skew_step_deg: 3.0,
            bullet_speed: 8.0,
            sway_deg_per_perp_speed: 11.5,
            aim_error_mix: 1.0,
            drop_deg_per_unit: 0.1,
            falloff_close: 2.0,
            falloff_scale: 40.0,
            weak_health: 25,
            learner_range: 6.0,
            learner_range_tol: 2.0,
            learner_strafe_flip: 0.12,
        }
    }
}

impl ArenaConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.spawn_points.len() < 2 {
            return Err(SimError::InvalidConfig("need at least 2 spawn points".into()));
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(SimError::InvalidConfig(format!("p_max {} not in (0,1]", self.p_max)));
        }
        if self.cone_half_deg <= 0.0 || self.bullet_speed <= 0.0 || self.base_speed <= 0.0 {
            return Err(SimError::InvalidConfig("cone, bullet speed and base speed must be positive".into()));
        }
        if self.damage_per_hit <= 0 || self.max_health <= 0 {
            return Err(SimError::InvalidConfig("damage and health must be positive".into()));
        }
        Ok(())
    }

    pub fn clamp_to_bounds(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    /// Spawn point farthest from `from`, lowest index on ties.
    pub fn farthest_spawn(&self, from: Vec2) -> Vec2 {
        let mut best = self.spawn_points[0];
        let mut best_d = best.sub(from).norm();
        for sp in &self.spawn_points[1..] {
            let d = sp.sub(from).norm();
            if d > best_d {
                best = *sp;
                best_d = d;
            }
        }
        best
    }
}

/// Opponent kinematics translated into the learner's egocentric frame.
///
/// Relative velocity is the opponent's minus the learner's own; its bearing
/// is measured from the learner's facing. Rotation is how far the opponent's
/// facing deviates from looking straight back at the learner.
pub fn observe(learner: &CombatantState, opponent: &CombatantState) -> RawObservation {
    debug_assert!(learner.health > 0 && opponent.health > 0);
    let rel_vel = opponent.vel.sub(learner.vel);
    let offset = opponent.pos.sub(learner.pos);
    let rel_direction = if rel_vel.norm() == 0.0 {
        0.0
    } else {
        wrap_deg(rel_vel.angle_deg() - learner.facing_deg)
    };
    let line_back = learner.pos.sub(opponent.pos).angle_deg();
    RawObservation {
        rel_speed: rel_vel.norm(),
        rel_direction_deg: rel_direction,
        rel_rotation_deg: wrap_deg(opponent.facing_deg - line_back),
        distance: offset.norm(),
    }
}

/// Start-of-tick geometry a shot is resolved against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotGeometry {
    pub shooter_pos: Vec2,
    pub shooter_vel: Vec2,
    pub target_pos: Vec2,
    pub target_vel: Vec2,
}

impl ShotGeometry {
    pub fn between(shooter: &CombatantState, target: &CombatantState) -> ShotGeometry {
        ShotGeometry {
            shooter_pos: shooter.pos,
            shooter_vel: shooter.vel,
            target_pos: target.pos,
            target_vel: target.vel,
        }
    }

    pub fn distance(&self) -> f64 {
        self.target_pos.sub(self.shooter_pos).norm()
    }

    /// Perpendicular (counter-clockwise positive) components of target and
    /// shooter velocity relative to the line of sight.
    fn perp_speeds(&self) -> (f64, f64) {
        let u = self.target_pos.sub(self.shooter_pos).normalized();
        let perp = u.perp();
        (self.target_vel.dot(perp), self.shooter_vel.dot(perp))
    }

    /// Horizontal aim offset (degrees, counter-clockwise positive) a perfect
    /// shot needs: lead for the target's sideways motion plus compensation
    /// for the shooter's own sway.
    pub fn ideal_h_offset_deg(&self, cfg: &ArenaConfig) -> f64 {
        let (target_perp, shooter_perp) = self.perp_speeds();
        let lead = target_perp.atan2(cfg.bullet_speed).to_degrees();
        lead + cfg.sway_deg_per_perp_speed * shooter_perp
    }

    /// Elevation compensation (degrees) a perfect shot needs at this range.
    pub fn ideal_v_offset_deg(&self, cfg: &ArenaConfig) -> f64 {
        cfg.drop_deg_per_unit * (self.distance() - cfg.falloff_close).max(0.0)
    }
}

/// Range penalty in (0, 1]; exactly 1 at or inside `falloff_close`.
pub fn range_falloff(distance: f64, cfg: &ArenaConfig) -> f64 {
    (cfg.falloff_close + cfg.falloff_scale) / (distance.max(cfg.falloff_close) + cfg.falloff_scale)
}

/// Hit probability for a combined angular error at a given range: linear in
/// the error within the cone, zero at or beyond it.
pub fn hit_probability_for_error(err_deg: f64, distance: f64, cfg: &ArenaConfig) -> f64 {
    if err_deg >= cfg.cone_half_deg {
        return 0.0;
    }
    cfg.p_max * (1.0 - cfg.edge_loss * err_deg / cfg.cone_half_deg) * range_falloff(distance, cfg)
}

/// Deterministic hit probability of a skewed shot against the given
/// geometry. Maximal when the skew matches the ideal lead/elevation offset;
/// decreases with angular error and with distance.
pub fn hit_probability(action: ActionId, geom: &ShotGeometry, cfg: &ArenaConfig) -> f64 {
    let h_err = action.h_skew as f64 * cfg.h_skew_step_deg - geom.ideal_h_offset_deg(cfg);
    let v_err = action.v_skew as f64 * cfg.v_skew_step_deg - geom.ideal_v_offset_deg(cfg);
    let err = h_err.hypot(cfg.v_error_weight * v_err);
    hit_probability_for_error(err, geom.distance(), cfg)
}

/// Resolve the learner's shot for this tick.
pub fn resolve_learner_shot<R: Rng>(
    action: ActionId,
    geom: &ShotGeometry,
    cfg: &ArenaConfig,
    rng: &mut R,
) -> ShotOutcome {
    let p = hit_probability(action, geom, cfg);
    if p > 0.0 && rng.gen::<f64>() < p {
        ShotOutcome::hit(cfg.damage_per_hit)
    } else {
        ShotOutcome::miss()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::ang_diff_deg;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn still(pos: Vec2, facing: f64) -> CombatantState {
        CombatantState {
            pos,
            vel: Vec2::ZERO,
            facing_deg: facing,
            health: 100,
        }
    }

    #[test]
    fn observe_stationary_dead_ahead() {
        let me = still(Vec2::new(0.0, 0.0), 0.0);
        let them = still(Vec2::new(7.0, 0.0), 180.0);
        let obs = observe(&me, &them);
        assert_eq!(obs.rel_speed, 0.0);
        assert_eq!(obs.rel_direction_deg, 0.0);
        assert_eq!(obs.rel_rotation_deg, 0.0); // facing straight back at me
        assert!((obs.distance - 7.0).abs() < 1e-12);
    }

    #[test]
    fn observe_cancels_shared_velocity() {
        let mut me = still(Vec2::new(3.0, 4.0), 30.0);
        let mut them = still(Vec2::new(10.0, -2.0), 200.0);
        me.vel = Vec2::new(0.4, -0.9);
        them.vel = me.vel;
        let obs = observe(&me, &them);
        assert_eq!(obs.rel_speed, 0.0);
        assert_eq!(obs.rel_direction_deg, 0.0);
    }

    #[test]
    fn observe_matches_rotation_matrix_oracle() {
        // Independent oracle: rotate the relative velocity into the ego
        // frame with an explicit 2x2 rotation matrix, then take atan2.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let me = CombatantState {
                pos: Vec2::new(rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0)),
                vel: Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                facing_deg: rng.gen_range(0.0..360.0),
                health: 100,
            };
            let them = CombatantState {
                pos: Vec2::new(rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0)),
                vel: Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                facing_deg: rng.gen_range(0.0..360.0),
                health: 100,
            };
            let obs = observe(&me, &them);

            let w = them.vel.sub(me.vel);
            let th = (-me.facing_deg).to_radians();
            let ego = Vec2::new(
                th.cos() * w.x - th.sin() * w.y,
                th.sin() * w.x + th.cos() * w.y,
            );
            assert!((obs.rel_speed - ego.norm()).abs() < 1e-9);
            if ego.norm() > 1e-9 {
                let oracle_dir = wrap_deg(ego.y.atan2(ego.x).to_degrees());
                assert!(
                    ang_diff_deg(obs.rel_direction_deg, oracle_dir).abs() < 1e-9,
                    "direction {} vs oracle {}",
                    obs.rel_direction_deg,
                    oracle_dir
                );
            }
            let d = them.pos.sub(me.pos);
            assert!((obs.distance - (d.x * d.x + d.y * d.y).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn point_blank_aligned_shot_hits_at_p_max() {
        let cfg = ArenaConfig::default();
        let geom = ShotGeometry {
            shooter_pos: Vec2::new(0.0, 0.0),
            shooter_vel: Vec2::ZERO,
            target_pos: Vec2::new(cfg.falloff_close, 0.0),
            target_vel: Vec2::ZERO,
        };
        let p = hit_probability(ActionId::CENTER, &geom, &cfg);
        assert!((p - cfg.p_max).abs() < 1e-12, "p = {p}");
    }

    #[test]
    fn out_of_cone_aim_never_hits() {
        let cfg = ArenaConfig::default();
        let geom = ShotGeometry {
            shooter_pos: Vec2::ZERO,
            shooter_vel: Vec2::ZERO,
            target_pos: Vec2::new(5.0, 0.0),
            target_vel: Vec2::ZERO,
        };
        // h_skew 2 puts the aim 8 degrees off a stationary target.
        let a = ActionId::new(2, 0).unwrap();
        assert_eq!(hit_probability(a, &geom, &cfg), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            assert_eq!(resolve_learner_shot(a, &geom, &cfg, &mut rng).damage, 0);
        }
    }

    #[test]
    fn best_action_matches_lead_against_strafing_target() {
        // Stationary shooter, target strafing at full speed: enumerate all
        // 15 actions against the geometric oracle and check that the action
        // whose skew best matches the required lead has strictly the
        // highest probability.
        let cfg = ArenaConfig::default();
        let geom = ShotGeometry {
            shooter_pos: Vec2::ZERO,
            shooter_vel: Vec2::ZERO,
            target_pos: Vec2::new(6.0, 0.0),
            target_vel: Vec2::new(0.0, 1.0), // moving to the shooter's left
        };
        let lead = (1.0f64).atan2(cfg.bullet_speed).to_degrees();
        let v_ideal = geom.ideal_v_offset_deg(&cfg);

        // Oracle: pick the skew pair minimizing the combined error metric
        // against the ideal offsets.
        let oracle_best = ActionId::all()
            .min_by(|a, b| {
                let e = |a: &ActionId| {
                    let h = a.h_skew as f64 * cfg.h_skew_step_deg - lead;
                    let v = a.v_skew as f64 * cfg.v_skew_step_deg - v_ideal;
                    h.hypot(cfg.v_error_weight * v)
                };
                e(a).partial_cmp(&e(b)).unwrap()
            })
            .unwrap();

        let best_by_p = ActionId::all()
            .max_by(|a, b| {
                hit_probability(*a, &geom, &cfg)
                    .partial_cmp(&hit_probability(*b, &geom, &cfg))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(best_by_p, oracle_best);
        // Strictly highest among all others.
        let best_p = hit_probability(best_by_p, &geom, &cfg);
        for a in ActionId::all().filter(|a| *a != best_by_p) {
            assert!(hit_probability(a, &geom, &cfg) < best_p);
        }
    }

    #[test]
    fn falloff_decreases_with_distance() {
        let cfg = ArenaConfig::default();
        let p_at = |d: f64| {
            let geom = ShotGeometry {
                shooter_pos: Vec2::ZERO,
                shooter_vel: Vec2::ZERO,
                target_pos: Vec2::new(d, 0.0),
                target_vel: Vec2::ZERO,
            };
            // Compare pure range effect at a fixed angular error of zero.
            hit_probability_for_error(0.0, geom.distance(), &cfg)
        };
        assert!(p_at(2.0) > p_at(10.0));
        assert!(p_at(10.0) > p_at(30.0));
        assert_eq!(p_at(1.0), p_at(2.0), "no penalty inside close range");
    }

    #[test]
    fn farthest_spawn_is_deterministic() {
        let cfg = ArenaConfig::default();
        let sp = cfg.farthest_spawn(Vec2::new(13.0, 13.0));
        assert_eq!(sp, Vec2::new(27.0, 27.0));
        let sp2 = cfg.farthest_spawn(Vec2::new(20.0, 20.0));
        // Equidistant from all four: ties break to the first listed.
        assert_eq!(sp2, cfg.spawn_points[0]);
    }
}

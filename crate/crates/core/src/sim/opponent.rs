//! Fixed-strategy opponents. Five skill levels with static attributes:
//! movement speed, aim error, field of view, turn rate and combat movement
//! style. Level 5 leads moving targets, dodges and closes in.

use rand::Rng;

use super::{
    hit_probability_for_error, ArenaConfig, CombatantState, ShotOutcome, SimError, Vec2,
};
use crate::rl::{ang_diff_deg, wrap_deg};

/// How a profile behaves while it can see its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombatMovement {
    /// Stands still in combat (unless very weak).
    Stationary,
    /// Moves between shots but stops to fire.
    StopToFire,
    /// Moves and fires simultaneously.
    MoveAndFire,
}

/// Static attributes of one fixed-strategy opponent level.
#[derive(Debug, Clone, PartialEq)]
pub struct OpponentProfile {
    pub level: u8,
    /// Fraction of base running speed this level moves at.
    pub speed_fraction: f64,
    /// Maximum angular deviation of a fired shot, degrees.
    pub aim_error_deg: f64,
    /// Field of view, degrees (full width). Fires only when the target is
    /// inside it.
    pub fov_deg: f64,
    /// Turn rate, revolutions per second.
    pub turn_rate: f64,
    pub moves_in_combat: bool,
    pub dodges: bool,
    /// Compensates the target's motion when aiming.
    pub leads_target: bool,
    pub combat_movement: CombatMovement,
    /// Distance it tries to fight at when it moves.
    pub preferred_range: f64,
    /// Sideways fraction of its speed while fighting in range.
    pub strafe_fraction: f64,
    /// Chance per tick of flipping strafe direction.
    pub strafe_flip: f64,
}

/// Ticks per second of game time; turn rates are given per second.
pub const TICKS_PER_SECOND: f64 = 4.0;

impl OpponentProfile {
    /// Attribute table for levels 1-5.
    pub fn for_level(level: u8) -> Result<OpponentProfile, SimError> {
        let p = match level {
            1 => OpponentProfile {
                level: 1,
                speed_fraction: 0.6,
                aim_error_deg: 30.0,
                fov_deg: 30.0,
                turn_rate: 0.25,
                moves_in_combat: false,
                dodges: false,
                leads_target: false,
                combat_movement: CombatMovement::Stationary,
                preferred_range: 12.0,
                strafe_fraction: 0.0,
                strafe_flip: 0.0,
            },
            2 => OpponentProfile {
                level: 2,
                speed_fraction: 0.7,
                aim_error_deg: 24.0,
                fov_deg: 35.0,
                turn_rate: 0.35,
                moves_in_combat: false,
                dodges: false,
                leads_target: false,
                combat_movement: CombatMovement::StopToFire,
                preferred_range: 12.0,
                strafe_fraction: 0.0,
                strafe_flip: 0.0,
            },
            3 => OpponentProfile {
                level: 3,
                speed_fraction: 0.8,
                aim_error_deg: 18.0,
                fov_deg: 40.0,
                turn_rate: 0.55,
                moves_in_combat: true,
                dodges: false,
                leads_target: false,
                combat_movement: CombatMovement::MoveAndFire,
                preferred_range: 10.0,
                strafe_fraction: 0.25,
                strafe_flip: 0.05,
            },
            4 => OpponentProfile {
                level: 4,
                speed_fraction: 0.9,
                aim_error_deg: 12.0,
                fov_deg: 60.0,
                turn_rate: 0.65,
                moves_in_combat: true,
                dodges: false,
                leads_target: false,
                combat_movement: CombatMovement::MoveAndFire,
                preferred_range: 9.0,
                strafe_fraction: 0.3,
                strafe_flip: 0.05,
            },
            5 => OpponentProfile {
                level: 5,
                // Wider raw spread than level 4: it fires on the move at
                // full speed. Leading, closing in and the 80 degree FOV
                // still make it the deadliest level in practice.
                aim_error_deg: 15.0,
                speed_fraction: 1.0,
                fov_deg: 80.0,
                turn_rate: 0.72,
                moves_in_combat: true,
                dodges: true,
                leads_target: true,
                combat_movement: CombatMovement::MoveAndFire,
                preferred_range: 4.0,
                strafe_fraction: 0.25,
                strafe_flip: 0.15,
            },
            _ => {
                return Err(SimError::InvalidConfig(format!(
                    "opponent level {level} outside 1-5"
                )))
            }
        };
        Ok(p)
    }

    pub fn turn_deg_per_tick(&self) -> f64 {
        self.turn_rate * 360.0 / TICKS_PER_SECOND
    }
}

/// Per-actor script memory that persists across ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptState {
    pub strafe_sign: f64,
}

impl Default for ScriptState {
    fn default() -> Self {
        ScriptState { strafe_sign: 1.0 }
    }
}

/// Movement and optional resolved shot for one scripted actor this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorStep {
    pub velocity: Vec2,
    pub facing_deg: f64,
    pub shot: Option<ShotOutcome>,
}

/// One scripted decision: turn toward the target within the turn-rate
/// limit, move according to the level's combat style, and fire when the
/// target is inside the field of view.
///
/// Shot resolution: the aim direction is the true bearing plus a uniform
/// error in ±aim_error; levels that do not lead also eat the offset a
/// moving target requires. The shot lands with the cone/range probability
/// of the resulting angular error.
pub fn opponent_policy_step<R: Rng>(
    profile: &OpponentProfile,
    me: &CombatantState,
    target: &CombatantState,
    script: &mut ScriptState,
    cfg: &ArenaConfig,
    rng: &mut R,
) -> ActorStep {
    let offset = target.pos.sub(me.pos);
    let distance = offset.norm();
    let bearing = offset.angle_deg();

    // Turn toward the target, limited by the level's turn rate.
    let turn = ang_diff_deg(bearing, me.facing_deg);
    let max_turn = profile.turn_deg_per_tick();
    let facing = wrap_deg(me.facing_deg + turn.clamp(-max_turn, max_turn));

    let in_fov = ang_diff_deg(bearing, facing).abs() <= profile.fov_deg / 2.0;
    let weak = me.health < cfg.weak_health;

    if profile.strafe_flip > 0.0 && rng.gen::<f64>() < profile.strafe_flip {
        script.strafe_sign = -script.strafe_sign;
    }

    let speed = profile.speed_fraction * cfg.base_speed;
    let toward = offset.normalized();
    let sideways = toward.perp().scale(script.strafe_sign);

    let velocity = if weak {
        // Fighting retreat: backpedal with a sideways zigzag, still facing
        // the target.
        if rng.gen::<f64>() < 0.1 {
            script.strafe_sign = -script.strafe_sign;
        }
        toward
            .scale(-0.7)
            .add(sideways.scale(0.5))
            .normalized()
            .scale(speed)
    } else {
        match profile.combat_movement {
            CombatMovement::Stationary => Vec2::ZERO,
            CombatMovement::StopToFire => {
                if in_fov {
                    Vec2::ZERO
                } else {
                    seek(profile, distance, toward, sideways, speed)
                }
            }
            CombatMovement::MoveAndFire => seek(profile, distance, toward, sideways, speed),
        }
    };

    let shot = if in_fov {
        Some(resolve_scripted_shot(profile, me, target, distance, cfg, rng))
    } else {
        None
    };

    ActorStep {
        velocity,
        facing_deg: facing,
        shot,
    }
}

fn seek(profile: &OpponentProfile, distance: f64, toward: Vec2, sideways: Vec2, speed: f64) -> Vec2 {
    let band = 2.0;
    if distance > profile.preferred_range + band {
        toward.scale(0.9).add(sideways.scale(0.3)).normalized().scale(speed)
    } else if distance < profile.preferred_range - band {
        toward.scale(-0.9).add(sideways.scale(0.3)).normalized().scale(speed)
    } else {
        sideways.scale(profile.strafe_fraction * speed)
    }
}

fn resolve_scripted_shot<R: Rng>(
    profile: &OpponentProfile,
    me: &CombatantState,
    target: &CombatantState,
    distance: f64,
    cfg: &ArenaConfig,
    rng: &mut R,
) -> ShotOutcome {
    // Error shape: blend of a uniform draw and a triangular one (mean of
    // two uniforms); both span the full ±aim_error attribute.
    let u1 = rng.gen_range(-1.0f64..=1.0);
    let u2 = rng.gen_range(-1.0f64..=1.0);
    let m = cfg.aim_error_mix;
    let noise = profile.aim_error_deg * ((1.0 - m) * u1 + m * (u1 + u2) / 2.0);
    let error = if profile.leads_target {
        noise
    } else {
        // The target's sideways motion shifts where the shot had to go;
        // non-leading levels do not compensate for it.
        let u = target.pos.sub(me.pos).normalized();
        let target_perp = target.vel.dot(u.perp());
        let required_lead = target_perp.atan2(cfg.bullet_speed).to_degrees();
        noise - required_lead
    };
    let p = hit_probability_for_error(error.abs(), distance, cfg);
    if p > 0.0 && rng.gen::<f64>() < p {
        ShotOutcome::hit(cfg.damage_per_hit)
    } else {
        ShotOutcome::miss()
    }
}

/// Fixed learner-side movement: keep the preferred fighting range, strafe
/// sideways inside it, always facing the opponent. Aiming is the learned
/// part; this script is not.
pub fn learner_movement_step<R: Rng>(
    me: &CombatantState,
    opponent: &CombatantState,
    script: &mut ScriptState,
    cfg: &ArenaConfig,
    rng: &mut R,
) -> (Vec2, f64) {
    let offset = opponent.pos.sub(me.pos);
    let distance = offset.norm();
    let bearing = offset.angle_deg();
    let toward = offset.normalized();
    let sideways = toward.perp().scale(script.strafe_sign);

    if rng.gen::<f64>() < cfg.learner_strafe_flip {
        script.strafe_sign = -script.strafe_sign;
    }

    let velocity = if distance > cfg.learner_range + cfg.learner_range_tol {
        // Spiral in, radial-dominant: close fast but keep sideways speed up
        // so run-and-gun aim stays a live problem while approaching.
        toward.scale(0.8).add(sideways.scale(0.6)).normalized().scale(cfg.base_speed)
    } else if distance < cfg.learner_range - cfg.learner_range_tol {
        toward.scale(-0.5).add(sideways.scale(0.866)).normalized().scale(cfg.base_speed)
    } else {
        sideways.scale(cfg.base_speed)
    };

    (velocity, bearing)
}

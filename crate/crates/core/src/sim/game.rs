//! The tick loop: one isolated 1-vs-1 game between the learner and one
//! scripted opponent, with optional milestone capture (training) or the
//! threshold balancer (balanced play) wired into death events.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::opponent::learner_movement_step;
use super::{
    observe, opponent_policy_step, resolve_learner_shot, ArenaConfig, CombatantState,
    OpponentProfile, ScriptState, ShotGeometry, SimError,
};
use crate::catalogue::{BalancerAction, BalancerState, Catalogue, IncidentKind};
use crate::rl::{
    discretize, reward_for_shot, sarsa_lambda_update, sarsa_terminal_update, select_action,
    ActionId, DiscretizerConfig, LearnerConfig, QTable, StateKey,
};

/// Who an incident row is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    Learner,
    Opponent,
    Balancer,
}

impl Actor {
    pub fn as_str(&self) -> &'static str {
        match self {
            Actor::Learner => "learner",
            Actor::Opponent => "opponent",
            Actor::Balancer => "balancer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncidentEvent {
    Kill,
    Death,
    MilestoneUp,
    MilestoneDown,
    PolicyClearance,
}

impl IncidentEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            IncidentEvent::Kill => "kill",
            IncidentEvent::Death => "death",
            IncidentEvent::MilestoneUp => "milestone_up",
            IncidentEvent::MilestoneDown => "milestone_down",
            IncidentEvent::PolicyClearance => "policy_clearance",
        }
    }
}

/// One logged incident. Kill/death rows are from the learner's
/// perspective; balancer rows record milestone moves. `milestone_index` is
/// the index in effect after the row's event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incident {
    pub tick: u64,
    pub actor: Actor,
    pub event: IncidentEvent,
    pub learner_kills: u64,
    pub learner_deaths: u64,
    pub milestone_index: usize,
}

pub const INCIDENT_CSV_HEADER: &str =
    "tick,actor,event,learner_kills,learner_deaths,milestone_index";

impl Incident {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.tick,
            self.actor.as_str(),
            self.event.as_str(),
            self.learner_kills,
            self.learner_deaths,
            self.milestone_index
        )
    }
}

/// Per-game incident log and running totals. Kills of one side always equal
/// deaths of the other.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GameLog {
    pub incidents: Vec<Incident>,
    pub learner_kills: u64,
    pub learner_deaths: u64,
    pub opponent_kills: u64,
    pub opponent_deaths: u64,
}

impl GameLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(INCIDENT_CSV_HEADER);
        out.push('\n');
        for inc in &self.incidents {
            out.push_str(&inc.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Final result of a game, by kill comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Win,
    Lose,
    Draw,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Win => "win",
            Outcome::Lose => "lose",
            Outcome::Draw => "draw",
        }
    }
}

/// How the learner-side combatant chooses its shots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    /// SARSA(λ) policy over the live Q-table, learning online.
    Learning,
    /// Greedy over a frozen table, no updates. Pure policy evaluation,
    /// e.g. comparing stored milestones against each other.
    Frozen,
    /// A fixed skew every tick, no learning. Used to probe opponent
    /// strength with a constant yardstick.
    Fixed(ActionId),
}

/// What is attached to death events.
pub enum GameMode<'a> {
    /// Plain learning, no catalogue interplay.
    RlOnly,
    /// Capture a milestone every `interval` cumulative learner deaths.
    Training {
        catalogue: &'a mut Catalogue,
        prior_deaths: u64,
    },
    /// The balancer steps through a finished catalogue as the kill-death
    /// difference leaves the match range.
    Balanced {
        catalogue: &'a Catalogue,
        balancer: &'a mut BalancerState,
    },
}

/// Everything a game needs up front.
pub struct GameSetup<'a> {
    pub arena: &'a ArenaConfig,
    pub discretizer: &'a DiscretizerConfig,
    pub learner: LearnerConfig,
    pub controller: Controller,
    pub initial_q: QTable,
    pub opponent: OpponentProfile,
    pub seed: u64,
}

/// Log, outcome and the learner's table as it stood at the final tick.
#[derive(Debug)]
pub struct GameReport {
    pub log: GameLog,
    pub outcome: Outcome,
    pub q: QTable,
}

/// One running game. `step` advances a single tick; `run_game` drives a
/// whole game.
pub struct Game<'a> {
    arena: &'a ArenaConfig,
    discretizer: &'a DiscretizerConfig,
    learner_cfg: LearnerConfig,
    controller: Controller,
    mode: GameMode<'a>,
    opponent_profile: OpponentProfile,
    rng: ChaCha8Rng,
    tick: u64,
    learner: CombatantState,
    opponent: CombatantState,
    learner_script: ScriptState,
    opponent_script: ScriptState,
    q: QTable,
    pending: Option<(StateKey, ActionId, f64)>,
    last_shot: Option<crate::rl::ShotResult>,
    log: GameLog,
}

impl<'a> Game<'a> {
    pub fn new(setup: GameSetup<'a>, mode: GameMode<'a>) -> Result<Game<'a>, SimError> {
        setup.arena.validate()?;
        setup
            .learner
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let arena = setup.arena;
        let learner_pos = arena.spawn_points[0];
        let opponent_pos = arena.spawn_points[1 % arena.spawn_points.len()];
        let learner = CombatantState::spawn_at(
            learner_pos,
            opponent_pos.sub(learner_pos).angle_deg(),
            arena.max_health,
        );
        let opponent = CombatantState::spawn_at(
            opponent_pos,
            learner_pos.sub(opponent_pos).angle_deg(),
            arena.max_health,
        );
        Ok(Game {
            arena,
            discretizer: setup.discretizer,
            learner_cfg: setup.learner,
            controller: setup.controller,
            mode,
            opponent_profile: setup.opponent,
            rng: ChaCha8Rng::seed_from_u64(setup.seed),
            tick: 0,
            learner,
            opponent,
            learner_script: ScriptState::default(),
            opponent_script: ScriptState::default(),
            q: setup.initial_q,
            pending: None,
            last_shot: None,
            log: GameLog::default(),
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn log(&self) -> &GameLog {
        &self.log
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn learner_state(&self) -> &CombatantState {
        &self.learner
    }

    pub fn opponent_state(&self) -> &CombatantState {
        &self.opponent
    }

    /// Result of the learner's most recent shot, if any tick has run.
    pub fn last_shot_result(&self) -> Option<crate::rl::ShotResult> {
        self.last_shot
    }

    pub fn milestone_index(&self) -> usize {
        match &self.mode {
            GameMode::Balanced { balancer, .. } => balancer.current_index(),
            _ => 0,
        }
    }

    /// Advance one tick. Returns the incidents it produced, already
    /// appended to the log.
    pub fn step(&mut self) -> Vec<Incident> {
        let first_incident = self.log.incidents.len();

        // Learner decision: observe, pick an action, close out the previous
        // SARSA transition against it.
        let obs = observe(&self.learner, &self.opponent);
        let state = discretize(&obs, self.discretizer)
            .expect("simulator produces finite observations");
        let action = match self.controller {
            Controller::Learning => {
                select_action(&self.q, state, self.learner_cfg.epsilon, &mut self.rng)
            }
            Controller::Frozen => self.q.greedy_action(state),
            Controller::Fixed(a) => a,
        };
        if let (Controller::Learning, Some((ps, pa, pr))) = (self.controller, self.pending) {
            sarsa_lambda_update(&mut self.q, ps, pa, pr, state, action, &self.learner_cfg);
        }

        // Both shots resolve against start-of-tick geometry.
        let geom = ShotGeometry::between(&self.learner, &self.opponent);
        let learner_shot = resolve_learner_shot(action, &geom, self.arena, &mut self.rng);
        self.last_shot = Some(learner_shot.result);
        if let Controller::Learning = self.controller {
            let r = reward_for_shot(learner_shot.result, &self.learner_cfg);
            self.pending = Some((state, action, r));
        }

        let opp_step = opponent_policy_step(
            &self.opponent_profile,
            &self.opponent,
            &self.learner,
            &mut self.opponent_script,
            self.arena,
            &mut self.rng,
        );

        let (learner_vel, learner_facing) = learner_movement_step(
            &self.learner,
            &self.opponent,
            &mut self.learner_script,
            self.arena,
            &mut self.rng,
        );

        // Apply movement, then damage, simultaneously for both sides.
        self.learner.vel = learner_vel;
        self.learner.pos = self.arena.clamp_to_bounds(self.learner.pos.add(learner_vel));
        self.learner.facing_deg = learner_facing;
        self.opponent.vel = opp_step.velocity;
        self.opponent.pos = self
            .arena
            .clamp_to_bounds(self.opponent.pos.add(opp_step.velocity));
        self.opponent.facing_deg = opp_step.facing_deg;

        self.opponent.health -= learner_shot.damage;
        if let Some(shot) = opp_step.shot {
            self.learner.health -= shot.damage;
        }

        // Deaths and respawns; the opponent's death (a learner kill) is
        // processed first when both fall in the same tick.
        if self.opponent.health <= 0 {
            self.on_opponent_death();
        }
        if self.learner.health <= 0 {
            self.on_learner_death();
        }

        self.tick += 1;
        self.log.incidents[first_incident..].to_vec()
    }

    fn on_opponent_death(&mut self) {
        self.log.learner_kills += 1;
        self.log.opponent_deaths += 1;
        self.push_incident(Actor::Learner, IncidentEvent::Kill);

        if let GameMode::Balanced { catalogue, balancer } = &mut self.mode {
            if let Some(action) =
                balancer.on_incident(IncidentKind::LearnerKilledOpponent, catalogue, &mut self.q)
            {
                // The live table was replaced or wiped; the in-flight
                // transition belongs to the old policy.
                self.pending = None;
                let event = match action {
                    BalancerAction::MilestoneDown { .. } => IncidentEvent::MilestoneDown,
                    BalancerAction::PolicyClearance => IncidentEvent::PolicyClearance,
                    BalancerAction::MilestoneUp { .. } => IncidentEvent::MilestoneUp,
                };
                self.push_incident(Actor::Balancer, event);
            }
        }

        let spawn = self.arena.farthest_spawn(self.learner.pos);
        self.opponent = CombatantState::spawn_at(
            spawn,
            self.learner.pos.sub(spawn).angle_deg(),
            self.arena.max_health,
        );
    }

    fn on_learner_death(&mut self) {
        if let Controller::Learning = self.controller {
            if let Some((ps, pa, pr)) = self.pending.take() {
                sarsa_terminal_update(&mut self.q, ps, pa, pr, &self.learner_cfg);
            }
        }
        self.log.learner_deaths += 1;
        self.log.opponent_kills += 1;
        self.push_incident(Actor::Learner, IncidentEvent::Death);

        match &mut self.mode {
            GameMode::Training { catalogue, prior_deaths } => {
                catalogue.maybe_capture(*prior_deaths + self.log.learner_deaths, &self.q);
            }
            GameMode::Balanced { catalogue, balancer } => {
                if let Some(action) =
                    balancer.on_incident(IncidentKind::LearnerDied, catalogue, &mut self.q)
                {
                    let event = match action {
                        BalancerAction::MilestoneUp { .. } => IncidentEvent::MilestoneUp,
                        BalancerAction::MilestoneDown { .. } => IncidentEvent::MilestoneDown,
                        BalancerAction::PolicyClearance => IncidentEvent::PolicyClearance,
                    };
                    self.push_incident(Actor::Balancer, event);
                }
            }
            GameMode::RlOnly => {}
        }

        // New life: traces and the in-flight transition die with the old
        // one.
        self.q.reset_traces();
        self.pending = None;
        let spawn = self.arena.farthest_spawn(self.opponent.pos);
        self.learner = CombatantState::spawn_at(
            spawn,
            self.opponent.pos.sub(spawn).angle_deg(),
            self.arena.max_health,
        );
    }

    fn push_incident(&mut self, actor: Actor, event: IncidentEvent) {
        let incident = Incident {
            tick: self.tick,
            actor,
            event,
            learner_kills: self.log.learner_kills,
            learner_deaths: self.log.learner_deaths,
            milestone_index: self.milestone_index(),
        };
        self.log.incidents.push(incident);
    }

    pub fn finish(self) -> GameReport {
        let outcome = if self.log.learner_kills > self.log.opponent_kills {
            Outcome::Win
        } else if self.log.learner_kills < self.log.opponent_kills {
            Outcome::Lose
        } else {
            Outcome::Draw
        };
        GameReport {
            log: self.log,
            outcome,
            q: self.q,
        }
    }
}

/// Simulate a full game of `duration_ticks` ticks.
pub fn run_game(
    setup: GameSetup<'_>,
    mode: GameMode<'_>,
    duration_ticks: u64,
) -> Result<GameReport, SimError> {
    if duration_ticks == 0 {
        return Err(SimError::ZeroDuration);
    }
    let mut game = Game::new(setup, mode)?;
    for _ in 0..duration_ticks {
        game.step();
    }
    Ok(game.finish())
}

/// Kill counts from a scripted head-to-head between two profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DuelOutcome {
    pub kills_a: u64,
    pub kills_b: u64,
}

/// Pit two fixed-strategy profiles against each other, both using the same
/// scripted aim machinery. No learner involved.
pub fn duel(
    profile_a: &OpponentProfile,
    profile_b: &OpponentProfile,
    arena: &ArenaConfig,
    duration_ticks: u64,
    seed: u64,
) -> Result<DuelOutcome, SimError> {
    if duration_ticks == 0 {
        return Err(SimError::ZeroDuration);
    }
    arena.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos_a = arena.spawn_points[0];
    let pos_b = arena.spawn_points[1 % arena.spawn_points.len()];
    let mut a = CombatantState::spawn_at(pos_a, pos_b.sub(pos_a).angle_deg(), arena.max_health);
    let mut b = CombatantState::spawn_at(pos_b, pos_a.sub(pos_b).angle_deg(), arena.max_health);
    let mut script_a = ScriptState::default();
    let mut script_b = ScriptState::default();
    let mut kills_a = 0;
    let mut kills_b = 0;

    for _ in 0..duration_ticks {
        let step_a = opponent_policy_step(profile_a, &a, &b, &mut script_a, arena, &mut rng);
        let step_b = opponent_policy_step(profile_b, &b, &a, &mut script_b, arena, &mut rng);

        a.vel = step_a.velocity;
        a.pos = arena.clamp_to_bounds(a.pos.add(step_a.velocity));
        a.facing_deg = step_a.facing_deg;
        b.vel = step_b.velocity;
        b.pos = arena.clamp_to_bounds(b.pos.add(step_b.velocity));
        b.facing_deg = step_b.facing_deg;

        if let Some(shot) = step_a.shot {
            b.health -= shot.damage;
        }
        if let Some(shot) = step_b.shot {
            a.health -= shot.damage;
        }

        if b.health <= 0 {
            kills_a += 1;
            let spawn = arena.farthest_spawn(a.pos);
            b = CombatantState::spawn_at(spawn, a.pos.sub(spawn).angle_deg(), arena.max_health);
        }
        if a.health <= 0 {
            kills_b += 1;
            let spawn = arena.farthest_spawn(b.pos);
            a = CombatantState::spawn_at(spawn, b.pos.sub(spawn).angle_deg(), arena.max_health);
        }
    }

    Ok(DuelOutcome { kills_a, kills_b })
}

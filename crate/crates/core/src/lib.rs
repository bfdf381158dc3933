//! Skill-balanced reinforcement-learning combatant for a 1-vs-1 arena.
//!
//! An NPC learns a shooting task with tabular SARSA(λ). During training its
//! policy is snapshotted every fixed number of deaths into an ordered
//! catalogue of milestones. At play time a threshold balancer watches the
//! kill-death difference and steps through the catalogue — back when the
//! NPC dominates, forward when it struggles — so its effective skill tracks
//! the opponent's.
//!
//! - [`rl`]: the tabular learner (discretization, ε-greedy, trace updates)
//! - [`sim`]: the arena, scripted opponents and the tick loop
//! - [`catalogue`]: milestones and the balancer state machine
//! - [`persist`]: deterministic file formats for tables and catalogues

pub mod catalogue;
pub mod persist;
pub mod rl;
pub mod sim;

//! The experience catalogue: an ordered timeline of policy snapshots
//! captured during training, plus the threshold balancer that steps through
//! it at runtime to match the opponent's skill.
//!
//! Milestone 0 is always the empty table ("no knowledge"). During training a
//! new milestone is captured every `interval` learner deaths. At play time
//! the balancer watches the running kill-death difference (KDD): climbing
//! above the threshold steps the policy back (or wipes it at the bottom),
//! falling below steps it forward.

use thiserror::Error;

use crate::rl::{QTable, Snapshot};

#[derive(Debug, Error, PartialEq)]
pub enum CatalogueError {
    #[error("milestone index {index} out of range (catalogue has {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("milestone interval must be positive")]
    ZeroInterval,
}

/// One stored policy snapshot, indexed by the cumulative death count at
/// which it was captured.
#[derive(Debug, Clone, PartialEq)]
pub struct Milestone {
    pub index: usize,
    pub deaths_at_capture: u64,
    pub snapshot: Snapshot,
}

/// Ordered sequence of milestones. Non-empty by construction: index 0 is
/// the empty snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalogue {
    interval: u64,
    milestones: Vec<Milestone>,
}

impl Catalogue {
    pub fn new(interval: u64) -> Result<Catalogue, CatalogueError> {
        if interval == 0 {
            return Err(CatalogueError::ZeroInterval);
        }
        Ok(Catalogue {
            interval,
            milestones: vec![Milestone {
                index: 0,
                deaths_at_capture: 0,
                snapshot: Snapshot::new(),
            }],
        })
    }

    /// Rebuild from stored parts (used by persistence). Milestones must be
    /// contiguous from 0.
    pub fn from_parts(interval: u64, milestones: Vec<Milestone>) -> Result<Catalogue, CatalogueError> {
        if interval == 0 {
            return Err(CatalogueError::ZeroInterval);
        }
        for (i, m) in milestones.iter().enumerate() {
            if m.index != i {
                return Err(CatalogueError::IndexOutOfRange {
                    index: m.index,
                    len: milestones.len(),
                });
            }
        }
        if milestones.is_empty() {
            return Err(CatalogueError::IndexOutOfRange { index: 0, len: 0 });
        }
        Ok(Catalogue { interval, milestones })
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.milestones.len()
    }

    pub fn is_empty(&self) -> bool {
        false // milestone 0 always present
    }

    pub fn max_index(&self) -> usize {
        self.milestones.len() - 1
    }

    pub fn milestones(&self) -> &[Milestone] {
        &self.milestones
    }

    pub fn milestone(&self, index: usize) -> Result<&Milestone, CatalogueError> {
        self.milestones.get(index).ok_or(CatalogueError::IndexOutOfRange {
            index,
            len: self.milestones.len(),
        })
    }

    /// Capture a milestone if `deaths` is a positive multiple of the
    /// interval that has not been captured yet. Returns true on capture.
    pub fn maybe_capture(&mut self, deaths: u64, q: &QTable) -> bool {
        if deaths == 0 || deaths % self.interval != 0 {
            return false;
        }
        let last = self.milestones.last().expect("milestone 0 present");
        if last.deaths_at_capture >= deaths {
            return false;
        }
        self.milestones.push(Milestone {
            index: self.milestones.len(),
            deaths_at_capture: deaths,
            snapshot: q.snapshot(),
        });
        true
    }

    /// Fresh mutable copy of a stored snapshot, traces zeroed. The stored
    /// milestone is unaffected by whatever happens to the copy.
    pub fn load_milestone(&self, index: usize) -> Result<QTable, CatalogueError> {
        Ok(QTable::from_snapshot(&self.milestone(index)?.snapshot))
    }
}

/// Incident kinds the balancer reacts to. These are the only points where
/// a milestone change may happen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncidentKind {
    /// The learner killed the opponent.
    LearnerKilledOpponent,
    /// The learner died.
    LearnerDied,
}

/// What the balancer did in response to an incident.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalancerAction {
    /// Stepped back to an earlier milestone (the learner was too strong).
    MilestoneDown { to: usize },
    /// Stepped forward to a later milestone (the learner was too weak).
    MilestoneUp { to: usize },
    /// Already at milestone 0 and still too strong: live table wiped.
    PolicyClearance,
}

/// Runtime state of the threshold balancer for one game.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancerState {
    current_index: usize,
    kdd: i64,
    threshold: i64,
    pub adjustments_up: u64,
    pub adjustments_down: u64,
    pub clearances: u64,
}

impl BalancerState {
    /// KDD starts at 0 each game; play begins from the given milestone
    /// (normally 0, "no experience").
    pub fn new(threshold: i64, starting_index: usize) -> BalancerState {
        BalancerState {
            current_index: starting_index,
            kdd: 0,
            threshold,
            adjustments_up: 0,
            adjustments_down: 0,
            clearances: 0,
        }
    }

    pub fn current_index(&self) -> usize {
        self.current_index
    }

    pub fn kdd(&self) -> i64 {
        self.kdd
    }

    pub fn threshold(&self) -> i64 {
        self.threshold
    }

    /// Feed one incident through the state machine.
    ///
    /// The KDD moves first (+1 kill, −1 death). While it stays inside the
    /// inclusive match range `[-threshold, threshold]` nothing else happens.
    /// Above the range an opponent death steps the policy back one milestone,
    /// or wipes it when already at milestone 0. Below the range a learner
    /// death steps it forward one milestone, until the top of the catalogue.
    /// The live table is replaced in place on any switch; learning continues
    /// on whatever table results.
    pub fn on_incident(
        &mut self,
        incident: IncidentKind,
        catalogue: &Catalogue,
        live: &mut QTable,
    ) -> Option<BalancerAction> {
        match incident {
            IncidentKind::LearnerKilledOpponent => {
                self.kdd += 1;
                if self.kdd > self.threshold {
                    if self.current_index > 0 {
                        self.current_index -= 1;
                        let fresh = catalogue
                            .load_milestone(self.current_index)
                            .expect("index clamped within catalogue");
                        *live = fresh;
                        self.adjustments_down += 1;
                        return Some(BalancerAction::MilestoneDown { to: self.current_index });
                    }
                    live.clear();
                    self.clearances += 1;
                    return Some(BalancerAction::PolicyClearance);
                }
                None
            }
            IncidentKind::LearnerDied => {
                self.kdd -= 1;
                if self.kdd < -self.threshold && self.current_index < catalogue.max_index() {
                    self.current_index += 1;
                    let fresh = catalogue
                        .load_milestone(self.current_index)
                        .expect("index clamped within catalogue");
                    *live = fresh;
                    self.adjustments_up += 1;
                    return Some(BalancerAction::MilestoneUp { to: self.current_index });
                }
                None
            }
        }
    }
}

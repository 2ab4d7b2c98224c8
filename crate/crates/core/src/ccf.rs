//! Conceptual category formation: online leader clustering over normalized
//! state features.
//!
//! A [`Partition`] owns a growing set of categories. A state joins the
//! nearest category whose centroid lies within the semantic radius
//! `epsilon`; otherwise it founds a new category, until `max_categories` is
//! reached and the nearest category absorbs it with an overflow diagnostic.
//! Each category carries a belief (see [`crate::belief`]) and a centroid
//! maintained as the running mean of every feature vector assigned to it.
//!
//! Assignments are *sticky*: the partition memoizes the category of every
//! exact feature vector it has seen, so a revisited state keeps its category
//! even after centroids drift. That is what makes the partition a partition —
//! each observed state belongs to exactly one category — while
//! [`Partition::coherence_audit`] measures the drift and can explicitly
//! reassign when asked.

use crate::belief::{DiscreteBelief, GaussianBelief};
use crate::error::{ensure_finite, CoreError, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type CategoryId = usize;

/// Feature map applied to raw observations before clustering. Environments
/// already expose min-max-normalized features, so the identity is the only
/// map currently defined; the identifier exists so configs name it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMapId {
    Identity,
}

impl FeatureMapId {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(FeatureMapId::Identity),
            other => Err(CoreError::UnknownIdentifier {
                what: "feature map",
                name: other.to_string(),
            }),
        }
    }
}

/// Distance used for nearest-centroid queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceId {
    Euclidean,
}

impl DistanceId {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "euclidean" => Ok(DistanceId::Euclidean),
            other => Err(CoreError::UnknownIdentifier {
                what: "distance",
                name: other.to_string(),
            }),
        }
    }

    pub fn between(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceId::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Belief shape attached to each category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BeliefMode {
    Discrete { n_actions: usize, laplace: f64 },
    Gaussian {
        action_dim: usize,
        prior_mean: f64,
        prior_var: f64,
        var_floor: f64,
    },
}

impl BeliefMode {
    fn fresh(&self) -> Result<CategoryBelief> {
        match self {
            BeliefMode::Discrete { n_actions, laplace } => Ok(CategoryBelief::Discrete(
                DiscreteBelief::new(*n_actions, *laplace)?,
            )),
            BeliefMode::Gaussian {
                action_dim,
                prior_mean,
                prior_var,
                var_floor,
            } => Ok(CategoryBelief::Gaussian(GaussianBelief::new(
                vec![*prior_mean; *action_dim],
                vec![*prior_var; *action_dim],
                *var_floor,
            )?)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CategoryBelief {
    Discrete(DiscreteBelief),
    Gaussian(GaussianBelief),
}

impl CategoryBelief {
    pub fn as_discrete(&self) -> Option<&DiscreteBelief> {
        match self {
            CategoryBelief::Discrete(b) => Some(b),
            CategoryBelief::Gaussian(_) => None,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianBelief> {
        match self {
            CategoryBelief::Gaussian(b) => Some(b),
            CategoryBelief::Discrete(_) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub centroid: Vec<f64>,
    /// Semantic radius this category was created under.
    pub radius: f64,
    /// Number of assignment events folded into the centroid.
    pub member_count: u64,
    pub belief: CategoryBelief,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Semantic radius: a state joins a category only within this distance.
    pub epsilon: f64,
    /// Consistency bound audits compare pairwise member deviation against.
    /// May be infinite (audits then never flag).
    pub delta: f64,
    pub max_categories: usize,
    pub feature_map: FeatureMapId,
    pub distance: DistanceId,
    pub belief: BeliefMode,
    /// Record per-event assignment diagnostics and member lists. Costs
    /// memory proportional to the run length; meant for tests and audits.
    pub track_diagnostics: bool,
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(CoreError::param(
                "epsilon",
                format!("must be positive and finite, got {}", self.epsilon),
            ));
        }
        if !(self.delta > 0.0) {
            return Err(CoreError::param(
                "delta",
                format!("must be positive (may be infinite), got {}", self.delta),
            ));
        }
        if self.max_categories == 0 {
            return Err(CoreError::param("max_categories", "must be at least 1"));
        }
        // Belief parameters surface errors now rather than at first spawn.
        self.belief.fresh().map(|_| ())
    }
}

/// Outcome of one assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: CategoryId,
    /// Distance to the assigned category's centroid at decision time
    /// (zero for a fresh spawn).
    pub distance: f64,
    pub spawned: bool,
    /// Set when the category cap forced a nearest-centroid fallback beyond
    /// the semantic radius.
    pub overflow: bool,
    /// Set when the sticky per-state memo answered instead of a fresh
    /// nearest-centroid decision.
    pub memo_hit: bool,
}

/// One recorded assignment event (diagnostics mode).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignEvent {
    pub key: Vec<u64>,
    pub assignment: Assignment,
}

/// What a coherence audit found.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    /// States examined.
    pub examined: usize,
    /// Fraction of examined states farther than `epsilon` from their
    /// category's current centroid.
    pub drift_fraction: f64,
    /// Largest pairwise distance between examined states sharing a category.
    pub max_pairwise_deviation: f64,
    /// Categories (among those sampled) whose pairwise deviation exceeds
    /// `delta`.
    pub consistency_violations: usize,
    /// States re-assigned because they had drifted (only when requested).
    pub reassigned: usize,
    /// Distinct categories seen in the sample.
    pub sampled_categories: usize,
}

#[derive(Debug, Clone)]
pub struct Partition {
    cfg: PartitionConfig,
    categories: Vec<Category>,
    memo: HashMap<Vec<u64>, CategoryId>,
    overflow_count: u64,
    /// Per-category member features, kept only in diagnostics mode.
    members: Vec<Vec<Vec<f64>>>,
    events: Vec<AssignEvent>,
}

/// Serializable snapshot of the partition for checkpoints (the sticky memo
/// and diagnostics are runtime state and are not part of it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionSnapshot {
    pub epsilon: f64,
    pub delta: f64,
    pub max_categories: usize,
    pub overflow_count: u64,
    pub categories: Vec<Category>,
}

impl Partition {
    pub fn new(cfg: PartitionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Partition {
            cfg,
            categories: Vec::new(),
            memo: HashMap::new(),
            overflow_count: 0,
            members: Vec::new(),
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &PartitionConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn overflow_count(&self) -> u64 {
        self.overflow_count
    }

    pub fn belief(&self, id: CategoryId) -> Result<&CategoryBelief> {
        self.categories
            .get(id)
            .map(|c| &c.belief)
            .ok_or_else(|| CoreError::param("category", format!("no category with id {id}")))
    }

    pub fn belief_mut(&mut self, id: CategoryId) -> Result<&mut CategoryBelief> {
        self.categories
            .get_mut(id)
            .map(|c| &mut c.belief)
            .ok_or_else(|| CoreError::param("category", format!("no category with id {id}")))
    }

    /// Nearest category and its distance. Read-only; never spawns.
    pub fn nearest(&self, features: &[f64]) -> Option<(CategoryId, f64)> {
        let mut best: Option<(CategoryId, f64)> = None;
        for c in &self.categories {
            let d = self.cfg.distance.between(features, &c.centroid);
            match best {
                Some((_, bd)) if bd <= d => {}
                _ => best = Some((c.id, d)),
            }
        }
        best
    }

    /// Category for `features`: the memoized one if this exact vector has
    /// been seen, otherwise nearest-within-epsilon, otherwise a fresh spawn,
    /// otherwise (at the cap) the nearest category with an overflow flag.
    ///
    /// Mutates only by spawning or memo insertion; centroids move in
    /// [`Partition::update_centroid`].
    pub fn assign(&mut self, features: &[f64]) -> Result<Assignment> {
        self.check_features(features)?;
        let key = feature_key(features);
        if let Some(&id) = self.memo.get(&key) {
            let d = self.cfg.distance.between(features, &self.categories[id].centroid);
            let assignment = Assignment {
                id,
                distance: d,
                spawned: false,
                overflow: false,
                memo_hit: true,
            };
            self.record(key, assignment);
            return Ok(assignment);
        }

        let nearest = self.nearest(features);
        let assignment = match nearest {
            Some((id, d)) if d <= self.cfg.epsilon => Assignment {
                id,
                distance: d,
                spawned: false,
                overflow: false,
                memo_hit: false,
            },
            _ if self.categories.len() < self.cfg.max_categories => {
                let id = self.spawn(features)?;
                Assignment {
                    id,
                    distance: 0.0,
                    spawned: true,
                    overflow: false,
                    memo_hit: false,
                }
            }
            Some((id, d)) => {
                // Cap reached: absorb into the nearest category and count it.
                self.overflow_count += 1;
                Assignment {
                    id,
                    distance: d,
                    spawned: false,
                    overflow: true,
                    memo_hit: false,
                }
            }
            None => unreachable!("empty partition always has spawn capacity"),
        };
        self.memo.insert(key.clone(), assignment.id);
        self.record(key, assignment);
        Ok(assignment)
    }

    /// Folds `features` into the running mean of category `id`:
    /// `count += 1; centroid += (features - centroid) / count`.
    pub fn update_centroid(&mut self, id: CategoryId, features: &[f64]) -> Result<()> {
        self.check_features(features)?;
        let track = self.cfg.track_diagnostics;
        let category = self
            .categories
            .get_mut(id)
            .ok_or_else(|| CoreError::param("category", format!("no category with id {id}")))?;
        if features.len() != category.centroid.len() {
            return Err(CoreError::DimensionMismatch {
                context: "centroid update",
                left: features.len(),
                right: category.centroid.len(),
            });
        }
        category.member_count += 1;
        let k = category.member_count as f64;
        for (c, x) in category.centroid.iter_mut().zip(features) {
            *c += (x - *c) / k;
        }
        if track {
            self.members[id].push(features.to_vec());
        }
        Ok(())
    }

    /// `assign` + `update_centroid` — the per-step call agents make.
    pub fn observe(&mut self, features: &[f64]) -> Result<Assignment> {
        let assignment = self.assign(features)?;
        self.update_centroid(assignment.id, features)?;
        Ok(assignment)
    }

    /// Measures how far `recent` states (with their recorded categories)
    /// have drifted from current centroids, and the pairwise spread inside
    /// the sampled categories. With `reassign`, drifted states get a fresh
    /// nearest/spawn/overflow decision and the memo is updated.
    pub fn coherence_audit(
        &mut self,
        recent: &[(Vec<f64>, CategoryId)],
        reassign: bool,
    ) -> Result<AuditReport> {
        let mut drifted: Vec<usize> = Vec::new();
        let mut by_category: HashMap<CategoryId, Vec<usize>> = HashMap::new();
        for (i, (features, id)) in recent.iter().enumerate() {
            let category = self.categories.get(*id).ok_or_else(|| {
                CoreError::param("category", format!("audit references unknown id {id}"))
            })?;
            let d = self.cfg.distance.between(features, &category.centroid);
            if d > self.cfg.epsilon {
                drifted.push(i);
            }
            by_category.entry(*id).or_default().push(i);
        }

        let mut max_pairwise: f64 = 0.0;
        let mut violations = 0;
        for indices in by_category.values() {
            let mut category_max: f64 = 0.0;
            for (pos, &i) in indices.iter().enumerate() {
                for &j in &indices[pos + 1..] {
                    let d = self.cfg.distance.between(&recent[i].0, &recent[j].0);
                    category_max = category_max.max(d);
                }
            }
            if category_max > self.cfg.delta {
                violations += 1;
            }
            max_pairwise = max_pairwise.max(category_max);
        }

        let mut reassigned = 0;
        if reassign {
            for &i in &drifted {
                let key = feature_key(&recent[i].0);
                self.memo.remove(&key);
                let fresh = self.assign(&recent[i].0)?;
                if fresh.id != recent[i].1 {
                    reassigned += 1;
                }
            }
        }

        Ok(AuditReport {
            examined: recent.len(),
            drift_fraction: if recent.is_empty() {
                0.0
            } else {
                drifted.len() as f64 / recent.len() as f64
            },
            max_pairwise_deviation: max_pairwise,
            consistency_violations: violations,
            reassigned,
            sampled_categories: by_category.len(),
        })
    }

    /// Assignment event log (diagnostics mode only).
    pub fn events(&self) -> &[AssignEvent] {
        &self.events
    }

    /// Member features folded into category `id` (diagnostics mode only).
    pub fn members(&self, id: CategoryId) -> Option<&[Vec<f64>]> {
        self.members.get(id).map(|m| m.as_slice())
    }

    fn spawn(&mut self, features: &[f64]) -> Result<CategoryId> {
        let id = self.categories.len();
        self.categories.push(Category {
            id,
            centroid: features.to_vec(),
            radius: self.cfg.epsilon,
            member_count: 0,
            belief: self.cfg.belief.fresh()?,
        });
        if self.cfg.track_diagnostics {
            self.members.push(Vec::new());
        }
        Ok(id)
    }

    fn record(&mut self, key: Vec<u64>, assignment: Assignment) {
        if self.cfg.track_diagnostics {
            self.events.push(AssignEvent { key, assignment });
        }
    }

    fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.is_empty() {
            return Err(CoreError::EmptyInput("state features"));
        }
        ensure_finite("state features", features)?;
        if let Some(first) = self.categories.first() {
            if features.len() != first.centroid.len() {
                return Err(CoreError::DimensionMismatch {
                    context: "partition features",
                    left: features.len(),
                    right: first.centroid.len(),
                });
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> PartitionSnapshot {
        PartitionSnapshot {
            epsilon: self.cfg.epsilon,
            delta: self.cfg.delta,
            max_categories: self.cfg.max_categories,
            overflow_count: self.overflow_count,
            categories: self.categories.clone(),
        }
    }
}

/// Bit-exact hash key for a feature vector.
fn feature_key(features: &[f64]) -> Vec<u64> {
    features.iter().map(|f| f.to_bits()).collect()
}

/// Default clustering setup for discrete-action agents.
pub fn default_discrete_config(n_actions: usize) -> PartitionConfig {
    PartitionConfig {
        epsilon: 0.25,
        delta: f64::INFINITY,
        max_categories: 256,
        feature_map: FeatureMapId::Identity,
        distance: DistanceId::Euclidean,
        belief: BeliefMode::Discrete {
            n_actions,
            laplace: 1.0,
        },
        track_diagnostics: false,
    }
}

//! Failure-contribution accounting and attribution weights.
//!
//! Accumulation is pure integer counting and therefore exact,
//! order-independent under merge, and trivially parallelizable. For
//! each evaluated run pair that fails end-to-end, every module active
//! in either run accrues one count per failed check and one count per
//! activation divergence. Finalization divides the counts by the
//! number of failures and normalizes across modules into weights that
//! sum to one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::StateId;
use crate::scalar::Scalar;
use crate::trace::{ModuleOutcome, PairEvaluation};

/// Campaign-level context carried into reports.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignMeta {
    pub campaign_id: String,
    pub seed: u64,
    pub dataset_size: u64,
    pub perturbations: u64,
}

/// Accumulates failure contributions across run pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct FCAccumulator {
    module_ids: Vec<StateId>,
    fc: Vec<u64>,
    activations: Vec<u64>,
    violations: Vec<u64>,
    phantom_events: Vec<u64>,
    relation_violations: BTreeMap<String, u64>,
    total_failures: u64,
    pairs: u64,
}

impl FCAccumulator {
    pub fn new(module_ids: Vec<StateId>) -> Self {
        let n = module_ids.len();
        FCAccumulator {
            module_ids,
            fc: vec![0; n],
            activations: vec![0; n],
            violations: vec![0; n],
            phantom_events: vec![0; n],
            relation_violations: BTreeMap::new(),
            total_failures: 0,
            pairs: 0,
        }
    }

    pub fn module_ids(&self) -> &[StateId] {
        &self.module_ids
    }

    pub fn fc(&self) -> &[u64] {
        &self.fc
    }

    pub fn activations(&self) -> &[u64] {
        &self.activations
    }

    pub fn violations(&self) -> &[u64] {
        &self.violations
    }

    pub fn phantom_events(&self) -> &[u64] {
        &self.phantom_events
    }

    pub fn relation_violations(&self) -> &BTreeMap<String, u64> {
        &self.relation_violations
    }

    pub fn total_failures(&self) -> u64 {
        self.total_failures
    }

    pub fn pairs(&self) -> u64 {
        self.pairs
    }

    /// Folds one evaluated run pair into the counters.
    pub fn record(&mut self, eval: &PairEvaluation) -> Result<()> {
        if eval.module_ids != self.module_ids {
            return Err(Error::Mismatch(
                "evaluation covers different modules than the accumulator".into(),
            ));
        }
        for outcome in &eval.outcomes {
            if let ModuleOutcome::Fail(reasons) = outcome {
                for relation in &reasons.failed_relations {
                    *self.relation_violations.entry(relation.clone()).or_insert(0) += 1;
                }
            }
        }
        self.accumulate(
            &eval.outcomes,
            &eval.phantom,
            &eval.activated_ref,
            &eval.activated_pert,
            eval.system_pass,
        );
        Ok(())
    }

    /// Core counting step over one run pair.
    ///
    /// `outcomes`, `phantom`, and the activation slices must cover the
    /// accumulator's modules in order. Contributions accrue only on
    /// end-to-end failures; activation and violation tallies accrue on
    /// every pair.
    pub fn accumulate(
        &mut self,
        outcomes: &[ModuleOutcome],
        phantom: &[bool],
        activated_ref: &[bool],
        activated_pert: &[bool],
        system_pass: bool,
    ) {
        let n = self.module_ids.len();
        assert!(
            outcomes.len() == n
                && phantom.len() == n
                && activated_ref.len() == n
                && activated_pert.len() == n,
            "accumulate was handed vectors for a different module count"
        );
        self.pairs += 1;
        for i in 0..n {
            if activated_ref[i] || activated_pert[i] {
                self.activations[i] += 1;
            }
            if outcomes[i].is_fail() {
                self.violations[i] += 1;
            }
        }
        if system_pass {
            return;
        }
        self.total_failures += 1;
        for i in 0..n {
            if !(activated_ref[i] || activated_pert[i]) {
                continue;
            }
            let check_failed = u64::from(outcomes[i].is_fail());
            let diverged = u64::from(phantom[i]);
            self.fc[i] += check_failed + diverged;
            self.phantom_events[i] += diverged;
        }
    }

    /// Adds another accumulator's counts into this one.
    ///
    /// Merging partial accumulators is equivalent to accumulating all
    /// their pairs into a single one, in any order.
    pub fn merge(&mut self, other: &FCAccumulator) -> Result<()> {
        if other.module_ids != self.module_ids {
            return Err(Error::Mismatch(
                "accumulators cover different module sets".into(),
            ));
        }
        for i in 0..self.module_ids.len() {
            self.fc[i] += other.fc[i];
            self.activations[i] += other.activations[i];
            self.violations[i] += other.violations[i];
            self.phantom_events[i] += other.phantom_events[i];
        }
        for (relation, count) in &other.relation_violations {
            *self.relation_violations.entry(relation.clone()).or_insert(0) += count;
        }
        self.total_failures += other.total_failures;
        self.pairs += other.pairs;
        Ok(())
    }

    /// Normalizes the counts into an attribution report.
    ///
    /// With zero end-to-end failures there is nothing to attribute:
    /// the report carries zero weights and is flagged `no_failures`.
    pub fn finalize<T: Scalar>(&self) -> Result<AttributionReport<T>> {
        let n = self.module_ids.len();
        let predicted_accuracy: Vec<Option<T>> = (0..n)
            .map(|i| {
                if self.activations[i] == 0 {
                    None
                } else {
                    let violation_rate = T::from_count(self.violations[i])
                        / T::from_count(self.activations[i]);
                    Some(T::one() - violation_rate)
                }
            })
            .collect();

        let (fc_normalized, alpha) = if self.total_failures == 0 {
            (vec![T::zero(); n], vec![T::zero(); n])
        } else {
            let raw_total: u64 = self.fc.iter().sum();
            if raw_total == 0 {
                return Err(Error::Inconsistent(format!(
                    "{} failures recorded but no module accrued contribution",
                    self.total_failures
                )));
            }
            let failures = T::from_count(self.total_failures);
            let fc_normalized: Vec<T> = self
                .fc
                .iter()
                .map(|&count| T::from_count(count) / failures.clone())
                .collect();
            let total_fc = fc_normalized
                .iter()
                .cloned()
                .fold(T::zero(), |acc, v| acc + v);
            let alpha =
                fc_normalized.iter().map(|v| v.clone() / total_fc.clone()).collect();
            (fc_normalized, alpha)
        };

        Ok(AttributionReport {
            module_ids: self.module_ids.clone(),
            alpha,
            fc_normalized,
            fc: self.fc.clone(),
            activations: self.activations.clone(),
            violations: self.violations.clone(),
            phantom_events: self.phantom_events.clone(),
            predicted_accuracy,
            relation_violations: self.relation_violations.clone(),
            total_failures: self.total_failures,
            pairs: self.pairs,
            no_failures: self.total_failures == 0,
            meta: CampaignMeta::default(),
        })
    }
}

/// Final attribution over a campaign's run pairs.
///
/// All vectors are indexed by module, in pipeline declaration order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributionReport<T = crate::Real> {
    pub module_ids: Vec<StateId>,
    /// Normalized attribution weights; they sum to 1 when any failure
    /// was observed and are all zero otherwise.
    pub alpha: Vec<T>,
    /// Contribution counts divided by the number of failures.
    pub fc_normalized: Vec<T>,
    /// Raw contribution counts.
    pub fc: Vec<u64>,
    /// Pairs in which the module was active in either run.
    pub activations: Vec<u64>,
    /// Pairs in which the module failed its checks.
    pub violations: Vec<u64>,
    /// Pairs in which the module's activation diverged between runs.
    pub phantom_events: Vec<u64>,
    /// Per-module `1 - violations/activations`; `None` when the module
    /// never activated.
    pub predicted_accuracy: Vec<Option<T>>,
    /// Failure tallies per relation id.
    pub relation_violations: BTreeMap<String, u64>,
    pub total_failures: u64,
    pub pairs: u64,
    pub no_failures: bool,
    pub meta: CampaignMeta,
}

impl<T: Scalar> AttributionReport<T> {
    /// Index and id of the module with the largest weight; ties go to
    /// the earliest module. `None` when no failures were attributed.
    pub fn argmax_alpha(&self) -> Option<(usize, &StateId)> {
        if self.no_failures {
            return None;
        }
        let mut best: Option<usize> = None;
        for (i, weight) in self.alpha.iter().enumerate() {
            match best {
                None => best = Some(i),
                Some(b) if *weight > self.alpha[b] => best = Some(i),
                _ => {}
            }
        }
        best.map(|i| (i, &self.module_ids[i]))
    }

    /// Index and id of the module with the lowest predicted accuracy,
    /// among modules that activated at all.
    pub fn worst_predicted_accuracy(&self) -> Option<(usize, &StateId)> {
        let mut best: Option<usize> = None;
        for (i, acc) in self.predicted_accuracy.iter().enumerate() {
            let Some(acc) = acc else { continue };
            match best {
                None => best = Some(i),
                Some(b) => {
                    let current = self.predicted_accuracy[b].as_ref().expect("set when chosen");
                    if *acc < *current {
                        best = Some(i);
                    }
                }
            }
        }
        best.map(|i| (i, &self.module_ids[i]))
    }

    pub fn alpha_of(&self, id: &StateId) -> Option<&T> {
        self.module_ids.iter().position(|m| m == id).map(|i| &self.alpha[i])
    }
}

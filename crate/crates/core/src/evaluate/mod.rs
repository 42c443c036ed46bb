//! Gold standards, precision/recall/F-measure, threshold sweeps, labeling
//! queues, per-property feature reports and genetic configuration learning.

mod features;
mod gold;
mod learn;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Pair, SameAsAssertion, Verdict};

pub use features::{feature_report, FeatureRow};
pub use gold::{append_label_csv, submit_label, GoldStandard, Label};
pub use learn::{learn_config, GaParams, Genome, LeafGene, LearnOutcome, PropertyChoices, SearchSpace};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("gold standard is empty")]
    EmptyGold,
    #[error("gold standard needs at least one same and one different pair")]
    DegenerateGold,
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
}

/// How accepted pairs without a gold label are counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum World {
    /// Unlabeled pairs are reported as unjudged and left out of the metrics.
    #[default]
    Open,
    /// Unlabeled pairs count as different. For fully labeled data.
    Closed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// Labeled-different pairs left unaccepted; closed world only.
    pub tn: Option<u64>,
    /// Accepted pairs outside the gold standard (open world).
    pub unjudged: u64,
    /// Accepted pairs labeled related; never counted in tp/fp/fn.
    pub related: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    /// Builds a report from raw counts; undefined ratios are 0.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            ..Self::default()
        }
    }
}

/// Counts verdicts of accepted pairs. Shared by [`score`] and the learner so
/// both compute identical numbers.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Tally {
    tp: u64,
    fp: u64,
    unjudged: u64,
    related: u64,
    different_accepted: u64,
}

impl Tally {
    pub(crate) fn add(&mut self, verdict: Option<Verdict>, world: World) {
        match verdict {
            Some(Verdict::Same) => self.tp += 1,
            Some(Verdict::Different) => {
                self.fp += 1;
                self.different_accepted += 1;
            }
            Some(Verdict::Related) => self.related += 1,
            Some(Verdict::Unlabeled) | None => match world {
                World::Open => self.unjudged += 1,
                World::Closed => self.fp += 1,
            },
        }
    }

    pub(crate) fn report(&self, gold_same: u64, gold_different: u64, world: World) -> EvalReport {
        let mut r = EvalReport::from_counts(self.tp, self.fp, gold_same - self.tp);
        r.unjudged = self.unjudged;
        r.related = self.related;
        if world == World::Closed {
            r.tn = Some(gold_different - self.different_accepted);
        }
        r
    }
}

/// Scores a set of accepted pairs against the gold standard.
pub fn score<'a, I>(accepted: I, gold: &GoldStandard, world: World) -> Result<EvalReport, EvalError>
where
    I: IntoIterator<Item = &'a Pair>,
{
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let distinct: BTreeSet<&Pair> = accepted.into_iter().collect();
    let mut tally = Tally::default();
    for pair in distinct {
        tally.add(gold.verdict(pair), world);
    }
    Ok(tally.report(
        gold.count(Verdict::Same) as u64,
        gold.count(Verdict::Different) as u64,
        world,
    ))
}

/// One report per threshold, accepting assertions with `sim >= threshold`.
pub fn threshold_sweep(
    scored: &[SameAsAssertion],
    gold: &GoldStandard,
    thresholds: &[f64],
    world: World,
) -> Result<Vec<(f64, EvalReport)>, EvalError> {
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(EvalError::Invalid(format!("threshold {t} outside [0, 1]")));
    }
    thresholds
        .iter()
        .map(|&t| {
            let accepted = scored.iter().filter(|a| a.sim >= t).map(|a| &a.pair);
            score(accepted, gold, world).map(|r| (t, r))
        })
        .collect()
}

/// Unlabeled assertions by descending similarity, ties by pair, at most
/// `limit` of them.
pub fn next_candidates_for_labeling<'a>(
    assertions: &'a [SameAsAssertion],
    gold: &GoldStandard,
    limit: usize,
) -> Vec<&'a SameAsAssertion> {
    let mut open: Vec<&SameAsAssertion> = assertions
        .iter()
        .filter(|a| gold.verdict(&a.pair).is_none())
        .collect();
    open.sort_by(|x, y| y.sim.total_cmp(&x.sim).then_with(|| x.pair.cmp(&y.pair)));
    open.dedup_by(|x, y| x.pair == y.pair);
    open.truncate(limit);
    open
}

/// Plain-text table with one row per labeled report.
pub fn render_table(rows: &[(String, EvalReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<width$}  {:>5}  {:>5}  {:>5}  {:>8}  {:>9}  {:>6}  {:>6}\n",
        "label", "tp", "fp", "fn", "unjudged", "precision", "recall", "f1"
    );
    for (label, r) in rows {
        let _ = writeln!(
            out,
            "{label:<width$}  {:>5}  {:>5}  {:>5}  {:>8}  {:>9.4}  {:>6.4}  {:>6.4}",
            r.tp, r.fp, r.fn_, r.unjudged, r.precision, r.recall, r.f1
        );
    }
    out
}

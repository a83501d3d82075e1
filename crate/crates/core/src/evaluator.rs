//! Link-based MWE scoring, first-token supersense scoring, and ablation runs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::corpus::{units_from_tags, Corpus, CorpusError, SemanticUnit, UNKNOWN_SENSE};
use crate::embeddings::EmbeddingTable;
use crate::features::{Ablation, FeatureConfig};
use crate::network::NetworkConfig;
use crate::predictor::{predict_corpus, DecodeConfig, PredictError};
use crate::trainer::{train, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} sentences, prediction has {pred}")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {index} ({sent_id:?}): gold has {gold} tokens, prediction has {pred}")]
    TokenCount {
        index: usize,
        sent_id: String,
        gold: usize,
        pred: usize,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

/// Consecutive-member pairs of every unit.
pub fn mwe_links(units: &[SemanticUnit]) -> Vec<(usize, usize)> {
    units
        .iter()
        .flat_map(|u| u.positions.windows(2).map(|w| (w[0], w[1])))
        .collect()
}

/// Raw counts behind a precision/recall pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub pred_correct: usize,
    pub pred_total: usize,
    pub gold_correct: usize,
    pub gold_total: usize,
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            pred_correct: self.pred_correct + o.pred_correct,
            pred_total: self.pred_total + o.pred_total,
            gold_correct: self.gold_correct + o.gold_correct,
            gold_total: self.gold_total + o.gold_total,
        }
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    // nothing to find and nothing claimed counts as perfect
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl Counts {
    pub fn prf(&self) -> Prf {
        Prf::new(
            ratio(self.pred_correct, self.pred_total),
            ratio(self.gold_correct, self.gold_total),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub mwe: Prf,
    pub supersense: Prf,
    pub combined: Prf,
    pub mwe_counts: Counts,
    pub supersense_counts: Counts,
    pub macro_f1: Option<f64>,
    pub per_sense_recall: BTreeMap<String, f64>,
}

fn unit_ids(units: &[SemanticUnit], n: usize) -> Vec<usize> {
    let mut id = vec![usize::MAX; n + 1];
    for (u, unit) in units.iter().enumerate() {
        for &p in &unit.positions {
            id[p] = u;
        }
    }
    id
}

fn link_hits(links: &[(usize, usize)], other_ids: &[usize]) -> usize {
    links
        .iter()
        .filter(|&&(a, b)| other_ids[a] != usize::MAX && other_ids[a] == other_ids[b])
        .count()
}

fn sense_pairs(units: &[SemanticUnit]) -> HashSet<(usize, &str)> {
    units
        .iter()
        .filter(|u| !u.sense.is_empty() && u.sense != UNKNOWN_SENSE)
        .map(|u| (u.first(), u.sense.as_str()))
        .collect()
}

#[derive(Default)]
struct Tally {
    mwe: Counts,
    sense: Counts,
}

/// Scores one sentence's predicted units against gold ones.
fn tally_sentence(
    gold: &[SemanticUnit],
    pred: &[SemanticUnit],
    n: usize,
    per_sense: &mut HashMap<String, (usize, usize)>,
) -> Tally {
    let (gold_ids, pred_ids) = (unit_ids(gold, n), unit_ids(pred, n));
    let (gold_links, pred_links) = (mwe_links(gold), mwe_links(pred));
    let mwe = Counts {
        pred_correct: link_hits(&pred_links, &gold_ids),
        pred_total: pred_links.len(),
        gold_correct: link_hits(&gold_links, &pred_ids),
        gold_total: gold_links.len(),
    };
    let (gp, pp) = (sense_pairs(gold), sense_pairs(pred));
    let hits = gp.intersection(&pp).count();
    for &(pos, sense) in &gp {
        let e = per_sense.entry(sense.to_string()).or_default();
        e.1 += 1;
        if pp.contains(&(pos, sense)) {
            e.0 += 1;
        }
    }
    let sense = Counts {
        pred_correct: hits,
        pred_total: pp.len(),
        gold_correct: hits,
        gold_total: gp.len(),
    };
    Tally { mwe, sense }
}

/// Source group of a sentence id: the part before the first `.`, `_`, `-`
/// or `:`. Ids without such a prefix have no group.
pub fn source_group(sent_id: &str) -> Option<&str> {
    let cut = sent_id.find(['.', '_', '-', ':'])?;
    (cut > 0).then(|| &sent_id[..cut])
}

pub fn score(gold: &Corpus, pred: &Corpus) -> Result<ScoreReport, EvalError> {
    if gold.sentences.len() != pred.sentences.len() {
        return Err(EvalError::SentenceCount {
            gold: gold.sentences.len(),
            pred: pred.sentences.len(),
        });
    }
    let mut total = Tally::default();
    let mut groups: BTreeMap<String, Counts> = BTreeMap::new();
    let mut grouped = true;
    let mut per_sense = HashMap::new();
    for (index, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::TokenCount {
                index,
                sent_id: g.sent_id.clone(),
                gold: g.len(),
                pred: p.len(),
            });
        }
        let t = tally_sentence(
            &units_from_tags(g)?,
            &units_from_tags(p)?,
            g.len(),
            &mut per_sense,
        );
        match source_group(&g.sent_id) {
            Some(src) => *groups.entry(src.to_string()).or_default() += t.mwe + t.sense,
            None => grouped = false,
        }
        total.mwe += t.mwe;
        total.sense += t.sense;
    }
    let macro_f1 = (grouped && !groups.is_empty())
        .then(|| groups.values().map(|c| c.prf().f1).sum::<f64>() / groups.len() as f64);
    Ok(ScoreReport {
        mwe: total.mwe.prf(),
        supersense: total.sense.prf(),
        combined: (total.mwe + total.sense).prf(),
        mwe_counts: total.mwe,
        supersense_counts: total.sense,
        macro_f1,
        per_sense_recall: per_sense
            .into_iter()
            .map(|(s, (hit, all))| (s, ratio(hit, all)))
            .collect(),
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

impl ScoreReport {
    /// Aligned text table: one row per measure with precision, recall and F1.
    pub fn table(&self) -> String {
        let mut out = format!("{:<12} {:>8} {:>8} {:>8}\n", "Type", "Prec", "Recall", "F1");
        for (name, m) in [
            ("MWE", self.mwe),
            ("Supersenses", self.supersense),
            ("Combined", self.combined),
        ] {
            let _ = writeln!(
                out,
                "{name:<12} {:>8.4} {:>8.4} {:>8}",
                m.precision,
                m.recall,
                pct(m.f1)
            );
        }
        let macro_f1 = self.macro_f1.map_or_else(|| "n/a".to_string(), pct);
        let _ = writeln!(out, "{:<12} {:>8} {:>8} {:>8}", "Macro", "", "", macro_f1);
        out
    }

    /// One `key=value` line per number.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        for (name, m, c) in [
            ("mwe", self.mwe, self.mwe_counts),
            ("supersense", self.supersense, self.supersense_counts),
            (
                "combined",
                self.combined,
                self.mwe_counts + self.supersense_counts,
            ),
        ] {
            let _ = writeln!(out, "{name}.precision={}", m.precision);
            let _ = writeln!(out, "{name}.recall={}", m.recall);
            let _ = writeln!(out, "{name}.f1={}", m.f1);
            let _ = writeln!(out, "{name}.pred_correct={}", c.pred_correct);
            let _ = writeln!(out, "{name}.pred_total={}", c.pred_total);
            let _ = writeln!(out, "{name}.gold_correct={}", c.gold_correct);
            let _ = writeln!(out, "{name}.gold_total={}", c.gold_total);
        }
        match self.macro_f1 {
            Some(m) => {
                let _ = writeln!(out, "macro.f1={m}");
            }
            None => out.push_str("macro.f1=n/a\n"),
        }
        for (sense, r) in &self.per_sense_recall {
            let _ = writeln!(out, "recall.{sense}={r}");
        }
        out
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub baseline: ScoreReport,
    pub rows: Vec<(Ablation, ScoreReport)>,
}

impl AblationReport {
    pub fn row(&self, a: Ablation) -> Option<&ScoreReport> {
        self.rows.iter().find(|(r, _)| *r == a).map(|(_, s)| s)
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>7} {:>7} {:>7}  {:>7} {:>7} {:>7}  {:>7} {:>7} {:>7}\n",
            "Ablated",
            "M.Prec",
            "M.Rec",
            "M.F1",
            "S.Prec",
            "S.Rec",
            "S.F1",
            "C.Prec",
            "C.Rec",
            "C.F1"
        );
        let rows = std::iter::once(("(none)", &self.baseline))
            .chain(self.rows.iter().map(|(a, s)| (a.label(), s)));
        for (label, s) in rows {
            let _ = writeln!(
                out,
                "{label:<12} {:>7.4} {:>7.4} {:>7}  {:>7.4} {:>7.4} {:>7}  {:>7.4} {:>7.4} {:>7}",
                s.mwe.precision,
                s.mwe.recall,
                pct(s.mwe.f1),
                s.supersense.precision,
                s.supersense.recall,
                pct(s.supersense.f1),
                s.combined.precision,
                s.combined.recall,
                pct(s.combined.f1),
            );
        }
        out
    }
}

/// Everything one ablation run needs besides the feature family to disable.
pub struct AblationSetup<'a> {
    pub train: &'a Corpus,
    pub test: &'a Corpus,
    pub table: &'a EmbeddingTable,
    pub network: &'a NetworkConfig,
    pub features: &'a FeatureConfig,
    pub train_config: &'a TrainConfig,
    pub decode: &'a DecodeConfig,
}

/// Trains on `train` and scores on `test` with `ablation` applied.
pub fn run_one(
    setup: &AblationSetup<'_>,
    ablation: Option<Ablation>,
) -> Result<ScoreReport, EvalError> {
    let features = FeatureConfig {
        ablation,
        ..setup.features.clone()
    };
    let outcome = train::<f32>(
        setup.train,
        setup.table,
        setup.network,
        &features,
        setup.train_config,
        |_| {},
    )?;
    let pred = predict_corpus(&outcome.model, setup.test, setup.table, setup.decode)?;
    score(setup.test, &pred)
}

/// Baseline plus one run per feature family, in table order.
pub fn ablate(setup: &AblationSetup<'_>) -> Result<AblationReport, EvalError> {
    let baseline = run_one(setup, None)?;
    let rows = Ablation::ALL
        .iter()
        .map(|&a| Ok((a, run_one(setup, Some(a))?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(AblationReport { baseline, rows })
}

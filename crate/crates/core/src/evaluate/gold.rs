use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{canonical_pair, EntityId, Pair, Verdict};

/// One labeling event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Label {
    #[serde(flatten)]
    pub pair: Pair,
    pub verdict: Verdict,
    pub labeler: String,
    /// Unix seconds.
    pub timestamp: i64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
struct LabelRow {
    id_a: String,
    id_b: String,
    verdict: Verdict,
    labeler: String,
    timestamp: i64,
}

/// Labeled pairs with full history. The current verdict of a pair is its
/// latest label; the version is the number of labels ever recorded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldStandard {
    history: Vec<Label>,
    current: BTreeMap<Pair, usize>,
}

impl GoldStandard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> usize {
        self.history.len()
    }

    /// Number of pairs with a current verdict.
    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn history(&self) -> &[Label] {
        &self.history
    }

    pub fn verdict(&self, pair: &Pair) -> Option<Verdict> {
        self.current.get(pair).map(|&i| self.history[i].verdict)
    }

    pub fn label(&self, pair: &Pair) -> Option<&Label> {
        self.current.get(pair).map(|&i| &self.history[i])
    }

    /// Current labels in canonical pair order.
    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.current.values().map(|&i| &self.history[i])
    }

    pub fn pairs_with(&self, verdict: Verdict) -> impl Iterator<Item = &Pair> {
        self.labels()
            .filter(move |l| l.verdict == verdict)
            .map(|l| &l.pair)
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.pairs_with(verdict).count()
    }

    /// Records a verdict in place. Relabeling supersedes the previous verdict;
    /// the old label stays in the history.
    pub fn record(
        &mut self,
        a: EntityId,
        b: EntityId,
        verdict: Verdict,
        labeler: &str,
        timestamp: i64,
    ) -> Result<&Label, EvalError> {
        if verdict == Verdict::Unlabeled {
            return Err(EvalError::Invalid("a label needs a verdict".into()));
        }
        let pair = canonical_pair(a, b).map_err(|e| EvalError::Invalid(e.to_string()))?;
        self.history.push(Label {
            pair: pair.clone(),
            verdict,
            labeler: labeler.to_string(),
            timestamp,
        });
        self.current.insert(pair, self.history.len() - 1);
        Ok(self.history.last().expect("just pushed"))
    }

    /// Reads the history CSV (`idA,idB,verdict,labeler,timestamp`) and
    /// replays it.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, EvalError> {
        let mut reader = ::csv::Reader::from_reader(input);
        let mut gold = Self::new();
        for (n, row) in reader.deserialize::<LabelRow>().enumerate() {
            let row = row.map_err(|e| EvalError::Invalid(format!("gold row {}: {e}", n + 2)))?;
            let id = |s: String| {
                EntityId::new(s).map_err(|e| EvalError::Invalid(format!("gold row {}: {e}", n + 2)))
            };
            gold.record(id(row.id_a)?, id(row.id_b)?, row.verdict, &row.labeler, row.timestamp)?;
        }
        Ok(gold)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut writer = ::csv::Writer::from_writer(out);
        for label in &self.history {
            write_label(&mut writer, label)?;
        }
        writer.flush().map_err(|e| EvalError::Io(e.to_string()))
    }
}

/// Appends one label row (no header) to an open gold file.
pub fn append_label_csv<W: Write>(out: W, label: &Label, with_header: bool) -> Result<(), EvalError> {
    let mut writer = ::csv::WriterBuilder::new()
        .has_headers(with_header)
        .from_writer(out);
    write_label(&mut writer, label)?;
    writer.flush().map_err(|e| EvalError::Io(e.to_string()))
}

fn write_label<W: Write>(writer: &mut ::csv::Writer<W>, label: &Label) -> Result<(), EvalError> {
    writer
        .serialize(LabelRow {
            id_a: label.pair.a().to_string(),
            id_b: label.pair.b().to_string(),
            verdict: label.verdict,
            labeler: label.labeler.clone(),
            timestamp: label.timestamp,
        })
        .map_err(|e| EvalError::Io(e.to_string()))
}

/// Functional form of [`GoldStandard::record`]: returns the next version and
/// leaves `gold` untouched.
pub fn submit_label(
    gold: &GoldStandard,
    a: EntityId,
    b: EntityId,
    verdict: Verdict,
    labeler: &str,
    timestamp: i64,
) -> Result<GoldStandard, EvalError> {
    let mut next = gold.clone();
    next.record(a, b, verdict, labeler, timestamp)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn pair(a: &str, b: &str) -> Pair {
        canonical_pair(id(a), id(b)).unwrap()
    }

    #[test]
    fn label_and_relabel() {
        let g0 = GoldStandard::new();
        let g1 = submit_label(&g0, id("a"), id("b"), Verdict::Same, "ann", 1).unwrap();
        assert_eq!(g1.verdict(&pair("a", "b")), Some(Verdict::Same));
        assert!(g0.is_empty());
        let g2 = submit_label(&g1, id("a"), id("b"), Verdict::Different, "ann", 2).unwrap();
        assert_eq!(g2.verdict(&pair("a", "b")), Some(Verdict::Different));
        assert_eq!(g2.history().len(), 2);
        assert_eq!(g2.len(), 1);
    }

    #[test]
    fn reversed_pair_is_canonical() {
        let g = submit_label(&GoldStandard::new(), id("b"), id("a"), Verdict::Same, "x", 0).unwrap();
        assert_eq!(g.labels().next().unwrap().pair.a().as_str(), "a");
    }

    #[test]
    fn malformed_labels_rejected() {
        let g = GoldStandard::new();
        assert!(submit_label(&g, id("a"), id("a"), Verdict::Same, "x", 0).is_err());
        assert!(submit_label(&g, id("a"), id("b"), Verdict::Unlabeled, "x", 0).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_history() {
        let mut g = GoldStandard::new();
        g.record(id("a"), id("b"), Verdict::Same, "ann", 10).unwrap();
        g.record(id("c"), id("d"), Verdict::Related, "bob", 11).unwrap();
        g.record(id("b"), id("a"), Verdict::Different, "bob", 12).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("idA,idB,verdict,labeler,timestamp\na,b,same,ann,10\n"));
        assert_eq!(GoldStandard::read_csv(buf.as_slice()).unwrap(), g);

        let mut appended = buf.clone();
        let extra = Label {
            pair: pair("e", "f"),
            verdict: Verdict::Same,
            labeler: "cli".into(),
            timestamp: 13,
        };
        append_label_csv(&mut appended, &extra, false).unwrap();
        let back = GoldStandard::read_csv(appended.as_slice()).unwrap();
        assert_eq!(back.version(), 4);
        assert_eq!(back.verdict(&pair("e", "f")), Some(Verdict::Same));
    }
}

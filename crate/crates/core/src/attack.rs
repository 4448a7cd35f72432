//! Label-only membership tests: the neighborhood misclassification score and
//! the Gap baseline.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::datagen::ChallengePoint;
use crate::error::{Error, Result};
use crate::metrics::fmt as fmt_f64;
use crate::neighborhood::NeighborhoodSet;
use crate::nncore::Classifier;

/// Black-box access that reveals only the predicted label.
pub trait LabelOracle: Sync {
    fn query_label(&self, x: &[f32]) -> Result<usize>;
}

/// Wraps a model so that callers can see predicted labels and nothing else.
/// Every query is counted.
pub struct LabelOnly<'a, M> {
    model: &'a M,
    queries: AtomicUsize,
}

impl<'a, M: Classifier> LabelOnly<'a, M> {
    pub fn new(model: &'a M) -> Self {
        Self {
            model,
            queries: AtomicUsize::new(0),
        }
    }

    pub fn queries(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }
}

impl<M: Classifier> LabelOracle for LabelOnly<'_, M> {
    fn query_label(&self, x: &[f32]) -> Result<usize> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(self.model.predict(x)?.label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Chameleon,
    Gap,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Chameleon => "chameleon",
            AttackKind::Gap => "gap",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chameleon" => Ok(AttackKind::Chameleon),
            "gap" => Ok(AttackKind::Gap),
            other => Err(Error::InvalidInput(format!("unknown attack `{other}`"))),
        }
    }
}

/// One (target model, challenge point) observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub attack: AttackKind,
    pub challenge_index: usize,
    pub model_id: usize,
    /// Ground-truth membership.
    pub truth: bool,
    /// Membership score in [0, 1]; higher means member.
    pub score: f64,
}

/// Fraction of the challenge point and its neighbors that the target mislabels.
pub fn misclassification_score<O: LabelOracle + ?Sized>(
    oracle: &O,
    x: &[f32],
    y: usize,
    neighborhood: &NeighborhoodSet,
) -> Result<f64> {
    let mut wrong = usize::from(oracle.query_label(x)? != y);
    for n in &neighborhood.members {
        wrong += usize::from(oracle.query_label(&n.x)? != y);
    }
    Ok(wrong as f64 / (neighborhood.len() + 1) as f64)
}

/// `1 - misclassification_score`; issues `|neighborhood| + 1` queries.
pub fn chameleon_score<O: LabelOracle + ?Sized>(
    oracle: &O,
    challenge: &ChallengePoint,
    model_id: usize,
    truth: bool,
    neighborhood: &NeighborhoodSet,
) -> Result<ScoreRecord> {
    let f = misclassification_score(oracle, &challenge.x, challenge.y, neighborhood)?;
    Ok(ScoreRecord {
        attack: AttackKind::Chameleon,
        challenge_index: challenge.index,
        model_id,
        truth,
        score: 1.0 - f,
    })
}

/// 1 if the target labels the challenge point correctly, else 0.
pub fn gap_score<O: LabelOracle + ?Sized>(
    oracle: &O,
    challenge: &ChallengePoint,
    model_id: usize,
    truth: bool,
) -> Result<ScoreRecord> {
    let correct = oracle.query_label(&challenge.x)? == challenge.y;
    Ok(ScoreRecord {
        attack: AttackKind::Gap,
        challenge_index: challenge.index,
        model_id,
        truth,
        score: if correct { 1.0 } else { 0.0 },
    })
}

/// Member and non-member scores of one attack.
pub fn split_by_truth(records: &[ScoreRecord], attack: AttackKind) -> (Vec<f64>, Vec<f64>) {
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for r in records.iter().filter(|r| r.attack == attack) {
        if r.truth {
            inside.push(r.score);
        } else {
            outside.push(r.score);
        }
    }
    (inside, outside)
}

pub fn write_scores_csv<W: Write>(out: W, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["attack", "challenge_index", "model_id", "truth", "score"])?;
    for r in records {
        w.write_record([
            r.attack.name().to_string(),
            r.challenge_index.to_string(),
            r.model_id.to_string(),
            u8::from(r.truth).to_string(),
            fmt_f64(r.score),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default().trim();
        let bad = |what: &str| Error::InvalidInput(format!("score row {}: bad {what}", line + 1));
        let score: f64 = field(4).parse().map_err(|_| bad("score"))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(bad("score (outside [0, 1])"));
        }
        out.push(ScoreRecord {
            attack: field(0).parse()?,
            challenge_index: field(1).parse().map_err(|_| bad("challenge_index"))?,
            model_id: field(2).parse().map_err(|_| bad("model_id"))?,
            truth: match field(3) {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("truth")),
            },
            score,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::NeighborCandidate;
    use crate::nncore::Prediction;

    /// Labels a point `1` when its first feature is positive.
    struct Sign;

    impl Classifier for Sign {
        fn predict(&self, x: &[f32]) -> Result<Prediction> {
            let label = usize::from(x[0] > 0.0);
            let mut confidences = vec![0.0, 0.0];
            confidences[label] = 1.0;
            Ok(Prediction { label, confidences })
        }
    }

    fn hood(values: &[f32]) -> NeighborhoodSet {
        let mut set = NeighborhoodSet::empty();
        set.members = values
            .iter()
            .map(|&v| NeighborCandidate { x: vec![v], label: 1 })
            .collect();
        set
    }

    fn point(v: f32) -> ChallengePoint {
        ChallengePoint { index: 3, x: vec![v], y: 1 }
    }

    #[test]
    fn all_correct_scores_one() {
        let oracle = LabelOnly::new(&Sign);
        let r = chameleon_score(&oracle, &point(1.0), 0, true, &hood(&[0.5, 2.0])).unwrap();
        assert_eq!(r.score, 1.0);
        assert_eq!(oracle.queries(), 3);
    }

    #[test]
    fn all_wrong_scores_zero() {
        let oracle = LabelOnly::new(&Sign);
        let f = misclassification_score(&oracle, &[-1.0], 1, &hood(&[-0.5, -2.0])).unwrap();
        assert_eq!(f, 1.0);
        let r = chameleon_score(&oracle, &point(-1.0), 0, false, &hood(&[-0.5])).unwrap();
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn sixteen_of_sixty_five() {
        let mut values = vec![1.0f32; 64];
        values[..16].iter_mut().for_each(|v| *v = -1.0);
        let oracle = LabelOnly::new(&Sign);
        let f = misclassification_score(&oracle, &[1.0], 1, &hood(&values)).unwrap();
        assert_eq!(f, 16.0 / 65.0);
        assert_eq!(oracle.queries(), 65);
        let r = chameleon_score(&oracle, &point(1.0), 0, true, &hood(&values)).unwrap();
        assert_eq!(r.score + f, 1.0);
    }

    #[test]
    fn score_ignores_neighbor_order() {
        let oracle = LabelOnly::new(&Sign);
        let a = misclassification_score(&oracle, &[1.0], 1, &hood(&[-1.0, 2.0, -3.0, 0.5])).unwrap();
        let b = misclassification_score(&oracle, &[1.0], 1, &hood(&[0.5, -3.0, 2.0, -1.0])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gap_follows_correctness() {
        let oracle = LabelOnly::new(&Sign);
        assert_eq!(gap_score(&oracle, &point(1.0), 0, true).unwrap().score, 1.0);
        assert_eq!(gap_score(&oracle, &point(-1.0), 0, true).unwrap().score, 0.0);
        assert_eq!(oracle.queries(), 2);
    }

    #[test]
    fn score_csv_round_trip() {
        let records = vec![
            ScoreRecord { attack: AttackKind::Chameleon, challenge_index: 4, model_id: 1, truth: true, score: 0.75 },
            ScoreRecord { attack: AttackKind::Gap, challenge_index: 9, model_id: 0, truth: false, score: 0.0 },
        ];
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &records).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("attack,challenge_index,model_id,truth,score\n"));
        assert_eq!(read_scores_csv(buf.as_slice()).unwrap(), records);
        let (i, o) = split_by_truth(&records, AttackKind::Chameleon);
        assert_eq!((i, o), (vec![0.75], vec![]));
    }
}

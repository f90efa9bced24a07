//! Weighted late fusion (Eq. 10) and the exhaustive weight-grid search.

use super::PartPredictions;
use crate::error::{Error, Result};

pub const WEIGHT_MIN: u32 = 1;
pub const WEIGHT_MAX: u32 = 5;

/// Integer fusion weights in part order (HS, LL, RL, LH, RH).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FusionWeights(pub [u32; 5]);

impl FusionWeights {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|&w| !(WEIGHT_MIN..=WEIGHT_MAX).contains(&w)) {
            return Err(Error::InvalidArgument(format!(
                "fusion weights must lie in {{{WEIGHT_MIN},...,{WEIGHT_MAX}}}, got {self}"
            )));
        }
        Ok(())
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: std::result::Result<Vec<u32>, _> =
            s.split(',').map(|t| t.trim().parse::<u32>()).collect();
        let parts = parts
            .map_err(|_| Error::InvalidArgument(format!("malformed weight list {s:?}")))?;
        let arr: [u32; 5] = parts.try_into().map_err(|v: Vec<u32>| {
            Error::InvalidArgument(format!("expected 5 weights, got {}", v.len()))
        })?;
        let w = FusionWeights(arr);
        w.validate()?;
        Ok(w)
    }

    /// The full {1..5}^5 grid in lexicographic order.
    pub fn grid() -> Vec<FusionWeights> {
        let mut out = Vec::with_capacity(5usize.pow(5));
        for a in WEIGHT_MIN..=WEIGHT_MAX {
            for b in WEIGHT_MIN..=WEIGHT_MAX {
                for c in WEIGHT_MIN..=WEIGHT_MAX {
                    for d in WEIGHT_MIN..=WEIGHT_MAX {
                        for e in WEIGHT_MIN..=WEIGHT_MAX {
                            out.push(FusionWeights([a, b, c, d, e]));
                        }
                    }
                }
            }
        }
        out
    }
}

impl std::fmt::Display for FusionWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [a, b, c, d, e] = self.0;
        write!(f, "{a},{b},{c},{d},{e}")
    }
}

/// Fused scores and predicted labels over the shared sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedResult {
    pub weights: FusionWeights,
    pub ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    pub predicted: Vec<usize>,
    pub labels: Vec<usize>,
}

impl FusedResult {
    pub fn accuracy(&self) -> f64 {
        super::accuracy(&self.predicted, &self.labels)
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

fn check_parts(parts: &[PartPredictions; 5]) -> Result<()> {
    for p in parts {
        p.validate()?;
    }
    for p in &parts[1..] {
        parts[0].check_aligned(p)?;
    }
    if parts.iter().any(|p| p.n_classes() != parts[0].n_classes()) {
        return Err(Error::Shape("fusion inputs disagree on class count".into()));
    }
    Ok(())
}

/// P_c = sum_i w_i * p_{i,c}; predicted label = argmax_c P_c.
pub fn fuse(weights: FusionWeights, parts: &[PartPredictions; 5]) -> Result<FusedResult> {
    weights.validate()?;
    check_parts(parts)?;
    let n = parts[0].ids.len();
    let c = parts[0].n_classes();
    let mut scores = vec![vec![0.0; c]; n];
    for (part, &w) in parts.iter().zip(&weights.0) {
        for (row, p) in scores.iter_mut().zip(&part.probs) {
            for (s, &v) in row.iter_mut().zip(p) {
                *s += w as f64 * v;
            }
        }
    }
    let predicted = scores.iter().map(|row| argmax(row)).collect();
    Ok(FusedResult {
        weights,
        ids: parts[0].ids.clone(),
        scores,
        predicted,
        labels: parts[0].labels.clone(),
    })
}

/// Exhaustive search over the weight grid; returns the best weights and
/// accuracy, ties broken by the lexicographically smallest weight vector.
pub fn search_weights(parts: &[PartPredictions; 5]) -> Result<(FusionWeights, f64)> {
    check_parts(parts)?;
    let mut best: Option<(FusionWeights, f64)> = None;
    for w in FusionWeights::grid() {
        let acc = fuse(w, parts)?.accuracy();
        match best {
            // Strict improvement only: grid order is lexicographic, so the
            // first maximum encountered is the tie-break winner.
            Some((_, b)) if acc <= b => {}
            _ => best = Some((w, acc)),
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty weight grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::PartLabel;

    fn preds(part: PartLabel, rows: Vec<Vec<f64>>, labels: Vec<usize>) -> PartPredictions {
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        PartPredictions { part, ids, probs: rows, labels }
    }

    fn five(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> [PartPredictions; 5] {
        PartLabel::PARTS.map(|p| preds(p, rows.clone(), labels.clone()))
    }

    #[test]
    fn unanimous_argmax_survives_any_weights() {
        let parts = five(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1]], vec![0, 1]);
        for w in [[1, 1, 1, 1, 1], [5, 1, 3, 2, 4]] {
            let fused = fuse(FusionWeights(w), &parts).unwrap();
            assert_eq!(fused.predicted, vec![0, 1]);
        }
    }

    #[test]
    fn scaling_weights_preserves_labels() {
        let mut parts = five(vec![vec![0.6, 0.4], vec![0.3, 0.7]], vec![0, 1]);
        parts[2] = preds(PartLabel::Rl, vec![vec![0.2, 0.8], vec![0.9, 0.1]], vec![0, 1]);
        let a = fuse(FusionWeights([1, 2, 1, 2, 1]), &parts).unwrap();
        let b = fuse(FusionWeights([2, 4, 2, 4, 2]), &parts).unwrap();
        assert_eq!(a.predicted, b.predicted);
    }

    #[test]
    fn misaligned_parts_rejected() {
        let mut parts = five(vec![vec![1.0, 0.0]], vec![0]);
        parts[1].ids[0] = "other".into();
        assert!(fuse(FusionWeights([1; 5]), &parts).is_err());
    }

    #[test]
    fn grid_has_3125_entries_and_search_beats_all_ones() {
        assert_eq!(FusionWeights::grid().len(), 3125);
        let mut parts = five(vec![vec![0.6, 0.4], vec![0.6, 0.4]], vec![0, 1]);
        // RH alone classifies sample 1 correctly; searching must exploit it.
        parts[4] = preds(PartLabel::Rh, vec![vec![0.55, 0.45], vec![0.05, 0.95]], vec![0, 1]);
        let (w, best) = search_weights(&parts).unwrap();
        let ones = fuse(FusionWeights([1; 5]), &parts).unwrap().accuracy();
        assert!(best >= ones);
        assert_eq!(best, fuse(w, &parts).unwrap().accuracy());
    }

    #[test]
    fn tie_break_is_lexicographic() {
        // All parts identical and always right: every weight vector gives
        // accuracy 1, so the all-ones vector must win.
        let parts = five(vec![vec![0.9, 0.1], vec![0.2, 0.8]], vec![0, 1]);
        let (w, acc) = search_weights(&parts).unwrap();
        assert_eq!(w, FusionWeights([1, 1, 1, 1, 1]));
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn weight_parsing_round_trips() {
        let w = FusionWeights::parse("2,3,4,4,5").unwrap();
        assert_eq!(w, FusionWeights([2, 3, 4, 4, 5]));
        assert_eq!(w.to_string(), "2,3,4,4,5");
        assert!(FusionWeights::parse("0,1,1,1,1").is_err());
        assert!(FusionWeights::parse("1,2,3").is_err());
    }
}

//! Structure words: the finite region sequences a trajectory can visit.
//!
//! A word over {1, H, 2} such as `1-H-2` describes a candidate trajectory
//! shape: an arc in region 1, an arc along the interface, an arc in
//! region 2. The solver enumerates all admissible words up to a length cap
//! and optimizes each one separately; the regional value is the minimum over
//! words. The length cap exists because the search space is otherwise
//! countably infinite (rapid-switching words), which is out of scope.
//!
//! Grammar: consecutive labels must differ (an arc ends where the dynamics
//! change); direct 1-2 transitions are allowed (transversal crossings) along
//! with 1-H / H-2 junctions; the first and last labels must match the region
//! classification of the problem's boundary points.

use crate::error::{Error, Result};
use crate::geometry::RegionLabel;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// An admissible-by-shape sequence of region labels (length >= 1, no
/// consecutive repeats). Boundary compatibility is checked separately by
/// [`StructureWord::validate`], which needs the endpoint classifications.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StructureWord {
    labels: Vec<RegionLabel>,
}

impl StructureWord {
    /// Build a word, enforcing the shape invariants (non-empty, no
    /// consecutive repeats, every H arc bracketed by region arcs or
    /// terminal).
    pub fn new(labels: Vec<RegionLabel>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidWord {
                word: String::from("(empty)"),
                reason: String::from("a structure word needs at least one arc"),
            });
        }
        let word = StructureWord { labels };
        if let Some(reason) = word.shape_violation() {
            return Err(Error::InvalidWord { word: word.to_string(), reason });
        }
        Ok(word)
    }

    pub fn labels(&self) -> &[RegionLabel] {
        &self.labels
    }

    /// Number of arcs K.
    pub fn arc_count(&self) -> usize {
        self.labels.len()
    }

    pub fn first(&self) -> RegionLabel {
        self.labels[0]
    }

    pub fn last(&self) -> RegionLabel {
        *self.labels.last().expect("non-empty by construction")
    }

    /// Number of H arcs in the word.
    pub fn interface_arc_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == RegionLabel::H).count()
    }

    fn shape_violation(&self) -> Option<String> {
        for (i, pair) in self.labels.windows(2).enumerate() {
            if pair[0] == pair[1] {
                return Some(format!("consecutive repeat at index {i}"));
            }
        }
        // With consecutive repeats excluded, an H arc can only neighbor
        // region arcs; the explicit check stays as a guard for future
        // grammar changes.
        for (i, &l) in self.labels.iter().enumerate() {
            if l == RegionLabel::H {
                let prev_ok = i == 0 || self.labels[i - 1] != RegionLabel::H;
                let next_ok = i + 1 == self.labels.len() || self.labels[i + 1] != RegionLabel::H;
                if !prev_ok || !next_ok {
                    return Some(format!("H arc at index {i} adjacent to another H arc"));
                }
            }
        }
        None
    }

    /// Full admissibility check against the boundary classifications:
    /// `Ok(())` or the first violation, described.
    ///
    /// `start` / `end` are the region labels of the problem's x0 and xf
    /// (from [`crate::geometry::Interface::classify`]).
    pub fn validate(&self, start: RegionLabel, end: RegionLabel) -> std::result::Result<(), String> {
        if let Some(v) = self.shape_violation() {
            return Err(v);
        }
        if self.first() != start {
            return Err(format!(
                "first label mismatch: word starts in {} but x0 classifies as {}",
                self.first(),
                start
            ));
        }
        if self.last() != end {
            return Err(format!(
                "last label mismatch: word ends in {} but xf classifies as {}",
                self.last(),
                end
            ));
        }
        Ok(())
    }

    /// [`StructureWord::validate`] lifted into the crate error type.
    pub fn validate_for(&self, start: RegionLabel, end: RegionLabel) -> Result<()> {
        self.validate(start, end).map_err(|reason| Error::InvalidWord {
            word: self.to_string(),
            reason,
        })
    }
}

impl fmt::Display for StructureWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for StructureWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut labels = Vec::new();
        for part in s.split('-') {
            let label = match part.trim() {
                "1" => RegionLabel::R1,
                "2" => RegionLabel::R2,
                "H" | "h" => RegionLabel::H,
                other => {
                    return Err(Error::InvalidWord {
                        word: s.to_string(),
                        reason: format!("unknown arc label {other:?} (expected 1, H, or 2)"),
                    })
                }
            };
            labels.push(label);
        }
        StructureWord::new(labels)
    }
}

impl Serialize for StructureWord {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StructureWord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// All admissible words from `start` to `end` with at most `max_arcs` arcs,
/// in deterministic order: shorter words first, ties in lexicographic label
/// order with 1 < H < 2.
pub fn enumerate(start: RegionLabel, end: RegionLabel, max_arcs: usize) -> Vec<StructureWord> {
    let mut out = Vec::new();
    let mut prefix = vec![start];
    for len in 1..=max_arcs.max(1) {
        extend(&mut prefix, len, end, &mut out);
    }
    out
}

fn extend(prefix: &mut Vec<RegionLabel>, target_len: usize, end: RegionLabel, out: &mut Vec<StructureWord>) {
    if prefix.len() == target_len {
        if *prefix.last().expect("non-empty") == end {
            out.push(StructureWord { labels: prefix.clone() });
        }
        return;
    }
    let last = *prefix.last().expect("non-empty");
    for next in RegionLabel::ALL {
        if next == last {
            continue;
        }
        prefix.push(next);
        extend(prefix, target_len, end, out);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use RegionLabel::{H, R1, R2};

    fn word(labels: &[RegionLabel]) -> StructureWord {
        StructureWord::new(labels.to_vec()).unwrap()
    }

    #[test]
    fn enumerate_r1_r2_up_to_three_arcs() {
        let words = enumerate(R1, R2, 3);
        assert_eq!(words, vec![word(&[R1, R2]), word(&[R1, H, R2])]);
    }

    #[test]
    fn enumerate_r1_r2_up_to_four_arcs() {
        let words = enumerate(R1, R2, 4);
        assert_eq!(words.len(), 5);
        assert_eq!(
            words,
            vec![
                word(&[R1, R2]),
                word(&[R1, H, R2]),
                word(&[R1, H, R1, R2]),
                word(&[R1, R2, R1, R2]),
                word(&[R1, R2, H, R2]),
            ]
        );
    }

    #[test]
    fn enumerate_same_region_single_arc() {
        assert_eq!(enumerate(R1, R1, 1), vec![word(&[R1])]);
    }

    #[test]
    fn enumerate_is_prefix_monotone() {
        for k in 1..=6 {
            let shorter = enumerate(R1, R2, k);
            let longer = enumerate(R1, R2, k + 1);
            assert!(longer.len() >= shorter.len());
            assert_eq!(&longer[..shorter.len()], &shorter[..]);
            let mut dedup = longer.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), longer.len(), "duplicates at k={k}");
            for w in &longer {
                assert!(w.validate(R1, R2).is_ok());
            }
        }
    }

    #[test]
    fn enumerate_matches_brute_force_filter() {
        // Generate every label sequence of length <= 5 and keep the valid
        // ones; enumerate must produce exactly that set.
        let mut brute = Vec::new();
        for len in 1..=5usize {
            let mut idx = vec![0usize; len];
            loop {
                let labels: Vec<RegionLabel> = idx.iter().map(|&i| RegionLabel::ALL[i]).collect();
                if let Ok(w) = StructureWord::new(labels) {
                    if w.validate(H, R1).is_ok() {
                        brute.push(w);
                    }
                }
                let mut j = len;
                loop {
                    if j == 0 {
                        break;
                    }
                    j -= 1;
                    idx[j] += 1;
                    if idx[j] < RegionLabel::ALL.len() {
                        break;
                    }
                    idx[j] = 0;
                }
                if idx.iter().all(|&i| i == 0) {
                    break;
                }
            }
        }
        brute.sort_by(|a, b| {
            a.arc_count().cmp(&b.arc_count()).then_with(|| a.labels.cmp(&b.labels))
        });
        assert_eq!(enumerate(H, R1, 5), brute);
    }

    #[test]
    fn validate_reports_first_violation() {
        let bad = StructureWord::new(vec![R1, R1, R2]);
        assert!(matches!(&bad, Err(Error::InvalidWord { reason, .. })
            if reason == "consecutive repeat at index 0"));

        let w = word(&[H, R1]);
        let err = w.validate(R1, R1).unwrap_err();
        assert!(err.starts_with("first label mismatch"), "{err}");

        let w = word(&[R1, H]);
        let err = w.validate(R1, R2).unwrap_err();
        assert!(err.starts_with("last label mismatch"), "{err}");

        assert!(word(&[R1, H, R2]).validate(R1, R2).is_ok());
    }

    #[test]
    fn word_roundtrips_through_display() {
        for w in enumerate(R1, R2, 5) {
            let s = w.to_string();
            let back: StructureWord = s.parse().unwrap();
            assert_eq!(back, w);
        }
        assert_eq!(word(&[R1, H, R2]).to_string(), "1-H-2");
        assert!("1-X-2".parse::<StructureWord>().is_err());
        assert!("".parse::<StructureWord>().is_err());
    }

    #[test]
    fn word_serializes_as_hyphenated_string() {
        let w = word(&[R1, H, R2]);
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, "\"1-H-2\"");
        let back: StructureWord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
    }
}

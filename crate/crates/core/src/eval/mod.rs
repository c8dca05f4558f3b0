//! Decoding, phone folding, alignment scoring and curve export.

mod curves;

pub use curves::{emit_curves, format_history_csv, parse_history_csv, read_curves, HISTORY_HEADER};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::phones::{PhoneInventory, PhoneSequence};

/// Best-path decoding: frame argmax, collapse repeats, drop blanks.
///
/// The blank is the last column. Ties pick the lowest id.
pub fn ctc_greedy_decode(logits: &Matrix) -> PhoneSequence {
    let blank = logits.cols().saturating_sub(1);
    let mut out = Vec::new();
    let mut prev = None;
    for row in logits.iter_rows() {
        let mut best = 0;
        for (p, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = p;
            }
        }
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    PhoneSequence::new(out)
}

/// Total symbol map; `None` images are deleted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneMapping {
    table: BTreeMap<String, Option<String>>,
}

const LEE_HON: &str = include_str!("../../assets/timit_61_to_39.map");

impl PhoneMapping {
    /// Parses `src dst` lines; `dst` of `-` deletes. Blank lines and lines
    /// starting with `#` are skipped (`h#` is a phone, so there are no
    /// trailing comments).
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [src, dst] = fields[..] else {
                return Err(Error::invalid_config(format!(
                    "mapping line {}: expected `src dst`, got {line:?}",
                    n + 1
                )));
            };
            let image = (dst != "-").then(|| dst.to_string());
            if table.insert(src.to_string(), image).is_some() {
                return Err(Error::invalid_config(format!(
                    "mapping line {}: {src} mapped twice",
                    n + 1
                )));
            }
        }
        if table.is_empty() {
            return Err(Error::invalid_config("empty phone mapping"));
        }
        let mapping = PhoneMapping { table };
        if let Some(bad) = mapping.non_idempotent() {
            return Err(Error::invalid_config(format!(
                "mapping is not idempotent on its image: {bad}"
            )));
        }
        Ok(mapping)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PhoneMapping::parse(&text)
    }

    /// The standard 61 to 39 TIMIT folding.
    pub fn timit_39() -> Self {
        PhoneMapping::parse(LEE_HON).expect("bundled mapping parses")
    }

    pub fn identity(inventory: &PhoneInventory) -> Self {
        PhoneMapping {
            table: inventory
                .symbols()
                .iter()
                .map(|s| (s.clone(), Some(s.clone())))
                .collect(),
        }
    }

    pub fn get(&self, symbol: &str) -> Option<Option<&str>> {
        self.table.get(symbol).map(|v| v.as_deref())
    }

    pub fn domain(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    /// Distinct non-deleted images.
    pub fn image(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.table.values().flatten().map(String::as_str).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn non_idempotent(&self) -> Option<&str> {
        self.table
            .values()
            .flatten()
            .find(|img| {
                matches!(self.table.get(img.as_str()), Some(Some(again)) if again != *img)
                    || matches!(self.table.get(img.as_str()), Some(None))
            })
            .map(String::as_str)
    }
}

/// Symbol-wise image of `seq`; deleted symbols are dropped.
pub fn apply_mapping<S: AsRef<str>>(seq: &[S], mapping: &PhoneMapping) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(seq.len());
    for s in seq {
        match mapping.get(s.as_ref()) {
            Some(Some(img)) => out.push(img.to_string()),
            Some(None) => {}
            None => {
                return Err(Error::invalid_input(format!(
                    "phone {:?} is not in the mapping",
                    s.as_ref()
                )))
            }
        }
    }
    Ok(out)
}

/// Substitution, insertion and deletion counts of one alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Unit-cost Levenshtein alignment of `hyp` against `reference`.
///
/// Among minimal alignments the backtrace prefers substitution (or match),
/// then insertion, then deletion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        cost[i * w] = i;
        for j in 1..=m {
            let sub = cost[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let ins = cost[i * w + j - 1] + 1;
            let del = cost[(i - 1) * w + j] + 1;
            cost[i * w + j] = sub.min(ins).min(del);
        }
    }
    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        if i > 0 && j > 0 {
            let miss = usize::from(reference[i - 1] != hyp[j - 1]);
            if here == cost[(i - 1) * w + j - 1] + miss {
                counts.substitutions += miss;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && here == cost[i * w + j - 1] + 1 {
            counts.insertions += 1;
            j -= 1;
        } else {
            counts.deletions += 1;
            i -= 1;
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub id: Option<String>,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub utterances: Vec<UtteranceScore>,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
    /// `100·(S+I+D)/Σ reference lengths`.
    pub per: f64,
}

impl ScoreReport {
    /// Attaches utterance ids in order.
    pub fn with_ids<S: Into<String>>(mut self, ids: impl IntoIterator<Item = S>) -> Self {
        for (u, id) in self.utterances.iter_mut().zip(ids) {
            u.id = Some(id.into());
        }
        self
    }
}

/// Aggregate phone error rate. A mapping, when given, folds both sides
/// before alignment.
pub fn score<S: AsRef<str>>(refs: &[Vec<S>], hyps: &[Vec<S>], mapping: Option<&PhoneMapping>) -> Result<ScoreReport> {
    if refs.len() != hyps.len() {
        return Err(Error::invalid_input(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let fold = |seq: &[S]| -> Result<Vec<String>> {
        match mapping {
            Some(m) => apply_mapping(seq, m),
            None => Ok(seq.iter().map(|s| s.as_ref().to_string()).collect()),
        }
    };
    let mut utterances = Vec::with_capacity(refs.len());
    for (r, h) in refs.iter().zip(hyps) {
        let (r, h) = (fold(r)?, fold(h)?);
        let c = edit_distance(&r, &h);
        utterances.push(UtteranceScore {
            id: None,
            substitutions: c.substitutions,
            insertions: c.insertions,
            deletions: c.deletions,
            reference_length: r.len(),
        });
    }
    report(utterances)
}

/// [`score`] on raw phone ids, without any folding.
pub fn score_ids(refs: &[&PhoneSequence], hyps: &[PhoneSequence]) -> Result<ScoreReport> {
    if refs.len() != hyps.len() {
        return Err(Error::invalid_input(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let utterances = refs
        .iter()
        .zip(hyps)
        .map(|(r, h)| {
            let c = edit_distance(r.as_slice(), h.as_slice());
            UtteranceScore {
                id: None,
                substitutions: c.substitutions,
                insertions: c.insertions,
                deletions: c.deletions,
                reference_length: r.len(),
            }
        })
        .collect();
    report(utterances)
}

fn report(utterances: Vec<UtteranceScore>) -> Result<ScoreReport> {
    let sum = |f: fn(&UtteranceScore) -> usize| utterances.iter().map(f).sum::<usize>();
    let (s, i, d, len) = (
        sum(|u| u.substitutions),
        sum(|u| u.insertions),
        sum(|u| u.deletions),
        sum(|u| u.reference_length),
    );
    if len == 0 {
        return Err(Error::invalid_input("phone error rate needs a nonempty reference"));
    }
    Ok(ScoreReport {
        utterances,
        substitutions: s,
        insertions: i,
        deletions: d,
        reference_length: len,
        per: 100.0 * (s + i + d) as f64 / len as f64,
    })
}

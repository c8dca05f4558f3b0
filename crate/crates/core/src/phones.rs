//! Phone inventories and label sequences.
//!
//! Phones are addressed by dense ids `0..P-1`; the CTC blank takes the last
//! id `P-1`, so an inventory of `K` named phones yields `P = K + 1` output
//! classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 61-symbol TIMIT phone set, in its customary alphabetical order.
pub const TIMIT_61: [&str; 61] = [
    "aa", "ae", "ah", "ao", "aw", "ax", "ax-h", "axr", "ay", "b", "bcl", "ch", "d", "dcl", "dh", "dx", "eh", "el",
    "em", "en", "eng", "epi", "er", "ey", "f", "g", "gcl", "h#", "hh", "hv", "ih", "ix", "iy", "jh", "k", "kcl", "l",
    "m", "n", "ng", "nx", "ow", "oy", "p", "pau", "pcl", "q", "r", "s", "sh", "t", "tcl", "th", "uh", "uw", "ux", "v",
    "w", "y", "z", "zh",
];

/// Ordered list of phone ids. Does not contain the blank.
///
/// Reference transcriptions are never empty, but decoder hypotheses may be.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhoneSequence(pub Vec<usize>);

impl PhoneSequence {
    pub fn new(symbols: Vec<usize>) -> Self {
        PhoneSequence(symbols)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Number of adjacent equal pairs. Each one forces a blank between the
    /// two emissions in any CTC alignment.
    pub fn repeats(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Minimum frame count for a CTC alignment of this sequence to exist.
    pub fn min_frames(&self) -> usize {
        self.len() + self.repeats()
    }

    /// Checks every id is a non-blank class for `classes` outputs.
    pub fn validate(&self, classes: usize) -> Result<()> {
        if classes < 2 {
            return Err(Error::invalid_input(format!(
                "need at least 2 output classes, got {classes}"
            )));
        }
        let blank = classes - 1;
        if let Some(&bad) = self.0.iter().find(|&&s| s >= blank) {
            return Err(Error::invalid_input(format!(
                "label {bad} is the blank or out of range for {classes} classes"
            )));
        }
        Ok(())
    }
}

/// Named phone symbols. The blank is implicit and has no name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneInventory {
    symbols: Vec<String>,
}

impl PhoneInventory {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid_config("phone inventory is empty"));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::invalid_config(format!("bad phone symbol {s:?}")));
            }
            if symbols[..i].contains(s) {
                return Err(Error::invalid_config(format!("duplicate phone symbol {s:?}")));
            }
        }
        Ok(PhoneInventory { symbols })
    }

    /// First `count` TIMIT symbols. Synthetic corpora draw their names from
    /// here so the 61→39 fold stays meaningful on them.
    pub fn timit_prefix(count: usize) -> Result<Self> {
        if count == 0 || count > TIMIT_61.len() {
            return Err(Error::invalid_config(format!(
                "phone count must be in 1..={}, got {count}",
                TIMIT_61.len()
            )));
        }
        PhoneInventory::new(TIMIT_61[..count].iter().map(|s| s.to_string()).collect())
    }

    /// Number of named phones (excluding blank).
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Output classes including the blank.
    pub fn classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn blank(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn to_symbols(&self, seq: &PhoneSequence) -> Result<Vec<String>> {
        seq.0
            .iter()
            .map(|&i| {
                self.symbol(i)
                    .map(str::to_string)
                    .ok_or_else(|| Error::invalid_input(format!("phone id {i} not in inventory")))
            })
            .collect()
    }

    pub fn parse_symbols(&self, text: &str) -> Result<PhoneSequence> {
        text.split_whitespace()
            .map(|s| {
                self.id(s)
                    .ok_or_else(|| Error::invalid_input(format!("unknown phone symbol {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(PhoneSequence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_frames_counts_repeats() {
        assert_eq!(PhoneSequence::new(vec![0, 1, 2]).min_frames(), 3);
        assert_eq!(PhoneSequence::new(vec![0, 0, 1, 1]).min_frames(), 6);
    }

    #[test]
    fn validate_rejects_blank() {
        let seq = PhoneSequence::new(vec![0, 2]);
        assert!(seq.validate(4).is_ok());
        assert!(seq.validate(3).is_err());
        assert!(seq.validate(1).is_err());
    }

    #[test]
    fn inventory_round_trips_symbols() {
        let inv = PhoneInventory::timit_prefix(8).unwrap();
        assert_eq!(inv.classes(), 9);
        assert_eq!(inv.blank(), 8);
        let seq = inv.parse_symbols("aa ax-h  axr").unwrap();
        assert_eq!(seq.as_slice(), &[0, 6, 7]);
        assert_eq!(inv.to_symbols(&seq).unwrap(), vec!["aa", "ax-h", "axr"]);
        assert!(inv.parse_symbols("zh").is_err());
    }

    #[test]
    fn inventory_rejects_duplicates() {
        assert!(PhoneInventory::new(vec!["a".into(), "a".into()]).is_err());
        assert!(PhoneInventory::new(vec!["a b".into()]).is_err());
        assert!(PhoneInventory::timit_prefix(62).is_err());
    }
}

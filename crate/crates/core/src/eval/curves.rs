use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::training::{EpochRecord, TrainingHistory};

pub const HISTORY_HEADER: &str = "epoch,phase,lambda,train_enh,train_asr,valid_enh,valid_asr,valid_per";

/// Nine significant digits.
fn num(v: f64) -> String {
    format!("{v:.8e}")
}

/// Renders the history as CSV. A non-finite value aborts with the epoch named.
pub fn format_history_csv(history: &TrainingHistory) -> Result<String> {
    if history.is_empty() {
        return Err(Error::invalid_input("empty training history"));
    }
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in &history.records {
        let values = [r.train_enh, r.train_asr, r.valid_enh, r.valid_asr, r.valid_per];
        if values.iter().chain(r.lambda.as_ref()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value recorded at epoch {}",
                r.epoch
            )));
        }
        let lambda = r.lambda.map(num).unwrap_or_default();
        let _ = write!(out, "{},{},{}", r.epoch, r.phase, lambda);
        for v in values {
            let _ = write!(out, ",{}", num(v));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes the loss curves CSV.
pub fn emit_curves(history: &TrainingHistory, path: &Path) -> Result<()> {
    let text = format_history_csv(history)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_history_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(Error::format("history", "missing or wrong header"));
    }
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = |what: &str| Error::format("history", format!("row {}: {what}", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number {s:?}")));
        records.push(EpochRecord {
            epoch: f[0].parse().map_err(|_| bad("bad epoch"))?,
            phase: f[1].parse().map_err(|_| bad("bad phase"))?,
            lambda: if f[2].is_empty() { None } else { Some(float(f[2])?) },
            train_enh: float(f[3])?,
            train_asr: float(f[4])?,
            valid_enh: float(f[5])?,
            valid_asr: float(f[6])?,
            valid_per: float(f[7])?,
        });
    }
    Ok(records)
}

pub fn read_curves(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_history_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::Phase;

    fn history() -> TrainingHistory {
        let rec = |epoch, phase, lambda| EpochRecord {
            epoch,
            phase,
            lambda,
            train_enh: 0.1234567891234 / (epoch + 1) as f64,
            train_asr: 12.5 + epoch as f64,
            valid_enh: 3.3e-7,
            valid_asr: 1.0 / 3.0,
            valid_per: 42.0,
        };
        TrainingHistory {
            records: vec![
                rec(0, Phase::Enh, None),
                rec(1, Phase::Asr, None),
                rec(2, Phase::Joint, Some(1e4)),
            ],
            ..TrainingHistory::default()
        }
    }

    fn sig9(v: f64) -> String {
        format!("{v:.8e}")
    }

    #[test]
    fn three_rows_round_trip_at_nine_digits() {
        let h = history();
        let text = format_history_csv(&h).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("0,ENH,,"));
        let back = parse_history_csv(&text).unwrap();
        for (a, b) in h.records.iter().zip(&back) {
            assert_eq!((a.epoch, a.phase), (b.epoch, b.phase));
            assert_eq!(a.lambda.map(sig9), b.lambda.map(sig9));
            for (x, y) in [
                (a.train_enh, b.train_enh),
                (a.train_asr, b.train_asr),
                (a.valid_enh, b.valid_enh),
                (a.valid_asr, b.valid_asr),
                (a.valid_per, b.valid_per),
            ] {
                assert_eq!(sig9(x), sig9(y));
            }
        }
    }

    #[test]
    fn non_finite_names_epoch() {
        let mut h = history();
        h.records[1].valid_asr = f64::NAN;
        let err = format_history_csv(&h).unwrap_err();
        assert!(err.to_string().contains("epoch 1"), "{err}");
        assert!(format_history_csv(&TrainingHistory::default()).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = emit_curves(&history(), Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}

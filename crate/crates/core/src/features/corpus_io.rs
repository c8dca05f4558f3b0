//! Corpus directory layout:
//!
//! ```text
//! manifest.json   dims, phone inventory and one entry per utterance
//! <id>.bin        u64 LE length table [mixture, clean, visual, interferer]
//!                 followed by those arrays as f64 LE, row-major
//! <id>.phn        whitespace-separated phone symbols
//! ```
//!
//! An absent interferer has length 0 in the table.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, Spectrogram, Utterance, VisualFeatures};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::phones::PhoneInventory;

pub const CORPUS_MANIFEST: &str = "manifest.json";
const FORMAT_TAG: &str = "jointspeech-corpus";
const FORMAT_VERSION: u32 = 1;
const TABLE_BYTES: usize = 4 * 8;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    bins: usize,
    visual_dim: usize,
    classes: usize,
    inventory: Vec<String>,
    utterances: Vec<UtteranceHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceHeader {
    id: String,
    frames: usize,
    labels: usize,
    interferer: bool,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !id.starts_with('.')
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    corpus.validate()?;
    let (bins, visual_dim) = match (corpus.bins(), corpus.visual_dim()) {
        (Some(n), Some(m)) => (n, m),
        _ => return Err(Error::invalid_input("cannot save an empty corpus")),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut headers = Vec::with_capacity(corpus.len());
    for u in &corpus.utterances {
        if !valid_id(&u.id) {
            return Err(Error::invalid_input(format!(
                "utterance id {:?} is not file-safe",
                u.id
            )));
        }
        let arrays: [&[f64]; 4] = [
            u.mixture.frames().as_slice(),
            u.clean.frames().as_slice(),
            u.visual.frames().as_slice(),
            u.interferer.as_ref().map_or(&[][..], |s| s.frames().as_slice()),
        ];
        let total: usize = arrays.iter().map(|a| a.len()).sum();
        let mut bytes = Vec::with_capacity(TABLE_BYTES + 8 * total);
        for a in &arrays {
            bytes.extend_from_slice(&(a.len() as u64).to_le_bytes());
        }
        for a in &arrays {
            for v in a.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        write_file(&dir.join(format!("{}.bin", u.id)), &bytes)?;

        let mut phn = corpus.inventory.to_symbols(&u.labels)?.join(" ");
        phn.push('\n');
        write_file(&dir.join(format!("{}.phn", u.id)), phn.as_bytes())?;

        headers.push(UtteranceHeader {
            id: u.id.clone(),
            frames: u.frames(),
            labels: u.labels.len(),
            interferer: u.interferer.is_some(),
        });
    }

    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        bins,
        visual_dim,
        classes: corpus.classes(),
        inventory: corpus.inventory.symbols().to_vec(),
        utterances: headers,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_file(&dir.join(CORPUS_MANIFEST), &json)
}

fn read_arrays(id: &str, bytes: &[u8]) -> Result<[Vec<f64>; 4]> {
    if bytes.len() < TABLE_BYTES {
        return Err(Error::format(id, "payload shorter than its length table"));
    }
    let mut lens = [0usize; 4];
    for (i, len) in lens.iter_mut().enumerate() {
        let raw = u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8-byte slice"));
        *len = usize::try_from(raw).map_err(|_| Error::format(id, "array length overflows"))?;
    }
    let total = lens
        .iter()
        .try_fold(0usize, |acc, &l| acc.checked_add(l))
        .and_then(|t| t.checked_mul(8))
        .ok_or_else(|| Error::format(id, "array lengths overflow"))?;
    let body = &bytes[TABLE_BYTES..];
    if body.len() != total {
        return Err(Error::format(
            id,
            format!("payload has {} bytes, length table needs {total}", body.len()),
        ));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    Ok(lens.map(|l| values.by_ref().take(l).collect()))
}

fn load_utterance(dir: &Path, h: &UtteranceHeader, m: &Manifest, inventory: &PhoneInventory) -> Result<Utterance> {
    let id = h.id.as_str();
    if !valid_id(id) {
        return Err(Error::format(id, "utterance id is not file-safe"));
    }
    let bin_path = dir.join(format!("{id}.bin"));
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let [mix, clean, visual, interferer] = read_arrays(id, &bytes)?;

    let (t, n) = (h.frames, m.bins);
    let expect = |name: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(Error::format(
                id,
                format!("{name} has {got} values, header dims need {want}"),
            ))
        }
    };
    expect("mixture", mix.len(), t * n)?;
    expect("clean", clean.len(), t * n)?;
    expect("visual", visual.len(), t * m.visual_dim)?;
    expect("interferer", interferer.len(), if h.interferer { t * n } else { 0 })?;

    let spec = |v: Vec<f64>| {
        Matrix::from_vec(t, n, v)
            .and_then(Spectrogram::new)
            .map_err(|e| Error::format(id, e.to_string()))
    };
    let mixture = spec(mix)?;
    let clean = spec(clean)?;
    let interferer = if h.interferer { Some(spec(interferer)?) } else { None };
    let visual = Matrix::from_vec(t, m.visual_dim, visual)
        .and_then(VisualFeatures::new)
        .map_err(|e| Error::format(id, e.to_string()))?;

    let phn_path = dir.join(format!("{id}.phn"));
    let text = fs::read_to_string(&phn_path).map_err(|e| Error::io(&phn_path, e))?;
    let labels = inventory
        .parse_symbols(&text)
        .map_err(|e| Error::format(id, e.to_string()))?;
    if labels.len() != h.labels {
        return Err(Error::format(
            id,
            format!("{} labels on disk, header says {}", labels.len(), h.labels),
        ));
    }
    Utterance::new(id, mixture, clean, visual, labels, interferer)
}

/// Reads a corpus directory. Any defect fails the whole load.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let path = dir.join(CORPUS_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(CORPUS_MANIFEST, e.to_string()))?;
    if manifest.format != FORMAT_TAG || manifest.version != FORMAT_VERSION {
        return Err(Error::format(
            CORPUS_MANIFEST,
            format!("unsupported format {} v{}", manifest.format, manifest.version),
        ));
    }
    let inventory =
        PhoneInventory::new(manifest.inventory.clone()).map_err(|e| Error::format(CORPUS_MANIFEST, e.to_string()))?;
    if inventory.classes() != manifest.classes {
        return Err(Error::format(
            CORPUS_MANIFEST,
            format!(
                "classes={} but inventory implies {}",
                manifest.classes,
                inventory.classes()
            ),
        ));
    }
    let utterances = manifest
        .utterances
        .iter()
        .map(|h| load_utterance(dir, h, &manifest, &inventory))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(inventory, utterances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{synth_corpus, CorpusConfig};

    fn corpus() -> Corpus {
        let cfg = CorpusConfig {
            utterances: 3,
            ..CorpusConfig::default()
        };
        synth_corpus(&cfg, 17).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus();
        save_corpus(&c, dir.path()).unwrap();
        let back = load_corpus(dir.path()).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.utterances.iter().zip(&c.utterances) {
            let bits = |s: &Spectrogram| s.frames().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.mixture), bits(&b.mixture));
        }
    }

    #[test]
    fn truncated_payload_names_the_utterance() {
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus(), dir.path()).unwrap();
        let bin = dir.path().join("utt0001.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 3]).unwrap();
        match load_corpus(dir.path()) {
            Err(Error::Format { id, .. }) => assert_eq!(id, "utt0001"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn header_dims_must_match_payload() {
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus(), dir.path()).unwrap();
        let path = dir.path().join(CORPUS_MANIFEST);
        let mut m: Manifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        m.bins += 1;
        fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
        match load_corpus(dir.path()) {
            Err(Error::Format { id, message }) => {
                assert_eq!(id, "utt0000");
                assert!(message.contains("mixture"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_manifest_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&corpus(), dir.path()).unwrap();
        fs::write(dir.path().join(CORPUS_MANIFEST), b"{ not json").unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(Error::Format { .. })));
    }
}

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_text, CorpusError, ParallelCorpus, Provenance, SentencePair};

/// On-disk corpus layouts.
///
/// * `Tsv`: `id<TAB>vi<TAB>ja` per line; `ja` may be empty. Two-column lines
///   (`vi<TAB>ja`) get the record index as id.
/// * `Jsonl`: `{"id", "vi", "ja", "provenance", "flagged"}` per line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    /// Guesses from the file extension; anything but `.tsv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

#[derive(Deserialize)]
struct JsonRecordIn {
    #[serde(default)]
    id: Option<u64>,
    vi: String,
    ja: Option<String>,
    #[serde(default)]
    provenance: Provenance,
    #[serde(default)]
    flagged: bool,
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    id: u64,
    vi: &'a str,
    ja: Option<&'a str>,
    provenance: Provenance,
    flagged: bool,
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<ParallelCorpus, CorpusError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    read_corpus(&bytes, format)
}

/// Parses a corpus from raw file bytes.
pub fn read_corpus(bytes: &[u8], format: CorpusFormat) -> Result<ParallelCorpus, CorpusError> {
    let mut pairs = Vec::new();
    let mut offset = 0usize;

    for (idx, raw_line) in bytes.split(|b| *b == b'\n').enumerate() {
        let line_no = idx + 1;
        let line_start = offset;
        offset += raw_line.len() + 1;

        let line = std::str::from_utf8(raw_line).map_err(|e| CorpusError::Decode {
            line: Some(line_no),
            offset: line_start + e.valid_up_to(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }

        let record_index = pairs.len() as u64;
        let pair = match format {
            CorpusFormat::Tsv => parse_tsv(line, line_no, record_index)?,
            CorpusFormat::Jsonl => parse_jsonl(line, line_no, record_index)?,
        };
        pairs.push(pair);
    }

    ParallelCorpus::new(pairs)
}

fn parse_tsv(line: &str, line_no: usize, record_index: u64) -> Result<SentencePair, CorpusError> {
    let fields: Vec<&str> = line.split('\t').collect();
    let (id, vi, ja) = match fields.as_slice() {
        [id, vi, ja] => {
            let id = id.trim().parse::<u64>().map_err(|e| CorpusError::Parse {
                line: line_no,
                message: format!("invalid id {id:?}: {e}"),
            })?;
            (id, *vi, *ja)
        }
        [vi, ja] => (record_index, *vi, *ja),
        _ => {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
            })
        }
    };
    build_pair(id, vi, Some(ja), line_no)
}

fn parse_jsonl(line: &str, line_no: usize, record_index: u64) -> Result<SentencePair, CorpusError> {
    let record: JsonRecordIn = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let pair = build_pair(
        record.id.unwrap_or(record_index),
        &record.vi,
        record.ja.as_deref(),
        line_no,
    )?;
    if record.provenance.is_synthetic() && pair.target_ja.is_none() {
        return Err(CorpusError::Parse {
            line: line_no,
            message: format!("{} pair without a Japanese target", record.provenance.as_str()),
        });
    }
    Ok(pair.with_provenance(record.provenance).with_flagged(record.flagged))
}

fn build_pair(id: u64, vi: &str, ja: Option<&str>, line_no: usize) -> Result<SentencePair, CorpusError> {
    if normalize_text(vi).is_empty() {
        return Err(CorpusError::Parse {
            line: line_no,
            message: "empty Vietnamese source".into(),
        });
    }
    Ok(SentencePair::new(id, vi, ja))
}

pub fn save_corpus(corpus: &ParallelCorpus, path: &Path, format: CorpusFormat) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    write_corpus(corpus, &mut writer, format).map_err(io_err)?;
    writer.flush().map_err(io_err)
}

/// Writes records in corpus order; every record ends with `\n`.
pub fn write_corpus<W: Write>(corpus: &ParallelCorpus, mut out: W, format: CorpusFormat) -> std::io::Result<()> {
    for pair in corpus.iter() {
        match format {
            CorpusFormat::Tsv => {
                writeln!(
                    out,
                    "{}\t{}\t{}",
                    pair.id,
                    pair.source_vi,
                    pair.target_ja.as_deref().unwrap_or("")
                )?;
            }
            CorpusFormat::Jsonl => {
                let record = JsonRecordOut {
                    id: pair.id,
                    vi: &pair.source_vi,
                    ja: pair.target_ja.as_deref(),
                    provenance: pair.provenance,
                    flagged: pair.flagged,
                };
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

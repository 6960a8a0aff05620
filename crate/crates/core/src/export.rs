//! JSONL exports consumed by the language-model service: next-sentence
//! fine-tuning pairs and evaluation windows.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::PromptTemplate;
use crate::data::{format_timestamp, make_windows, DataError, LoadSeries, WindowSpec};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("series has {len} records; more than {n} are needed")]
    SeriesTooShort { len: usize, n: usize },
    #[error("observation length must be at least 1")]
    InvalidLength,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// `n` context sentences (newline-joined) and the sentence that follows them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetunePair {
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalWindowRecord {
    pub observation: Vec<String>,
    pub targets: Vec<f64>,
    /// Timestamp of the first target step.
    pub start: String,
}

fn write_line<W: Write, T: Serialize>(sink: &mut W, value: &T) -> Result<(), ExportError> {
    serde_json::to_writer(&mut *sink, value).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Writes one pair per position with stride 1; returns `len - n`.
pub fn export_pairs<W: Write>(
    train: &LoadSeries,
    template: &PromptTemplate,
    n: usize,
    mut sink: W,
) -> Result<usize, ExportError> {
    if n == 0 {
        return Err(ExportError::InvalidLength);
    }
    if train.len() <= n {
        return Err(ExportError::SeriesTooShort { len: train.len(), n });
    }
    train.check_hourly()?;
    let sentences: Vec<String> = train
        .records()
        .iter()
        .map(|r| template.render(r).into())
        .collect();
    let mut written = 0;
    for end in n..sentences.len() {
        let pair = FinetunePair {
            input: sentences[end - n..end].join("\n"),
            target: sentences[end].clone(),
        };
        write_line(&mut sink, &pair)?;
        written += 1;
    }
    sink.flush()?;
    Ok(written)
}

/// Writes one record per evaluation window; zero when the series is too short.
pub fn export_eval_windows<W: Write>(
    test: &LoadSeries,
    template: &PromptTemplate,
    spec: WindowSpec,
    mut sink: W,
) -> Result<usize, ExportError> {
    test.check_hourly()?;
    let windows = make_windows(test, spec);
    for w in &windows {
        let record = EvalWindowRecord {
            observation: w.observation.iter().map(|r| template.render(r).into()).collect(),
            targets: w.target_values(),
            start: format_timestamp(&w.start()),
        };
        write_line(&mut sink, &record)?;
    }
    sink.flush()?;
    Ok(windows.len())
}

fn read_jsonl<R: BufRead, T: for<'de> Deserialize<'de>>(source: R) -> Result<Vec<T>, ExportError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ExportError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn read_pairs<R: BufRead>(source: R) -> Result<Vec<FinetunePair>, ExportError> {
    read_jsonl(source)
}

pub fn read_eval_windows<R: BufRead>(source: R) -> Result<Vec<EvalWindowRecord>, ExportError> {
    read_jsonl(source)
}

//! Long-format CSV input and output.
//!
//! Sequence files have the header `id,outcome` and one trial per row. Rows of
//! one id need not be contiguous; trial order is row order within the id and
//! sequences appear in order of first appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use streakiness::{BinarySequence, SequenceSet};

use crate::error::CliError;

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(input)
}

fn check_header<R: Read>(
    rdr: &mut csv::Reader<R>,
    expected: &[&str],
    label: &str,
) -> Result<(), CliError> {
    let header = rdr.headers().map_err(|e| csv_parse(e, label))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(CliError::Schema(format!(
            "{label}: expected header `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn csv_parse(err: csv::Error, label: &str) -> CliError {
    let line = err.position().map_or(0, |p| p.line());
    CliError::Parse {
        path: label.to_string(),
        line,
        msg: err.to_string(),
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

/// Reads a sequence file.
pub fn read_sequences(path: &Path) -> Result<SequenceSet, CliError> {
    parse_sequences(open(path)?, &path.display().to_string())
}

/// Parses sequence CSV from any reader; `label` names the source in errors.
pub fn parse_sequences<R: Read>(input: R, label: &str) -> Result<SequenceSet, CliError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["id", "outcome"], label)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, Vec<u8>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_parse(e, label))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = &rec[0];
        if id.is_empty() {
            return Err(CliError::Schema(format!("{label}: line {line}: empty id")));
        }
        let outcome = match &rec[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(CliError::Parse {
                    path: label.to_string(),
                    line,
                    msg: format!("outcome `{other}` is not 0 or 1"),
                })
            }
        };
        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            groups.push((id.to_string(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(outcome);
    }
    if groups.is_empty() {
        return Err(CliError::Schema(format!("{label}: no trials")));
    }
    let sequences = groups
        .into_iter()
        .map(|(id, trials)| BinarySequence::new(id, trials))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SequenceSet::new(sequences)?)
}

/// Writes a set in the ingest schema, each sequence's rows contiguous.
pub fn write_sequences<W: Write>(set: &SequenceSet, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "outcome"])?;
    for seq in set {
        for &t in seq.trials() {
            w.write_record([seq.id(), if t == 1 { "1" } else { "0" }])?;
        }
    }
    w.flush().map_err(|e| CliError::io("<csv output>", e))?;
    Ok(())
}

/// Reads `id,p_value` rows for the stepdown command.
pub fn read_p_values(path: &Path) -> Result<Vec<(String, f64)>, CliError> {
    parse_p_values(open(path)?, &path.display().to_string())
}

pub fn parse_p_values<R: Read>(input: R, label: &str) -> Result<Vec<(String, f64)>, CliError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["id", "p_value"], label)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_parse(e, label))?;
        let line = rec.position().map_or(0, |p| p.line());
        let p: f64 = rec[1].parse().map_err(|_| CliError::Parse {
            path: label.to_string(),
            line,
            msg: format!("p-value `{}` is not a number", &rec[1]),
        })?;
        out.push((rec[0].to_string(), p));
    }
    if out.is_empty() {
        return Err(CliError::Schema(format!("{label}: no p-values")));
    }
    Ok(out)
}

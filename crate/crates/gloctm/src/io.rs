//! Plain-text file formats: corpora, labels, embeddings, references and
//! sparse triplet exports.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use gloctm_core::corpus::Vocabulary;
use gloctm_core::lexicon::{GlobalBow, WordEmbeddingTable};
use gloctm_core::linalg::Matrix;

use crate::error::{Error, Result};

fn lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file).lines().collect::<std::io::Result<Vec<_>>>().map_err(|e| Error::io(path, e))
}

/// One document per line, tokens separated by single spaces.
pub fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    lines(path)?
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            if line.trim().is_empty() {
                return Err(Error::parse(path, i + 1, "blank document"));
            }
            Ok(line.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect())
        })
        .collect()
}

/// One non-negative integer label per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    lines(path)?
        .into_iter()
        .enumerate()
        .map(|(i, line)| line.trim().parse().map_err(|_| Error::parse(path, i + 1, format!("bad label {line:?}"))))
        .collect()
}

pub fn read_labeled_corpus(docs: &Path, labels: &Path) -> Result<(Vec<Vec<String>>, Vec<usize>)> {
    let d = read_corpus(docs)?;
    let l = read_labels(labels)?;
    if d.len() != l.len() {
        return Err(Error::parse(
            labels,
            l.len().min(d.len()) + 1,
            format!("label count mismatch: {} documents, {} labels", d.len(), l.len()),
        ));
    }
    Ok((d, l))
}

fn parse_floats(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line, format!("bad value {f:?}")))
        })
        .collect()
}

/// `word v1 ... vM` per line, with an optional `COUNT DIM` header.
pub fn read_word_vectors(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    let mut dim = None;
    for (i, line) in lines(path)?.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let v = parse_floats(path, i + 1, &fields[1..])?;
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => return Err(Error::parse(path, i + 1, format!("dimension mismatch at line {}", i + 1))),
            _ => {}
        }
        out.push((fields[0].to_owned(), v));
    }
    Ok(out)
}

pub fn load_word_embeddings(path: &Path, vocab: &Vocabulary) -> Result<WordEmbeddingTable> {
    let entries = read_word_vectors(path)?;
    Ok(WordEmbeddingTable::align(vocab, entries)?)
}

/// `doc_id v1 ... vM` per line; rows are returned in file order and the
/// ids must be `0, 1, 2, ...`.
pub fn read_doc_embeddings(path: &Path) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines(path)?.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields[0].parse::<usize>().ok() != Some(rows.len()) {
            return Err(Error::parse(path, i + 1, format!("expected document id {}", rows.len())));
        }
        let v = parse_floats(path, i + 1, &fields[1..])?;
        if let Some(first) = rows.first() {
            if first.len() != v.len() {
                return Err(Error::parse(path, i + 1, format!("dimension mismatch at line {}", i + 1)));
            }
        }
        rows.push(v);
    }
    Ok(Matrix::from_rows(&rows))
}

/// Both sides of an aligned reference, one file per language with equal
/// line counts.
pub fn read_reference(side1: &Path, side2: &Path) -> Result<[Vec<Vec<String>>; 2]> {
    let a = read_corpus(side1)?;
    let b = read_corpus(side2)?;
    if a.len() != b.len() {
        return Err(Error::parse(side2, a.len().min(b.len()) + 1, format!("{} vs {} aligned lines", a.len(), b.len())));
    }
    Ok([a, b])
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes `body` line by line, creating parent directories.
pub fn write_lines<I, S>(path: &Path, body: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut w = create(path)?;
    for line in body {
        writeln!(w, "{}", line.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus(path: &Path, docs: &[Vec<String>]) -> Result<()> {
    write_lines(path, docs.iter().map(|d| d.join(" ")))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    write_lines(path, labels.iter().map(usize::to_string))
}

pub fn write_word_vectors(path: &Path, entries: &[(String, Vec<f64>)]) -> Result<()> {
    let dim = entries.first().map_or(0, |e| e.1.len());
    let header = std::iter::once(format!("{} {dim}", entries.len()));
    let body = entries.iter().map(|(w, v)| format!("{w} {}", join_floats(v)));
    write_lines(path, header.chain(body))
}

pub fn write_doc_embeddings(path: &Path, m: &Matrix) -> Result<()> {
    write_lines(path, (0..m.rows()).map(|d| format!("{d} {}", join_floats(m.row(d)))))
}

/// `doc_index col_index value` per nonzero entry.
pub fn write_triplets(path: &Path, g: &GlobalBow) -> Result<()> {
    write_lines(path, g.triplets().map(|(d, j, v)| format!("{d} {j} {v}")))
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json { path: path.into(), source: e })?;
    write_lines(path, [text])
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })
}

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{CorpusError, EmbeddingSidecar, ImageItem, MultimodalRecord};

/// What to do with a line that does not parse as a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedPolicy {
    #[default]
    Skip,
    Abort,
}

#[derive(Debug, Clone, Copy)]
pub struct ReaderOptions<'a> {
    pub expected_dim: usize,
    pub malformed: MalformedPolicy,
    pub sidecar: Option<&'a EmbeddingSidecar>,
}

impl ReaderOptions<'_> {
    pub fn new(expected_dim: usize) -> Self {
        ReaderOptions {
            expected_dim,
            malformed: MalformedPolicy::Skip,
            sidecar: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    text: String,
    is_retweet: bool,
    created_at: i64,
    images: Vec<RawImage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    image_id: String,
    #[serde(default)]
    embedding: Option<Vec<f32>>,
    #[serde(default)]
    embedding_ref: bool,
}

/// Streams records from a JSON-Lines corpus in file order.
///
/// Malformed lines are skipped and counted under [`MalformedPolicy::Skip`];
/// a dimension mismatch always ends the stream with an error.
pub struct CorpusReader<'a, R> {
    lines: std::io::Lines<R>,
    options: ReaderOptions<'a>,
    line_no: usize,
    seen_ids: HashSet<String>,
    skipped: usize,
    done: bool,
}

impl<'a, R: BufRead> CorpusReader<'a, R> {
    pub fn new(reader: R, options: ReaderOptions<'a>) -> Self {
        CorpusReader {
            lines: reader.lines(),
            options,
            line_no: 0,
            seen_ids: HashSet::new(),
            skipped: 0,
            done: false,
        }
    }

    /// Lines skipped as malformed so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn lines_read(&self) -> usize {
        self.line_no
    }

    fn parse(&mut self, line: &str) -> Result<MultimodalRecord, CorpusError> {
        let malformed = |message: String| CorpusError::Malformed {
            line: self.line_no,
            message,
        };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if raw.id.is_empty() {
            return Err(malformed("empty record id".into()));
        }
        if self.seen_ids.contains(&raw.id) {
            return Err(malformed(format!("duplicate record id `{}`", raw.id)));
        }
        let mut images = Vec::with_capacity(raw.images.len());
        for img in raw.images {
            let embedding = match (img.embedding, img.embedding_ref) {
                (Some(v), false) => v,
                (None, true) => match self.options.sidecar {
                    Some(sidecar) => sidecar.get(&img.image_id)?,
                    None => {
                        return Err(malformed(format!(
                            "image `{}` references a sidecar embedding but none is configured",
                            img.image_id
                        )))
                    }
                },
                _ => {
                    return Err(malformed(format!(
                        "image `{}` needs exactly one of `embedding` or `embedding_ref: true`",
                        img.image_id
                    )))
                }
            };
            if embedding.len() != self.options.expected_dim {
                return Err(CorpusError::DimensionMismatch {
                    line: self.line_no,
                    image_id: img.image_id,
                    expected: self.options.expected_dim,
                    found: embedding.len(),
                });
            }
            let item = ImageItem::new(img.image_id, embedding);
            if !item.is_finite() {
                return Err(malformed(format!(
                    "image `{}` has a non-finite embedding component",
                    item.image_id
                )));
            }
            images.push(item);
        }
        self.seen_ids.insert(raw.id.clone());
        Ok(MultimodalRecord {
            id: raw.id,
            text: raw.text,
            is_retweet: raw.is_retweet,
            created_at: raw.created_at,
            images,
        })
    }
}

impl<R: BufRead> Iterator for CorpusReader<'_, R> {
    type Item = Result<MultimodalRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(source) => {
                    self.done = true;
                    return Some(Err(CorpusError::Io {
                        path: "<corpus stream>".into(),
                        source,
                    }));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.parse(&line) {
                Ok(record) => return Some(Ok(record)),
                Err(e @ CorpusError::Malformed { .. })
                    if self.options.malformed == MalformedPolicy::Skip =>
                {
                    let _ = e;
                    self.skipped += 1;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}

/// Opens a corpus file with the default skip-and-count policy.
pub fn load_corpus(
    path: &Path,
    expected_dim: usize,
) -> Result<CorpusReader<'static, BufReader<File>>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(CorpusReader::new(
        BufReader::new(file),
        ReaderOptions::new(expected_dim),
    ))
}

/// Reads a whole corpus; returns the records and the number of skipped lines.
pub fn read_records(
    path: &Path,
    options: ReaderOptions<'_>,
) -> Result<(Vec<MultimodalRecord>, usize), CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = CorpusReader::new(BufReader::new(file), options);
    let records = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((records, reader.skipped()))
}

pub fn write_records<'r, I>(path: &Path, records: I) -> Result<(), CorpusError>
where
    I: IntoIterator<Item = &'r MultimodalRecord>,
{
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

//! Tab-separated manifests: `image_path<TAB>writer_id<TAB>page_id[<TAB>word_text]`.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{FragError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    /// As written in the file; relative paths are resolved against the
    /// manifest's directory by [`Manifest::resolve`].
    pub image_path: PathBuf,
    pub writer_id: usize,
    pub page_id: String,
    pub word_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub split: Split,
    /// Directory relative image paths are resolved against.
    pub base_dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(split: Split, base_dir: impl Into<PathBuf>) -> Self {
        Manifest {
            split,
            base_dir: base_dir.into(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        if record.image_path.is_absolute() {
            record.image_path.clone()
        } else {
            self.base_dir.join(&record.image_path)
        }
    }

    /// One more than the largest writer id (0 when empty).
    pub fn writer_count(&self) -> usize {
        self.records.iter().map(|r| r.writer_id + 1).max().unwrap_or(0)
    }

    pub fn page_ids(&self) -> HashSet<&str> {
        self.records.iter().map(|r| r.page_id.as_str()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&format!("{}\t{}\t{}", r.image_path.display(), r.writer_id, r.page_id));
            if let Some(t) = &r.word_text {
                s.push('\t');
                s.push_str(t);
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| FragError::io(path, e))
    }
}

/// Parses manifest text; `path` is used for error messages only.
pub fn parse_manifest(text: &str, split: Split, base_dir: &Path, path: &Path) -> Result<Manifest> {
    let mut manifest = Manifest::new(split, base_dir);
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| FragError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(err(format!("expected 3 or 4 tab-separated fields, found {}", fields.len())));
        }
        if fields[0].is_empty() || fields[2].is_empty() {
            return Err(err("empty image path or page id".into()));
        }
        let writer_id = fields[1]
            .trim()
            .parse()
            .map_err(|_| err(format!("writer id {:?} is not a non-negative integer", fields[1])))?;
        manifest.records.push(ManifestRecord {
            image_path: PathBuf::from(fields[0]),
            writer_id,
            page_id: fields[2].to_string(),
            word_text: fields.get(3).filter(|t| !t.is_empty()).map(|t| t.to_string()),
        });
    }
    Ok(manifest)
}

pub fn load_manifest(path: &Path, split: Split) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| FragError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    parse_manifest(&text, split, &base, path)
}

/// Fails on the first page (in test-manifest order) present in both splits.
pub fn check_disjoint(train: &Manifest, test: &Manifest) -> Result<()> {
    let train_pages = train.page_ids();
    match test.records.iter().find(|r| train_pages.contains(r.page_id.as_str())) {
        Some(r) => Err(FragError::SplitViolation {
            page_id: r.page_id.clone(),
        }),
        None => Ok(()),
    }
}

/// Loads both manifests and enforces page disjointness.
pub fn load_split(train: &Path, test: &Path) -> Result<(Manifest, Manifest)> {
    let train = load_manifest(train, Split::Train)?;
    let test = load_manifest(test, Split::Test)?;
    check_disjoint(&train, &test)?;
    Ok((train, test))
}

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const CLASSES_FILE: &str = "classes.txt";
pub const MANIFEST_HEADER: &str = "path\tlabel\tsplit";
/// Label column value for part-labelled clouds.
pub const SEG_LABEL: &str = "seg";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative to the dataset directory.
    pub path: PathBuf,
    /// `None` for segmentation samples.
    pub label: Option<usize>,
    pub split: Split,
}

/// Dataset index: `classes.txt` (one name per line) and `manifest.tsv`.
/// For segmentation datasets the class names are the part names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn is_segmentation(&self) -> bool {
        self.entries.first().is_some_and(|e| e.label.is_none())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Labels in range, no duplicate paths, one dataset kind.
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("manifest lists no classes"));
        }
        let seg = self.is_segmentation();
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(&e.path) {
                return Err(Error::invalid(format!("duplicate path {}", e.path.display())));
            }
            match e.label {
                Some(l) if l >= self.classes.len() => {
                    return Err(Error::invalid(format!(
                        "{}: label {l} outside {} classes",
                        e.path.display(),
                        self.classes.len()
                    )))
                }
                Some(_) if seg => return Err(Error::invalid("manifest mixes class and seg labels")),
                None if !seg => return Err(Error::invalid("manifest mixes class and seg labels")),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER}\n");
        for e in &self.entries {
            let label = e.label.map(|l| l.to_string()).unwrap_or_else(|| SEG_LABEL.into());
            let _ = writeln!(s, "{}\t{}\t{}", e.path.display(), label, e.split.name());
        }
        s
    }

    pub fn parse(classes: &str, manifest: &str, origin: &Path) -> Result<Self> {
        let classes: Vec<String> = classes
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        let mut lines = manifest.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, h)) if h.trim_end() == MANIFEST_HEADER => {}
            _ => return Err(Error::parse(origin, 1, format!("expected header `{MANIFEST_HEADER}`"))),
        }
        let mut entries = Vec::new();
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(origin, no, format!("{} columns, expected 3", cols.len())));
            }
            let label = if cols[1] == SEG_LABEL {
                None
            } else {
                Some(
                    cols[1]
                        .parse()
                        .map_err(|_| Error::parse(origin, no, format!("bad label {}", cols[1])))?,
                )
            };
            let split = match cols[2] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(Error::parse(origin, no, format!("unknown split {other}"))),
            };
            entries.push(ManifestEntry {
                path: PathBuf::from(cols[0]),
                label,
                split,
            });
        }
        let m = Manifest { classes, entries };
        m.validate()?;
        Ok(m)
    }

    /// Load from a dataset directory and check every listed file exists.
    pub fn read(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let m = Self::parse(
            &fs::read_to_string(dir.join(CLASSES_FILE))?,
            &fs::read_to_string(&mpath)?,
            &mpath,
        )?;
        for e in &m.entries {
            if !dir.join(&e.path).is_file() {
                return Err(Error::invalid(format!("listed file {} is missing", e.path.display())));
            }
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        let mut classes = self.classes.join("\n");
        classes.push('\n');
        fs::write(dir.join(CLASSES_FILE), classes)?;
        fs::write(dir.join(MANIFEST_FILE), self.to_tsv())?;
        Ok(())
    }
}

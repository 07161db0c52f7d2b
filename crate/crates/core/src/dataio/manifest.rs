//! Dataset manifests: one image path per line, optionally followed by a tab
//! and `train` or `test`. Blank lines and lines starting with `#` are skipped.
//! Relative paths are resolved against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub source: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn is_tagged(&self) -> bool {
        self.entries.first().is_some_and(|e| e.split.is_some())
    }
}

/// Parse manifest text. Does not touch the filesystem.
pub fn parse_manifest(text: &str, source: &Path) -> Result<Manifest> {
    let err = |line: usize, reason: String| Error::Manifest {
        path: source.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let base = source.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let path_str = parts.next().unwrap_or_default().trim();
        let split = match parts.next().map(str::trim) {
            None => None,
            Some("train") => Some(Split::Train),
            Some("test") => Some(Split::Test),
            Some(other) => return Err(err(i + 1, format!("unknown split '{other}'"))),
        };
        if parts.next().is_some() {
            return Err(err(i + 1, "too many fields".into()));
        }
        if path_str.is_empty() {
            return Err(err(i + 1, "empty path".into()));
        }
        let path = base.join(path_str);
        if !seen.insert(path.clone()) {
            return Err(err(i + 1, format!("duplicate path {}", path.display())));
        }
        entries.push(ManifestEntry { path, split });
    }
    if entries.is_empty() {
        return Err(Error::Manifest {
            path: source.to_path_buf(),
            reason: "no entries".into(),
        });
    }
    let tagged = entries[0].split.is_some();
    if entries.iter().any(|e| e.split.is_some() != tagged) {
        return Err(Error::Manifest {
            path: source.to_path_buf(),
            reason: "either every entry or no entry must carry a split tag".into(),
        });
    }
    Ok(Manifest {
        source: source.to_path_buf(),
        entries,
    })
}

/// Read and parse a manifest, checking that every listed file exists.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    let manifest = parse_manifest(&text, path)?;
    if let Some(missing) = manifest.entries.iter().find(|e| !e.path.is_file()) {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            reason: format!("missing file {}", missing.path.display()),
        });
    }
    Ok(manifest)
}

/// Train and test paths. Tagged manifests are honoured verbatim; otherwise a
/// seeded shuffle puts `test_count` entries in the test set.
pub fn split_dataset(manifest: &Manifest, test_count: usize, seed: u64) -> Result<(Vec<PathBuf>, Vec<PathBuf>)> {
    let (train, test) = if manifest.is_tagged() {
        let pick = |s: Split| {
            manifest
                .entries
                .iter()
                .filter(|e| e.split == Some(s))
                .map(|e| e.path.clone())
                .collect::<Vec<_>>()
        };
        (pick(Split::Train), pick(Split::Test))
    } else {
        if test_count > manifest.entries.len() {
            return Err(Error::invalid(format!(
                "test count {test_count} exceeds {} manifest entries",
                manifest.entries.len()
            )));
        }
        let mut paths: Vec<PathBuf> = manifest.entries.iter().map(|e| e.path.clone()).collect();
        SeededRng::new(seed).shuffle(&mut paths);
        let train = paths.split_off(test_count);
        (train, paths)
    };
    log::info!("{}: {} train / {} test", manifest.source.display(), train.len(), test.len());
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> PathBuf {
        PathBuf::from("/data/list.txt")
    }

    #[test]
    fn tags_are_honoured() {
        let m = parse_manifest("# header\na.pgm\ttrain\n\nb.pgm\ttest\nc.pgm\ttrain\n", &src()).unwrap();
        let (train, test) = split_dataset(&m, 99, 0).unwrap();
        assert_eq!(train, [PathBuf::from("/data/a.pgm"), PathBuf::from("/data/c.pgm")]);
        assert_eq!(test, [PathBuf::from("/data/b.pgm")]);
    }

    #[test]
    fn untagged_split_is_seeded() {
        let text: String = (0..300).map(|i| format!("img{i}.pgm\n")).collect();
        let m = parse_manifest(&text, &src()).unwrap();
        let (train, test) = split_dataset(&m, 15, 42).unwrap();
        assert_eq!((train.len(), test.len()), (285, 15));
        assert_eq!(split_dataset(&m, 15, 42).unwrap(), (train.clone(), test.clone()));
        assert_ne!(split_dataset(&m, 15, 43).unwrap().1, test);
        let all: HashSet<_> = train.iter().chain(&test).collect();
        assert_eq!(all.len(), 300);
    }

    #[test]
    fn absolute_paths_kept() {
        let m = parse_manifest("/abs/x.pgm\n", &src()).unwrap();
        assert_eq!(m.entries[0].path, PathBuf::from("/abs/x.pgm"));
    }

    #[test]
    fn malformed_manifests() {
        for text in ["", "# only comments\n", "a.pgm\na.pgm\n", "a.pgm\tvalidate\n", "a.pgm\ttrain\nb.pgm\n", "a\ttrain\textra\n"] {
            assert!(matches!(parse_manifest(text, &src()), Err(Error::Manifest { .. })), "{text:?}");
        }
    }

    #[test]
    fn too_many_test_images() {
        let m = parse_manifest("a\nb\n", &src()).unwrap();
        assert!(split_dataset(&m, 3, 0).is_err());
    }
}

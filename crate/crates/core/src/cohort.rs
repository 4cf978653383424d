//! Cohort directories: one sub-directory per study plus a manifest.
//!
//! `manifest.csv` has the header `case,label,lesions`; `label` is 1 for a
//! study with at least one annotated lesion and `lesions` counts them. Study
//! directories are named after the case.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phantom::{generate_phantom, PhantomSpec};
use crate::volume::{load_study_dir, save_study, Study};

pub const MANIFEST: &str = "manifest.csv";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub case: String,
    pub label: bool,
    pub lesions: usize,
}

impl ManifestEntry {
    pub fn of(study: &Study) -> Self {
        ManifestEntry {
            case: study.patient_id.clone(),
            label: study.has_lesion(),
            lesions: study.lesion_ids().len(),
        }
    }
}

/// Case name of the `i`-th phantom study.
pub fn phantom_case(i: usize) -> String {
    format!("case_{i:04}")
}

/// `count` phantom studies. Study `i` uses seed `spec.seed + i`; even studies
/// get `spec.n_lesions` lesions and odd ones none, so a cohort is balanced.
pub fn phantom_cohort(spec: &PhantomSpec, count: usize) -> Result<Vec<Study>> {
    spec.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = PhantomSpec {
                seed: spec.seed.wrapping_add(i as u64),
                n_lesions: if i % 2 == 0 { spec.n_lesions } else { 0 },
                ..spec.clone()
            };
            generate_phantom(&s, &phantom_case(i)).map(|r| r.0)
        })
        .collect()
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::from("case,label,lesions\n");
    for e in entries {
        text.push_str(&format!("{},{},{}\n", e.case, e.label as u8, e.lesions));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("case,label,lesions") {
        return Err(Error::Format(format!("{}: bad header", path.display())));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let bad = || Error::Format(format!("{} line {}: {line:?}", path.display(), n + 2));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let [case, label, lesions] = f[..] else {
                return Err(bad());
            };
            if case.is_empty() || case.contains(['/', '\\']) || case.starts_with('.') {
                return Err(bad());
            }
            let label = match label {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            Ok(ManifestEntry {
                case: case.to_string(),
                label,
                lesions: lesions.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Writes every study into `dir/<case>/` and the manifest.
pub fn write_cohort(dir: &Path, studies: &[Study]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    studies
        .par_iter()
        .try_for_each(|s| save_study(&dir.join(&s.patient_id), s))?;
    write_manifest(dir, &studies.iter().map(ManifestEntry::of).collect::<Vec<_>>())
}

pub fn study_dir(cohort: &Path, case: &str) -> PathBuf {
    cohort.join(case)
}

/// Loads every manifest study, checking labels against the lesion masks.
pub fn read_cohort(dir: &Path) -> Result<Vec<Study>> {
    let entries = read_manifest(dir)?;
    let studies: Vec<Study> = entries
        .par_iter()
        .map(|e| {
            let mut s = load_study_dir(&study_dir(dir, &e.case))?;
            s.patient_id = e.case.clone();
            Ok(s)
        })
        .collect::<Result<_>>()?;
    for (e, s) in entries.iter().zip(&studies) {
        if e.label != s.has_lesion() {
            return Err(Error::Ingest(format!(
                "{}: manifest label {} disagrees with the lesion mask",
                e.case, e.label as u8
            )));
        }
    }
    Ok(studies)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            ManifestEntry {
                case: "a".into(),
                label: true,
                lesions: 2,
            },
            ManifestEntry {
                case: "b".into(),
                label: false,
                lesions: 0,
            },
        ];
        write_manifest(dir.path(), &entries).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), entries);
        fs::write(dir.path().join(MANIFEST), "case,label,lesions\n../x,1,1\n").unwrap();
        assert!(matches!(read_manifest(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn cohort_alternates_labels() {
        let studies = phantom_cohort(&PhantomSpec::default(), 4).unwrap();
        let labels: Vec<bool> = studies.iter().map(Study::has_lesion).collect();
        assert_eq!(labels, [true, false, true, false]);
        assert_eq!(studies[3].patient_id, "case_0003");
    }
}

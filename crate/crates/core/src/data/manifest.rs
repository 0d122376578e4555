//! Cohort manifest: one patient per line, tab-separated
//!
//! ```text
//! # id  ADC  CBF  CBV  DWI  Tmax  mRS
//! p001  p001_ADC.nii  p001_CBF.nii  p001_CBV.nii  p001_DWI.nii  p001_Tmax.nii  3
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Relative volume paths
//! resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use super::{binarize_mrs, normalize_volume, parse_nifti, Cohort, Modality, PatientRecord, Provenance};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    /// In [`Modality::ALL`] order.
    pub paths: [PathBuf; 5],
    pub mrs: u8,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(Error::Data(format!(
                "manifest line {lineno}: expected 7 tab-separated fields, found {}",
                fields.len()
            )));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Data(format!("manifest line {lineno}: empty field")));
        }
        let mrs: u8 = fields[6]
            .parse()
            .map_err(|_| Error::Data(format!("manifest line {lineno}: invalid mRS `{}`", fields[6])))?;
        binarize_mrs(mrs).map_err(|_| Error::Data(format!("manifest line {lineno}: mRS {mrs} outside 0..=6")))?;
        entries.push(ManifestEntry {
            id: fields[0].to_string(),
            paths: std::array::from_fn(|m| PathBuf::from(fields[m + 1])),
            mrs,
        });
    }
    Ok(entries)
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::from("# id\tADC\tCBF\tCBV\tDWI\tTmax\tmRS\n");
    for e in entries {
        out.push_str(&e.id);
        for p in &e.paths {
            out.push('\t');
            out.push_str(&p.to_string_lossy());
        }
        out.push_str(&format!("\t{}\n", e.mrs));
    }
    out
}

/// Reads a manifest and every volume it names, normalizing each volume to `[0, 1]`.
pub fn load_manifest_cohort(manifest: &Path) -> Result<Cohort> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut patients = Vec::new();
    for entry in parse_manifest(&text)? {
        let mut volumes = Vec::with_capacity(5);
        for (m, rel) in Modality::ALL.into_iter().zip(&entry.paths) {
            let path = if rel.is_absolute() { rel.clone() } else { base.join(rel) };
            let bytes = fs::read(&path).map_err(|e| {
                Error::Data(format!(
                    "patient {}: cannot read {m} volume {}: {e}",
                    entry.id,
                    path.display()
                ))
            })?;
            let raw = parse_nifti(&bytes, m)
                .map_err(|e| Error::Data(format!("patient {}: {m} volume {}: {e}", entry.id, path.display())))?;
            volumes.push(normalize_volume(&raw)?);
        }
        let volumes: [_; 5] = volumes.try_into().expect("five modalities");
        patients.push(PatientRecord::new(entry.id, volumes, entry.mrs)?);
    }
    Cohort::new(patients, Provenance::Ingested)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_comments() {
        let entries = vec![ManifestEntry {
            id: "p1".into(),
            paths: std::array::from_fn(|m| PathBuf::from(format!("p1_{}.nii", Modality::ALL[m]))),
            mrs: 4,
        }];
        let text = write_manifest(&entries);
        assert!(text.starts_with('#'));
        assert_eq!(parse_manifest(&format!("{text}\n\n")).unwrap(), entries);
    }

    #[test]
    fn bad_line_cites_line_number() {
        let text = "# header\np1\ta\tb\tc\td\te\t2\np2\ta\tb\tc\n";
        let err = parse_manifest(text).unwrap_err();
        assert!(matches!(err, Error::Data(ref m) if m.contains("line 3")), "{err}");
        let err = parse_manifest("p1\ta\tb\tc\td\te\tnine\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
        let err = parse_manifest("p1\ta\tb\tc\td\te\t8\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}

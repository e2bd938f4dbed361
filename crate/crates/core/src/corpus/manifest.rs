use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRecord {
    pub url: String,
    pub page_id: String,
    pub title: String,
    /// Relative to the institution directory.
    pub html_path: Option<PathBuf>,
    pub text_path: Option<PathBuf>,
    /// Reserved; pages are archived as HTML plus extracted text.
    pub pdf_path: Option<PathBuf>,
    pub fetched_at: DateTime<Utc>,
    pub status: PageStatus,
    pub content_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PageRecord {
    /// Ok records must point at an existing file whose hash matches.
    pub fn verify(&self, inst_dir: &Path) -> bool {
        match self.status {
            PageStatus::Failed => true,
            PageStatus::Ok => match (&self.html_path, &self.content_hash) {
                (Some(p), Some(h)) => fs::read(inst_dir.join(p)).is_ok_and(|b| &sha256_hex(&b) == h),
                _ => false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub record: PageRecord,
    /// True when the page is new or its hash differs from the prior version.
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub institution: String,
    pub seed_url: String,
    pub pages: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "index.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let io = |e| CorpusError::io(path, e);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension(format!(
        "{}tmp",
        path.extension().map(|e| format!("{}.", e.to_string_lossy())).unwrap_or_default()
    ));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Entries are sorted by URL so the file is stable across runs.
pub fn write_manifest(
    inst_dir: &Path,
    version: &str,
    institution: &str,
    seed_url: &str,
    records: &[PageRecord],
    prior: Option<&Manifest>,
) -> Result<Manifest, CorpusError> {
    let mut pages: Vec<ManifestEntry> = records
        .iter()
        .map(|r| {
            let before = prior.and_then(|m| m.pages.iter().find(|e| e.record.url == r.url));
            let changed = before.is_none_or(|e| e.record.content_hash != r.content_hash);
            ManifestEntry { record: r.clone(), changed }
        })
        .collect();
    pages.sort_by(|a, b| a.record.url.cmp(&b.record.url));
    let manifest = Manifest {
        version: version.to_owned(),
        institution: institution.to_owned(),
        seed_url: seed_url.to_owned(),
        pages,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&inst_dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CorpusError::Json { path: path.to_owned(), source: e })
}

/// The manifest of the greatest version name below `version` that has one
/// for this institution.
pub fn find_prior_manifest(out_root: &Path, version: &str, institution_dir: &str) -> Option<Manifest> {
    let mut versions: Vec<String> = fs::read_dir(out_root)
        .ok()?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|v| v.as_str() < version)
        .collect();
    versions.sort();
    versions
        .iter()
        .rev()
        .find_map(|v| read_manifest(&out_root.join(v).join(institution_dir).join(MANIFEST_FILE)).ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(url: &str, hash: &str) -> PageRecord {
        PageRecord {
            url: url.into(),
            page_id: "p".into(),
            title: "t".into(),
            html_path: Some("pages/x.html".into()),
            text_path: Some("pages/x.txt".into()),
            pdf_path: None,
            fetched_at: DateTime::from_timestamp(0, 0).unwrap(),
            status: PageStatus::Ok,
            content_hash: Some(hash.into()),
            error: None,
        }
    }

    #[test]
    fn two_entries_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_manifest(dir.path(), "v1", "uni.edu", "https://uni.edu/", &[rec("https://uni.edu/b", "2"), rec("https://uni.edu/a", "1")], None)
            .unwrap();
        assert_eq!(m.pages.len(), 2);
        assert_eq!(m.pages[0].record.url, "https://uni.edu/a");
        assert!(m.pages.iter().all(|p| p.changed));
        assert_eq!(read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
    }

    #[test]
    fn differential_flags() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [rec("https://uni.edu/a", "1"), rec("https://uni.edu/b", "2")];
        let v1 = write_manifest(dir.path(), "v1", "u", "s", &recs, None).unwrap();
        let v2 = write_manifest(dir.path(), "v2", "u", "s", &recs, Some(&v1)).unwrap();
        assert!(v2.pages.iter().all(|p| !p.changed));
        let v3 = write_manifest(dir.path(), "v3", "u", "s", &[recs[0].clone(), rec("https://uni.edu/b", "9")], Some(&v2)).unwrap();
        assert_eq!(v3.pages.iter().filter(|p| p.changed).count(), 1);
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cp.json");
        write_atomic(&p, b"{}").unwrap();
        write_atomic(&p, b"[]").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"[]");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

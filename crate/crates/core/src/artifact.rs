//! Versioned artifact files: one header line `idsdetect/<kind>/v<version>`
//! followed by a JSON body. Floats are written in shortest round-trip form,
//! so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn header(kind: &str) -> String {
    format!("idsdetect/{kind}/v{FORMAT_VERSION}")
}

pub fn to_string<T: Serialize>(kind: &str, value: &T) -> Result<String> {
    let mut out = header(kind);
    out.push('\n');
    out.push_str(&serde_json::to_string(value)?);
    out.push('\n');
    Ok(out)
}

pub fn from_str<T: DeserializeOwned>(kind: &str, text: &str, origin: &str) -> Result<T> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let expected = header(kind);
    if first.trim_end() != expected {
        return Err(Error::Version {
            path: origin.to_string(),
            expected,
            found: first.trim_end().to_string(),
        });
    }
    Ok(serde_json::from_str(body)?)
}

pub fn save<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<()> {
    let text = to_string(kind, value)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = read_required(path)?;
    from_str(kind, &text, &path.display().to_string())
}

/// Reads a file that a previous stage should have produced.
pub fn read_required(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_other_kinds_and_versions() {
        let text = to_string("gmm", &vec![0.1f64, 1.0 / 3.0]).unwrap();
        assert!(text.starts_with("idsdetect/gmm/v1\n"));
        let back: Vec<f64> = from_str("gmm", &text, "mem").unwrap();
        assert_eq!(back, vec![0.1, 1.0 / 3.0]);
        assert!(matches!(
            from_str::<Vec<f64>>("lda", &text, "mem"),
            Err(Error::Version { .. })
        ));
        let bumped = text.replace("/v1", "/v2");
        assert!(matches!(
            from_str::<Vec<f64>>("gmm", &bumped, "mem"),
            Err(Error::Version { .. })
        ));
    }

    #[test]
    fn missing_file_is_named() {
        let err = load::<Vec<f64>>(Path::new("/nonexistent/x.json"), "gmm").unwrap_err();
        match err {
            Error::MissingArtifact(p) => assert_eq!(p, Path::new("/nonexistent/x.json")),
            other => panic!("unexpected {other:?}"),
        }
    }
}

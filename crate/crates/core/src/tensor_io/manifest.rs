//! Sidecar manifest mapping image ids to tensor files for one model.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: u64,
    /// Relative paths resolve against the manifest's directory.
    pub tensor_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorManifest {
    pub model: String,
    pub entries: Vec<ManifestEntry>,
}

impl TensorManifest {
    pub fn parse(json_text: &str) -> Result<Self> {
        let mut m: TensorManifest = serde_json::from_str(json_text)?;
        m.entries.sort_by_key(|e| e.image_id);
        if let Some(w) = m.entries.windows(2).find(|w| w[0].image_id == w[1].image_id) {
            return Err(Error::Schema(format!("manifest lists image {} twice", w[0].image_id)));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for e in &mut m.entries {
            if e.tensor_path.is_relative() {
                e.tensor_path = base.join(&e.tensor_path);
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_and_rejects_duplicates() {
        let m = TensorManifest::parse(
            r#"{"model": "vit", "entries": [{"image_id": 5, "tensor_path": "b.npy"},
                                           {"image_id": 2, "tensor_path": "a.npy"}]}"#,
        )
        .unwrap();
        assert_eq!(m.entries[0].image_id, 2);
        let dup = r#"{"model": "vit", "entries": [{"image_id": 1, "tensor_path": "a"}, {"image_id": 1, "tensor_path": "b"}]}"#;
        assert!(matches!(TensorManifest::parse(dup), Err(Error::Schema(_))));
    }
}

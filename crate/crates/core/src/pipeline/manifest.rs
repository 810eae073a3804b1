use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: String,
    /// Mesh file, relative to the manifest's directory unless absolute.
    pub mesh: PathBuf,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// List of subjects with their mesh files and class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    /// Exactly two class names; the second is the positive class by default.
    pub classes: Vec<String>,
    #[serde(rename = "subject", default)]
    pub subjects: Vec<SubjectEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(classes: [String; 2], subjects: Vec<SubjectEntry>) -> Result<Self> {
        let m = DatasetManifest {
            version: MANIFEST_VERSION,
            classes: classes.to_vec(),
            subjects,
            base_dir: PathBuf::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: DatasetManifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        DatasetManifest::from_toml(&text, base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string_pretty(self).map_err(|e| Error::Manifest(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Manifest(m));
        if self.version != MANIFEST_VERSION {
            return bad(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            ));
        }
        if self.classes.len() != 2 || self.classes[0] == self.classes[1] {
            return bad("manifest must declare exactly two distinct classes".into());
        }
        let mut seen = HashSet::new();
        for s in &self.subjects {
            if !seen.insert(s.id.as_str()) {
                return bad(format!("duplicate subject id {:?}", s.id));
            }
            if !self.classes.contains(&s.label) {
                return bad(format!(
                    "subject {:?} has label {:?}, which is not a declared class",
                    s.id, s.label
                ));
            }
        }
        Ok(())
    }

    pub fn mesh_path(&self, s: &SubjectEntry) -> PathBuf {
        if s.mesh.is_absolute() {
            s.mesh.clone()
        } else {
            self.base_dir.join(&s.mesh)
        }
    }

    /// Index of the positive class: the named one, or the second class.
    pub fn positive_index(&self, positive: Option<&str>) -> Result<usize> {
        match positive {
            None => Ok(1),
            Some(name) => self.classes.iter().position(|c| c == name).ok_or_else(|| {
                Error::Config(format!("positive class {name:?} is not declared in the manifest"))
            }),
        }
    }

    /// Binary label (1 = positive) of a subject.
    pub fn binary_label(&self, s: &SubjectEntry, positive: usize) -> usize {
        usize::from(self.classes[positive] == s.label)
    }

    pub fn class_names(&self, positive: usize) -> [String; 2] {
        [self.classes[1 - positive].clone(), self.classes[positive].clone()]
    }

    /// Fails unless both classes have at least `min` subjects.
    pub fn require_per_class(&self, min: usize) -> Result<()> {
        for c in &self.classes {
            let n = self.subjects.iter().filter(|s| &s.label == c).count();
            if n < min {
                return Err(Error::Manifest(format!(
                    "class {c:?} has {n} subjects; at least {min} are required"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
version = 1
classes = ["smooth", "bumpy"]

[[subject]]
id = "a"
mesh = "meshes/a.off"
label = "smooth"

[[subject]]
id = "b"
mesh = "/abs/b.off"
label = "bumpy"
seed = 9
"#;

    #[test]
    fn parses_and_resolves_paths() {
        let m = DatasetManifest::from_toml(TEXT, "/data").unwrap();
        assert_eq!(m.subjects.len(), 2);
        assert_eq!(m.mesh_path(&m.subjects[0]), PathBuf::from("/data/meshes/a.off"));
        assert_eq!(m.mesh_path(&m.subjects[1]), PathBuf::from("/abs/b.off"));
        assert_eq!(m.subjects[1].seed, Some(9));
        assert_eq!(m.binary_label(&m.subjects[1], 1), 1);
        assert_eq!(m.binary_label(&m.subjects[1], m.positive_index(Some("smooth")).unwrap()), 0);
        assert!(m.positive_index(Some("other")).is_err());
        assert!(m.require_per_class(1).is_ok());
        assert!(m.require_per_class(2).is_err());
    }

    #[test]
    fn rejects_bad_manifests() {
        for text in [
            TEXT.replace("version = 1", "version = 2"),
            TEXT.replace("label = \"bumpy\"", "label = \"spiky\""),
            TEXT.replace("id = \"b\"", "id = \"a\""),
            TEXT.replace("[\"smooth\", \"bumpy\"]", "[\"smooth\"]"),
        ] {
            assert!(matches!(DatasetManifest::from_toml(&text, ""), Err(Error::Manifest(_))));
        }
    }
}

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::load_mask;
use crate::datagen::{DistortionSpec, MaskGranularity};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Authentic,
    Forged,
}

impl Label {
    /// Class index used by the decision head: 0 = authentic, 1 = forged.
    pub fn index(self) -> usize {
        match self {
            Label::Authentic => 0,
            Label::Forged => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Label::Authentic
        } else {
            Label::Forged
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ForgeryType {
    #[serde(rename = "splicing")]
    Splicing,
    #[serde(rename = "copy-move")]
    CopyMove,
    #[serde(rename = "removal")]
    Removal,
    #[serde(rename = "none")]
    None,
}

impl ForgeryType {
    pub const FORGED: [ForgeryType; 3] = [
        ForgeryType::Splicing,
        ForgeryType::CopyMove,
        ForgeryType::Removal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ForgeryType::Splicing => "splicing",
            ForgeryType::CopyMove => "copy-move",
            ForgeryType::Removal => "removal",
            ForgeryType::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ForgeryType::Splicing,
            ForgeryType::CopyMove,
            ForgeryType::Removal,
            ForgeryType::None,
        ]
        .into_iter()
        .find(|t| t.as_str() == s)
    }
}

impl fmt::Display for ForgeryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory unless absolute.
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub label: Label,
    pub forgery_type: ForgeryType,
    #[serde(default)]
    pub distortions: Vec<DistortionSpec>,
    pub seed: u64,
    #[serde(default)]
    pub caption: String,
    /// Mask regime used at synthesis time, kept so the entry can be rebuilt
    /// from its seed alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<MaskGranularity>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Self {
        Self {
            entries,
            root: root.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Directory that relative entry paths are resolved against.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One broken rule on one entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub entry_id: String,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entry_id, self.rule)
    }
}

/// Check every manifest invariant; an empty result means the manifest is
/// well formed. Masks are read from disk.
pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for e in &manifest.entries {
        let mut flag = |rule| {
            out.push(Violation {
                entry_id: e.id.clone(),
                rule,
            })
        };
        if !seen.insert(e.id.as_str()) {
            flag("ids-unique");
        }
        match (e.label, e.forgery_type) {
            (Label::Authentic, t) if t != ForgeryType::None => flag("authentic-type-none"),
            (Label::Forged, ForgeryType::None) => flag("forged-needs-type"),
            _ => {}
        }
        match load_mask(manifest.resolve(&e.mask_path)) {
            Err(_) => flag("mask-readable"),
            Ok(mask) => match e.label {
                Label::Forged if mask.positives() == 0 => flag("forged-needs-positive-mask"),
                Label::Authentic if mask.positives() != 0 => flag("authentic-needs-empty-mask"),
                _ => {}
            },
        }
    }
    out
}

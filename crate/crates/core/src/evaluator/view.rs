use std::collections::BTreeMap;

use serde_json::Value;

use crate::hash::ContentHash;
use crate::ingest::{ArtifactBundle, BundleStore, MediaKind};

/// One artifact as seen by the evaluator.
#[derive(Debug, Clone, PartialEq)]
pub enum ArtifactContent {
    Structured { bytes: Vec<u8>, value: Value },
    Text(String),
    Binary(Vec<u8>),
    /// Present in the manifest but unusable: unreadable, hash mismatch or
    /// unparsable. Every atom over it is undetermined.
    Malformed(String),
}

impl ArtifactContent {
    pub fn from_bytes(media_kind: MediaKind, bytes: Vec<u8>) -> Self {
        match media_kind {
            MediaKind::Structured => match serde_json::from_slice(&bytes) {
                Ok(value) => ArtifactContent::Structured { bytes, value },
                Err(e) => ArtifactContent::Malformed(format!("structured artifact does not parse: {e}")),
            },
            MediaKind::Text => match String::from_utf8(bytes) {
                Ok(text) => ArtifactContent::Text(text),
                Err(_) => ArtifactContent::Malformed("text artifact is not UTF-8".into()),
            },
            MediaKind::Binary => ArtifactContent::Binary(bytes),
        }
    }

    /// Text searched by `text_matches`.
    pub fn searchable_text(&self) -> Option<std::borrow::Cow<'_, str>> {
        match self {
            ArtifactContent::Structured { bytes, .. } | ArtifactContent::Binary(bytes) => {
                Some(String::from_utf8_lossy(bytes))
            }
            ArtifactContent::Text(t) => Some(t.into()),
            ArtifactContent::Malformed(_) => None,
        }
    }
}

/// Role-addressed artifacts of one bundle, loaded and checked.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BundleView {
    artifacts: BTreeMap<String, ArtifactContent>,
}

impl BundleView {
    pub fn empty() -> Self {
        BundleView::default()
    }

    /// Reads every entry, verifying content hashes.
    pub fn load(store: &BundleStore, bundle: &ArtifactBundle) -> Self {
        let dir = store.bundle_dir(&bundle.bundle_id);
        let artifacts = bundle
            .entries
            .iter()
            .map(|e| {
                let content = match std::fs::read(dir.join(&e.path)) {
                    Err(err) => ArtifactContent::Malformed(format!("cannot read {}: {err}", e.path)),
                    Ok(bytes) if ContentHash::of_bytes(&bytes) != e.content_hash => {
                        ArtifactContent::Malformed(format!("{} does not match its content hash", e.path))
                    }
                    Ok(bytes) => ArtifactContent::from_bytes(e.media_kind, bytes),
                };
                (e.role.clone(), content)
            })
            .collect();
        BundleView { artifacts }
    }

    pub fn insert(&mut self, role: impl Into<String>, content: ArtifactContent) {
        self.artifacts.insert(role.into(), content);
    }

    pub fn with_json(mut self, role: &str, value: Value) -> Self {
        let bytes = serde_json::to_vec(&value).expect("json values serialize");
        self.insert(role, ArtifactContent::Structured { bytes, value });
        self
    }

    pub fn with_text(mut self, role: &str, text: &str) -> Self {
        self.insert(role, ArtifactContent::Text(text.to_string()));
        self
    }

    pub fn get(&self, role: &str) -> Option<&ArtifactContent> {
        self.artifacts.get(role)
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.artifacts.keys().map(String::as_str)
    }

    /// Roles present but unusable, with the reason.
    pub fn malformed(&self) -> impl Iterator<Item = (&str, &str)> {
        self.artifacts.iter().filter_map(|(role, c)| match c {
            ArtifactContent::Malformed(why) => Some((role.as_str(), why.as_str())),
            _ => None,
        })
    }
}

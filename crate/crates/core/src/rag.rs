//! External reference material placed right after the system prompt.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::memory::{MemoryBranch, Supplement};
use crate::prompts;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RagError {
    #[error("reference material has no documents")]
    Empty,
    #[error("reference level must be 1, 2 or 3, got {0}")]
    Level(u8),
}

/// Tier of a material; 1 carries the strongest hints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RagLevel(u8);

impl RagLevel {
    pub fn new(level: u8) -> Result<Self, RagError> {
        if (1..=3).contains(&level) {
            Ok(Self(level))
        } else {
            Err(RagError::Level(level))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for RagLevel {
    type Error = RagError;
    fn try_from(v: u8) -> Result<Self, RagError> {
        Self::new(v)
    }
}

impl From<RagLevel> for u8 {
    fn from(l: RagLevel) -> u8 {
        l.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RagMaterial {
    id: String,
    level: RagLevel,
    documents: Vec<String>,
}

#[derive(Deserialize)]
struct RawMaterial {
    id: String,
    level: RagLevel,
    documents: Vec<String>,
}

impl<'de> Deserialize<'de> for RagMaterial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawMaterial::deserialize(d)?;
        Self::new(raw.id, raw.level, raw.documents).map_err(serde::de::Error::custom)
    }
}

impl RagMaterial {
    /// Blank documents are dropped; at least one must remain.
    pub fn new(id: impl Into<String>, level: RagLevel, documents: Vec<String>) -> Result<Self, RagError> {
        let documents: Vec<String> = documents.into_iter().filter(|d| !d.trim().is_empty()).collect();
        if documents.is_empty() {
            return Err(RagError::Empty);
        }
        Ok(Self {
            id: id.into(),
            level,
            documents,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn level(&self) -> RagLevel {
        self.level
    }

    pub fn documents(&self) -> &[String] {
        &self.documents
    }

    pub fn render(&self) -> String {
        let mut out = prompts::rag_header(self.level.0);
        for d in &self.documents {
            out.push_str("\n\n");
            out.push_str(d.trim());
        }
        out
    }
}

/// Adds the material after the system prompt. Returns false if material
/// with the same id is already there.
pub fn inject_rag(memory: &mut MemoryBranch, material: &RagMaterial) -> bool {
    memory.inject_supplement(Supplement {
        id: material.id.clone(),
        content: material.render(),
    })
}

/// Renders rows as a Markdown table.
pub fn markdown_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n|", headers.join(" | "));
    for _ in headers {
        out.push_str(" --- |");
    }
    for row in rows {
        out.push_str(&format!("\n| {} |", row.join(" | ")));
    }
    out
}

//! Appearance-complexity scoring of object categories.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default gate: a category is complex when its aggregate exceeds this.
pub const DEFAULT_THRESHOLD: f64 = 60.0;

/// Prompt sent to a chat model once per metric.
pub const PROMPT_TEMPLATE: &str = "I have a dataset containing object IDs and their corresponding categories. \
Could you please assign a score (from 0 to 100) to each category based on its potential to contain {parameter}? \
{object list}";

/// Closed category vocabulary shared by the detector, the simulator and the
/// prior table.
pub const VOCABULARY: &[&str] = &[
    "backpack",
    "banana",
    "bed",
    "bench",
    "book",
    "bottle",
    "bowl",
    "cabinet",
    "ceiling",
    "cellphone",
    "chair",
    "clock",
    "couch",
    "cup",
    "desk",
    "door",
    "floor",
    "keyboard",
    "laptop",
    "lamp",
    "monitor",
    "mouse",
    "plant",
    "refrigerator",
    "scissors",
    "shelf",
    "sink",
    "table",
    "teddy bear",
    "vase",
    "wall",
    "window",
    "wine glass",
];

pub fn in_vocabulary(category: &str) -> bool {
    VOCABULARY.contains(&category)
}

/// The five appearance metrics, in prompt order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    GeometricComplexity,
    TextureComplexity,
    Size,
    Specularity,
    Transparency,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::GeometricComplexity,
        Metric::TextureComplexity,
        Metric::Size,
        Metric::Specularity,
        Metric::Transparency,
    ];

    /// Wording substituted into the prompt.
    pub fn name(self) -> &'static str {
        match self {
            Metric::GeometricComplexity => "geometric complexity",
            Metric::TextureComplexity => "texture complexity",
            Metric::Size => "size",
            Metric::Specularity => "specularity",
            Metric::Transparency => "transparency",
        }
    }

    /// Column name in the prior table file.
    pub fn column(self) -> &'static str {
        match self {
            Metric::GeometricComplexity => "geometric",
            Metric::TextureComplexity => "texture",
            Metric::Size => "size",
            Metric::Specularity => "specularity",
            Metric::Transparency => "transparency",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s || m.column() == s)
            .ok_or_else(|| Error::InvalidParameter(s.to_string()))
    }
}

/// Fill the prompt template for `parameter` with the given categories, listed
/// as `index: category` lines.
pub fn render_prompt(parameter: &str, categories: &[&str]) -> Result<String> {
    let metric = Metric::from_str(parameter)?;
    let mut list = String::new();
    for (i, c) in categories.iter().enumerate() {
        if i > 0 {
            list.push('\n');
        }
        list.push_str(&alloc::format!("{i}: {c}"));
    }
    Ok(PROMPT_TEMPLATE
        .replace("{parameter}", metric.name())
        .replace("{object list}", &list))
}

/// Per-category scores in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub geometric: u8,
    pub texture: u8,
    pub size: u8,
    pub specularity: u8,
    pub transparency: u8,
}

impl CategoryScores {
    pub fn new(geometric: u8, texture: u8, size: u8, specularity: u8, transparency: u8) -> Result<Self> {
        let s = Self {
            geometric,
            texture,
            size,
            specularity,
            transparency,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values().iter().any(|&v| v > 100) {
            return Err(Error::InvalidTable("score outside [0, 100]".to_string()));
        }
        Ok(())
    }

    pub fn values(&self) -> [u8; 5] {
        [self.geometric, self.texture, self.size, self.specularity, self.transparency]
    }

    pub fn get(&self, metric: Metric) -> u8 {
        match metric {
            Metric::GeometricComplexity => self.geometric,
            Metric::TextureComplexity => self.texture,
            Metric::Size => self.size,
            Metric::Specularity => self.specularity,
            Metric::Transparency => self.transparency,
        }
    }
}

/// Mean of the five metric scores.
pub fn aggregate_score(scores: &CategoryScores) -> f64 {
    let sum: u32 = scores.values().iter().map(|&v| u32::from(v)).sum();
    f64::from(sum) / 5.0
}

/// Immutable category → scores map covering the whole vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    entries: BTreeMap<String, CategoryScores>,
    provenance: String,
}

impl PriorTable {
    /// Rejects duplicate rows, out-of-range scores, categories outside the
    /// vocabulary and vocabulary entries without a row.
    pub fn new(rows: Vec<(String, CategoryScores)>, provenance: impl Into<String>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (category, scores) in rows {
            scores.validate()?;
            if !in_vocabulary(&category) {
                return Err(Error::InvalidTable(alloc::format!("category {category:?} is not in the vocabulary")));
            }
            if entries.insert(category.clone(), scores).is_some() {
                return Err(Error::InvalidTable(alloc::format!("duplicate category {category:?}")));
            }
        }
        if let Some(missing) = VOCABULARY.iter().find(|c| !entries.contains_key(**c)) {
            return Err(Error::InvalidTable(alloc::format!("missing category {missing:?}")));
        }
        Ok(Self {
            entries,
            provenance: provenance.into(),
        })
    }

    pub fn get(&self, category: &str) -> Result<&CategoryScores> {
        self.entries
            .get(category)
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))
    }

    pub fn score(&self, category: &str) -> Result<f64> {
        self.get(category).map(aggregate_score)
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CategoryScores)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// True when the category's aggregate score is strictly above `threshold`.
pub fn is_complex(category: &str, table: &PriorTable, threshold: f64) -> Result<bool> {
    Ok(table.score(category)? > threshold)
}

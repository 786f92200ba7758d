//! Animate / inanimate / excluded classification of COCO categories.
//!
//! The default table ships as `config/coco_categories.json`; a replacement
//! file with the same schema can be loaded to swap the lists.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../config/coco_categories.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryClass {
    Animate,
    Inanimate,
    /// Images containing any of these are dropped from the animacy analysis.
    Excluded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub id: u64,
    pub name: String,
    pub class: CategoryClass,
}

#[derive(Debug, Clone)]
pub struct CategoryTable {
    entries: BTreeMap<u64, CategoryEntry>,
}

#[derive(Deserialize)]
struct TableFile {
    categories: Vec<CategoryEntry>,
}

impl CategoryTable {
    pub fn coco_default() -> Self {
        Self::parse(DEFAULT_TABLE).expect("bundled category table is valid")
    }

    pub fn parse(json_text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(json_text)?;
        let mut entries = BTreeMap::new();
        for e in file.categories {
            let id = e.id;
            if entries.insert(id, e).is_some() {
                return Err(Error::Schema(format!("category {id} listed twice")));
            }
        }
        Ok(Self { entries })
    }

    pub fn classify(&self, category_id: u64) -> Result<CategoryClass> {
        self.entries.get(&category_id).map(|e| e.class).ok_or(Error::UnknownCategory(category_id))
    }

    pub fn name(&self, category_id: u64) -> Option<&str> {
        self.entries.get(&category_id).map(|e| e.name.as_str())
    }

    pub fn ids_of(&self, class: CategoryClass) -> Vec<u64> {
        self.entries.values().filter(|e| e.class == class).map(|e| e.id).collect()
    }
}

impl Default for CategoryTable {
    fn default() -> Self {
        Self::coco_default()
    }
}

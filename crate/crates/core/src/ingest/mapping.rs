use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_error, read_text, IngestError};
use crate::CategoryId;

/// Per-city raw label to function-category table.
///
/// Category ids form the contiguous set `1..=K`. Labels missing from
/// `entries` fall back to `default` when one is configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMapping {
    pub city: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<CategoryId>,
    pub entries: BTreeMap<String, CategoryId>,
}

impl CategoryMapping {
    pub fn new(
        city: impl Into<String>,
        entries: BTreeMap<String, CategoryId>,
        default: Option<CategoryId>,
    ) -> Result<Self, IngestError> {
        let m = CategoryMapping {
            city: city.into(),
            default,
            entries,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let m: CategoryMapping = serde_json::from_str(text).map_err(|e| parse_error(text, 0, 0, &e))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        Self::from_json(&read_text(path.as_ref())?)
    }

    /// Identity table `C1 -> 1 ... Ck -> k`, used by the synthetic scenes.
    pub fn numbered(city: impl Into<String>, prefix: &str, count: u32) -> Self {
        let entries = (1..=count).map(|k| (format!("{prefix}{k}"), CategoryId(k))).collect();
        CategoryMapping {
            city: city.into(),
            default: None,
            entries,
        }
    }

    fn validate(&self) -> Result<(), IngestError> {
        let ids: BTreeSet<u32> = self.entries.values().chain(self.default.iter()).map(|c| c.0).collect();
        let Some(&max) = ids.iter().next_back() else {
            return Err(IngestError::Mapping(format!("{}: no categories defined", self.city)));
        };
        if ids.len() as u32 != max || ids.contains(&0) {
            return Err(IngestError::Mapping(format!(
                "{}: category ids must be exactly 1..={max}, got {ids:?}",
                self.city
            )));
        }
        Ok(())
    }

    pub fn resolve(&self, label: &str) -> Option<CategoryId> {
        self.entries.get(label).copied().or(self.default)
    }

    /// `K`, the number of categories.
    pub fn category_count(&self) -> u32 {
        self.entries.values().chain(self.default.iter()).map(|c| c.0).max().unwrap_or(0)
    }

    /// `(id, name)` pairs in id order. A category's name joins the labels
    /// that map to it; a category reachable only through the default is
    /// named `<city>-default`.
    pub fn categories(&self) -> Vec<(CategoryId, String)> {
        let mut names: BTreeMap<CategoryId, Vec<&str>> = BTreeMap::new();
        for (label, id) in &self.entries {
            names.entry(*id).or_default().push(label);
        }
        (1..=self.category_count())
            .map(|k| {
                let id = CategoryId(k);
                let name = match names.get(&id) {
                    Some(labels) => labels.join("|"),
                    None => format!("{}-default", self.city),
                };
                (id, name)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config_with_default() {
        let m = CategoryMapping::from_json(r#"{"city":"ny","default":5,"entries":{"A":1,"B":2,"C":3,"D":4}}"#).unwrap();
        assert_eq!(m.resolve("B"), Some(CategoryId(2)));
        assert_eq!(m.resolve("R1"), Some(CategoryId(5)));
        assert_eq!(m.category_count(), 5);
        assert_eq!(m.categories()[4].1, "ny-default");
    }

    #[test]
    fn rejects_gaps_and_zero() {
        assert!(CategoryMapping::from_json(r#"{"city":"x","entries":{"A":1,"B":3}}"#).is_err());
        assert!(CategoryMapping::from_json(r#"{"city":"x","entries":{"A":0,"B":1}}"#).is_err());
        assert!(CategoryMapping::from_json(r#"{"city":"x","entries":{}}"#).is_err());
    }

    #[test]
    fn shared_category_names_join_labels() {
        let m = CategoryMapping::from_json(r#"{"city":"la","entries":{"R1":1,"R2":1,"C":2}}"#).unwrap();
        assert_eq!(m.categories(), vec![(CategoryId(1), "R1|R2".into()), (CategoryId(2), "C".into())]);
        assert_eq!(m.resolve("X"), None);
    }
}

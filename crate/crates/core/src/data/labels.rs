use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Stimulus → category assignment over a declared category set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryLabels {
    categories: BTreeSet<String>,
    labels: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct LabelRow {
    stimulus_id: String,
    category: String,
}

impl CategoryLabels {
    /// With `declared = None` the category set is whatever the labels use.
    pub fn new(labels: BTreeMap<String, String>, declared: Option<BTreeSet<String>>) -> Result<Self, DataError> {
        let categories = match declared {
            Some(set) => {
                if let Some((id, cat)) = labels.iter().find(|(_, c)| !set.contains(*c)) {
                    return Err(DataError::Invariant(format!(
                        "stimulus {id} labelled with undeclared category {cat:?}"
                    )));
                }
                set
            }
            None => labels.values().cloned().collect(),
        };
        Ok(Self { categories, labels })
    }

    /// Parses `stimulus_id,category`.
    pub fn from_csv_reader(reader: impl Read, declared: Option<BTreeSet<String>>) -> Result<Self, DataError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut labels = BTreeMap::new();
        for row in rdr.deserialize::<LabelRow>() {
            let row = row.map_err(|e| DataError::Csv(e.to_string()))?;
            if labels.insert(row.stimulus_id.clone(), row.category).is_some() {
                return Err(DataError::DuplicateId(row.stimulus_id));
            }
        }
        Self::new(labels, declared)
    }

    pub fn load(path: impl AsRef<Path>, declared: Option<BTreeSet<String>>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        Self::from_csv_reader(file, declared)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Csv(e.to_string()))?;
        w.write_record(["stimulus_id", "category"]).map_err(|e| DataError::Csv(e.to_string()))?;
        for (id, cat) in &self.labels {
            w.write_record([id, cat]).map_err(|e| DataError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| DataError::io(path, e))
    }

    pub fn category_of(&self, stimulus_id: &str) -> Option<&str> {
        self.labels.get(stimulus_id).map(String::as_str)
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.labels.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_csv() {
        let csv = "stimulus_id,category\na,fruit\nb,bird\n";
        let l = CategoryLabels::from_csv_reader(csv.as_bytes(), None).unwrap();
        assert_eq!(l.category_of("b"), Some("bird"));
        assert_eq!(l.categories().len(), 2);
    }

    #[test]
    fn undeclared_category_rejected() {
        let csv = "stimulus_id,category\na,fruit\n";
        let declared = Some(["bird".to_string()].into_iter().collect());
        assert!(CategoryLabels::from_csv_reader(csv.as_bytes(), declared).is_err());
    }
}

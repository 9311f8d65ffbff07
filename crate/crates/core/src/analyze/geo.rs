//! Country to geographic-group lookup for regression controls.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../assets/sdg_groups.csv");

/// Group every dummy block is measured against.
pub const REFERENCE_GROUP: &str = "Sub-Saharan Africa";

#[derive(Debug, Clone, PartialEq)]
pub struct GeoGroups {
    groups: BTreeMap<String, String>,
    reference: String,
}

#[derive(Deserialize)]
struct Row {
    iso2: String,
    group: String,
}

impl GeoGroups {
    /// The bundled UN SDG regional map, collapsed to five groups.
    pub fn builtin() -> Self {
        Self::read_csv(BUILTIN.as_bytes(), Path::new("<builtin sdg_groups.csv>"))
            .expect("bundled geo map parses")
    }

    /// Reads `iso2,...,group` rows; extra columns are ignored and `#` lines
    /// are comments.
    pub fn read_csv(reader: impl Read, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut groups = BTreeMap::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
            let code = row.iso2.to_ascii_uppercase();
            if groups.insert(code.clone(), row.group).is_some() {
                return Err(Error::parse(
                    path,
                    i + 2,
                    format!("duplicate country {code}"),
                ));
            }
        }
        if groups.is_empty() {
            return Err(Error::parse(path, 1, "geo map has no rows"));
        }
        let out = GeoGroups {
            groups,
            reference: REFERENCE_GROUP.to_string(),
        };
        if !out.labels().contains(REFERENCE_GROUP) {
            return Err(Error::parse(
                path,
                1,
                format!("no country maps to {REFERENCE_GROUP:?}"),
            ));
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f, path)
    }

    pub fn group_of(&self, iso2: &str) -> Option<&str> {
        self.groups
            .get(&iso2.to_ascii_uppercase())
            .map(String::as_str)
    }

    /// ISO2 codes in ascending order.
    pub fn countries(&self) -> Vec<&str> {
        self.groups.keys().map(String::as_str).collect()
    }

    pub fn reference(&self) -> &str {
        &self.reference
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.groups.values().map(String::as_str).collect()
    }

    /// Non-reference groups in the order their dummies enter a design.
    pub fn dummy_labels(&self) -> Vec<&str> {
        self.labels()
            .into_iter()
            .filter(|g| *g != self.reference)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_five_groups() {
        let g = GeoGroups::builtin();
        assert_eq!(g.labels().len(), 5);
        assert_eq!(
            g.dummy_labels(),
            [
                "Central/Southern/Eastern Asia",
                "Europe/Oceania/Northern America",
                "Latin America & the Caribbean",
                "Northern Africa & Western Asia"
            ]
        );
        assert_eq!(g.group_of("ng"), Some("Sub-Saharan Africa"));
        assert_eq!(g.group_of("AU"), Some("Europe/Oceania/Northern America"));
        assert_eq!(g.group_of("JP"), Some("Central/Southern/Eastern Asia"));
        assert_eq!(g.group_of("SD"), Some("Northern Africa & Western Asia"));
        assert_eq!(g.group_of("ZZ"), None);
    }

    #[test]
    fn rejects_duplicates_and_missing_reference() {
        let dup = "iso2,group\nFR,Europe\nFR,Europe\nNG,Sub-Saharan Africa\n";
        assert!(GeoGroups::read_csv(dup.as_bytes(), Path::new("x")).is_err());
        let noref = "iso2,group\nFR,Europe\n";
        assert!(GeoGroups::read_csv(noref.as_bytes(), Path::new("x")).is_err());
    }
}

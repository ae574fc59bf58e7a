//! Scalp layout and functional-region assignment.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataError;

const DEFAULT_MONTAGE: &str = include_str!("../../data/montage_10_20.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    Frontal,
    Central,
    Parietal,
    Occipital,
    Other,
}

impl Region {
    /// The four regions scored by topographic analyses, front to back.
    pub const SCORED: [Region; 4] = [Region::Frontal, Region::Central, Region::Parietal, Region::Occipital];

    /// Region implied by a 10-20/10-10 channel name prefix.
    ///
    /// Temporal sites (`T*`, `FT*`, `TP*`) map to `Other`.
    pub fn from_channel_name(name: &str) -> Region {
        const RULES: [(&str, Region); 13] = [
            ("FT", Region::Other),
            ("TP", Region::Other),
            ("T", Region::Other),
            ("PO", Region::Occipital),
            ("O", Region::Occipital),
            ("I", Region::Occipital),
            ("CP", Region::Parietal),
            ("P", Region::Parietal),
            ("FC", Region::Central),
            ("C", Region::Central),
            ("FP", Region::Frontal),
            ("AF", Region::Frontal),
            ("F", Region::Frontal),
        ];
        let upper = name.trim().to_ascii_uppercase();
        RULES.iter().find(|(prefix, _)| upper.starts_with(prefix)).map(|&(_, r)| r).unwrap_or(Region::Other)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Region::Frontal => "Frontal",
            Region::Central => "Central",
            Region::Parietal => "Parietal",
            Region::Occipital => "Occipital",
            Region::Other => "Other",
        };
        f.write_str(s)
    }
}

impl FromStr for Region {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frontal" => Ok(Region::Frontal),
            "central" => Ok(Region::Central),
            "parietal" => Ok(Region::Parietal),
            "occipital" => Ok(Region::Occipital),
            "other" => Ok(Region::Other),
            _ => Err(DataError::Invariant(format!("unknown region {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MontageEntry {
    pub channel: String,
    pub x: f64,
    pub y: f64,
    pub region: Region,
}

/// Ordered channel positions. Order is the file order and drives rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<MontageEntry>", try_from = "Vec<MontageEntry>")]
pub struct Montage {
    entries: Vec<MontageEntry>,
    index: HashMap<String, usize>,
}

impl From<Montage> for Vec<MontageEntry> {
    fn from(m: Montage) -> Self {
        m.entries
    }
}

impl TryFrom<Vec<MontageEntry>> for Montage {
    type Error = DataError;

    fn try_from(entries: Vec<MontageEntry>) -> Result<Self, Self::Error> {
        Montage::new(entries)
    }
}

#[derive(Deserialize)]
struct MontageRow {
    channel: String,
    x: f64,
    y: f64,
    region: String,
}

impl Montage {
    pub fn new(entries: Vec<MontageEntry>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if !(e.x.is_finite() && e.y.is_finite() && e.x.abs() <= 1.0 && e.y.abs() <= 1.0) {
                return Err(DataError::Invariant(format!(
                    "montage channel {} has coordinates ({}, {}) outside [-1, 1]^2",
                    e.channel, e.x, e.y
                )));
            }
            if index.insert(e.channel.clone(), i).is_some() {
                return Err(DataError::DuplicateId(e.channel.clone()));
            }
        }
        Ok(Self { entries, index })
    }

    /// Standard 10-10 layout with regions assigned by name prefix.
    pub fn standard_10_20() -> Self {
        Self::from_csv_reader(DEFAULT_MONTAGE.as_bytes()).expect("bundled montage is valid")
    }

    /// Parses `channel,x,y,region`.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self, DataError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<MontageRow>() {
            let row = row.map_err(|e| DataError::Csv(e.to_string()))?;
            entries.push(MontageEntry { region: row.region.parse()?, channel: row.channel, x: row.x, y: row.y });
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        Self::from_csv_reader(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Csv(e.to_string()))?;
        w.write_record(["channel", "x", "y", "region"]).map_err(|e| DataError::Csv(e.to_string()))?;
        for e in &self.entries {
            w.write_record([e.channel.clone(), e.x.to_string(), e.y.to_string(), e.region.to_string()])
                .map_err(|e| DataError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| DataError::io(path, e))
    }

    /// Montage restricted to `channels`, keeping this montage's order.
    pub fn subset(&self, channels: &[String]) -> Self {
        let keep: BTreeSet<&str> = channels.iter().map(String::as_str).collect();
        let entries = self.entries.iter().filter(|e| keep.contains(e.channel.as_str())).cloned().collect();
        Self::new(entries).expect("subset of a valid montage")
    }

    pub fn entries(&self) -> &[MontageEntry] {
        &self.entries
    }

    pub fn get(&self, channel: &str) -> Option<&MontageEntry> {
        self.index.get(channel).map(|&i| &self.entries[i])
    }

    /// Region of `channel`; unmapped channels fall back to `Other`.
    pub fn region_of(&self, channel: &str) -> Region {
        self.get(channel).map_or(Region::Other, |e| e.region)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

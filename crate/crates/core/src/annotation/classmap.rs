use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::{MERGED_CLASSES, OD_CLASSES, SP_CLASSES};

const DEFAULT_CLASS_MAP: &str = include_str!("../../config/class_map.json");

/// Merge table from object-detector (COCO, 1..80) and scene-parser
/// (ADE20K, 1..150) labels into one 210-class space.
///
/// The default table maps detector classes to merged ids 1..80 unchanged,
/// folds 20 scene-parser classes onto their detector twins and appends the
/// remaining 130 scene-parser classes as 81..210. See
/// `config/class_map.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMap {
    merged_count: usize,
    person: u16,
    od_to_merged: Vec<u16>,
    sp_to_merged: Vec<u16>,
    /// Water-, mountain-, plant-, cloud- and building-like merged classes.
    scenery: BTreeSet<u16>,
    names: Vec<String>,
}

impl Default for ClassMap {
    fn default() -> Self {
        ClassMap::from_json(DEFAULT_CLASS_MAP).expect("bundled class map is valid")
    }
}

impl ClassMap {
    pub fn from_json(text: &str) -> Result<Self> {
        let map: ClassMap = serde_json::from_str(text)
            .map_err(|e| Error::MalformedBundle(format!("class map: {e}")))?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("class map serializes")
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedBundle(format!("class map: {msg}")));
        if self.merged_count != MERGED_CLASSES {
            return bad(format!("merged_count {} != {MERGED_CLASSES}", self.merged_count));
        }
        if self.od_to_merged.len() != OD_CLASSES as usize
            || self.sp_to_merged.len() != SP_CLASSES as usize
        {
            return bad("table lengths must be 80 and 150".into());
        }
        if self.names.len() != MERGED_CLASSES {
            return bad("names must list 210 classes".into());
        }
        let in_range = |id: &u16| (1..=MERGED_CLASSES as u16).contains(id);
        if !self.od_to_merged.iter().chain(&self.sp_to_merged).all(in_range)
            || !self.scenery.iter().all(in_range)
            || !in_range(&self.person)
        {
            return bad("merged ids must lie in 1..=210".into());
        }
        let od: BTreeSet<u16> = self.od_to_merged.iter().copied().collect();
        let sp: BTreeSet<u16> = self.sp_to_merged.iter().copied().collect();
        if od.union(&sp).count() != MERGED_CLASSES {
            return bad("merged ids do not cover 1..=210".into());
        }
        let shared = od.intersection(&sp).count();
        if shared != 20 {
            return bad(format!("{shared} merged ids shared by both detectors, expected 20"));
        }
        Ok(())
    }

    pub fn merged_count(&self) -> usize {
        self.merged_count
    }

    /// Merged id of the person class.
    pub fn person(&self) -> u16 {
        self.person
    }

    pub fn from_od(&self, class_id: u16) -> Option<u16> {
        class_id
            .checked_sub(1)
            .and_then(|i| self.od_to_merged.get(i as usize).copied())
    }

    pub fn from_sp(&self, class_id: u16) -> Option<u16> {
        class_id
            .checked_sub(1)
            .and_then(|i| self.sp_to_merged.get(i as usize).copied())
    }

    pub fn is_scenery(&self, merged: u16) -> bool {
        self.scenery.contains(&merged)
    }

    pub fn scenery(&self) -> &BTreeSet<u16> {
        &self.scenery
    }

    pub fn name(&self, merged: u16) -> Option<&str> {
        merged
            .checked_sub(1)
            .and_then(|i| self.names.get(i as usize))
            .map(String::as_str)
    }

    /// Merged ids reachable from both detectors.
    pub fn shared(&self) -> BTreeSet<u16> {
        let od: BTreeSet<u16> = self.od_to_merged.iter().copied().collect();
        self.sp_to_merged
            .iter()
            .copied()
            .filter(|id| od.contains(id))
            .collect()
    }
}

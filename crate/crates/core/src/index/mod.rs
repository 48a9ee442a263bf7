//! Per-image feature records and the composition model built from them.

mod decompose;
mod model;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::{Category, MERGED_CLASSES, VGG_DIM};
use crate::arpose::POSE_DIM;
use crate::{Error, Result};

pub use decompose::{
    CadeSource, Decomposer, Decomposition, CLASS_MAP_FILE, CLUSTERS_FILE, SVM_FILE, THRESHOLDS_FILE,
};
pub use model::{BuildFailure, BuildReport, CompositionModel, ModelHeader, FORMAT_VERSION};

/// The six feature blocks, in model column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Vgg,
    Iod,
    Cade,
    Arpose,
    Stat,
    Gender,
}

impl Block {
    pub const COUNT: usize = 6;
    pub const ALL: [Block; Block::COUNT] = [
        Block::Vgg,
        Block::Iod,
        Block::Cade,
        Block::Arpose,
        Block::Stat,
        Block::Gender,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn dim(self) -> usize {
        match self {
            Block::Vgg => VGG_DIM,
            Block::Iod => MERGED_CLASSES,
            Block::Cade => Category::COUNT,
            Block::Arpose => POSE_DIM,
            Block::Stat => 2,
            Block::Gender => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Block::Vgg => "vgg",
            Block::Iod => "iod",
            Block::Cade => "cade",
            Block::Arpose => "arpose",
            Block::Stat => "stat",
            Block::Gender => "gender",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Block> {
        Block::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown feature block {s:?}")))
    }
}

/// One model row. Values are stored as `f32`, exactly as on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub image_id: String,
    pub vgg: Vec<f32>,
    pub iod: Vec<f32>,
    pub cade: Vec<f32>,
    pub arpose: Vec<f32>,
    /// `[rating, views]`.
    pub stat: Vec<f32>,
    pub gender: Vec<f32>,
}

impl FeatureRecord {
    /// All-zero record with unknown gender.
    pub fn zeros(image_id: impl Into<String>) -> Self {
        let mut gender = vec![0.0; 3];
        gender[2] = 1.0;
        FeatureRecord {
            image_id: image_id.into(),
            vgg: vec![0.0; VGG_DIM],
            iod: vec![0.0; MERGED_CLASSES],
            cade: vec![0.0; Category::COUNT],
            arpose: vec![0.0; POSE_DIM],
            stat: vec![0.0; 2],
            gender,
        }
    }

    pub fn block(&self, block: Block) -> &[f32] {
        match block {
            Block::Vgg => &self.vgg,
            Block::Iod => &self.iod,
            Block::Cade => &self.cade,
            Block::Arpose => &self.arpose,
            Block::Stat => &self.stat,
            Block::Gender => &self.gender,
        }
    }

    pub fn block_mut(&mut self, block: Block) -> &mut Vec<f32> {
        match block {
            Block::Vgg => &mut self.vgg,
            Block::Iod => &mut self.iod,
            Block::Cade => &mut self.cade,
            Block::Arpose => &mut self.arpose,
            Block::Stat => &mut self.stat,
            Block::Gender => &mut self.gender,
        }
    }

    pub fn rating(&self) -> f64 {
        self.stat[0] as f64
    }

    /// Predicted or labeled category, when the cade block is one-hot.
    pub fn category(&self) -> Option<Category> {
        let hot: Vec<usize> = (0..self.cade.len()).filter(|&i| self.cade[i] == 1.0).collect();
        match hot.as_slice() {
            [i] => Category::from_index(*i),
            _ => None,
        }
    }

    pub fn check_dims(&self) -> Result<()> {
        for b in Block::ALL {
            let len = self.block(b).len();
            if len != b.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "{}: {b} block has {len} values, expected {}",
                    self.image_id,
                    b.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Narrows to the stored precision.
pub(crate) fn to_f32(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&v| v as f32).collect()
}

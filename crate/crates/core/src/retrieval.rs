//! Per-detector similarity between a query and every indexed image, and the
//! preference-weighted ranking built on top of it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::index::{Block, CompositionModel, FeatureRecord};
use crate::{par, Error, Result};

/// Rows whose sum falls below this are replaced by the uniform distribution.
pub const DEGENERATE_ROW_SUM: f64 = 1e-12;

/// User preference weights over the six similarity rows, normalized to sum
/// to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UspWeights([f64; Block::COUNT]);

impl UspWeights {
    /// Normalizes raw non-negative weights.
    pub fn new(raw: [f64; Block::COUNT]) -> Result<UspWeights> {
        if let Some((b, v)) = Block::ALL.iter().zip(raw).find(|(_, v)| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!("weight {b} = {v} must be finite and non-negative")));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        Ok(UspWeights(raw.map(|v| v / total)))
    }

    pub fn uniform() -> UspWeights {
        UspWeights([1.0 / Block::COUNT as f64; Block::COUNT])
    }

    pub fn one_hot(block: Block) -> UspWeights {
        let mut w = [0.0; Block::COUNT];
        w[block.index()] = 1.0;
        UspWeights(w)
    }

    /// Unlisted blocks get weight 0.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Block, f64)>) -> Result<UspWeights> {
        let mut raw = [0.0; Block::COUNT];
        for (b, v) in pairs {
            raw[b.index()] = v;
        }
        UspWeights::new(raw)
    }

    pub fn get(&self, block: Block) -> f64 {
        self.0[block.index()]
    }

    pub fn as_array(&self) -> [f64; Block::COUNT] {
        self.0
    }

    pub fn to_map(&self) -> BTreeMap<Block, f64> {
        Block::ALL.iter().map(|&b| (b, self.get(b))).collect()
    }
}

impl Default for UspWeights {
    fn default() -> Self {
        UspWeights::uniform()
    }
}

/// `vgg=0.5,cade=0.5`.
impl FromStr for UspWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<UspWeights> {
        let mut pairs = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("weight {item:?} is not name=value")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("weight {item:?} is not a number")))?;
            pairs.push((name.trim().parse::<Block>()?, value));
        }
        UspWeights::from_pairs(pairs)
    }
}

impl fmt::Display for UspWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = Block::ALL.iter().map(|b| format!("{b}={}", self.get(*b))).collect();
        f.write_str(&parts.join(","))
    }
}

impl Serialize for UspWeights {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

impl<'de> Deserialize<'de> for UspWeights {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<Block, f64>::deserialize(d)?;
        UspWeights::from_pairs(map).map_err(serde::de::Error::custom)
    }
}

/// Six values, one per feature block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub vgg: f64,
    pub iod: f64,
    pub cade: f64,
    pub arpose: f64,
    pub stat: f64,
    pub gender: f64,
}

impl From<[f64; Block::COUNT]> for ScoreBreakdown {
    fn from(v: [f64; Block::COUNT]) -> Self {
        ScoreBreakdown {
            vgg: v[0],
            iod: v[1],
            cade: v[2],
            arpose: v[3],
            stat: v[4],
            gender: v[5],
        }
    }
}

/// Dot product accumulated in `f64` over eight lanes.
///
/// On x86-64 CPUs with AVX the same loop runs with wider vectors. The
/// operation order is unchanged and nothing is fused, so both paths give
/// bit-identical results.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: AVX support was just checked.
        return unsafe { dot_avx(a, b) };
    }
    dot_lanes(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn dot_avx(a: &[f32], b: &[f32]) -> f64 {
    dot_lanes(a, b)
}

#[inline(always)]
fn dot_lanes(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, ra) = (a.chunks_exact(8), a.chunks_exact(8).remainder());
    let rb = b.chunks_exact(8).remainder();
    for (x, y) in ca.zip(b.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| *x as f64 * *y as f64).sum();
    acc.iter().sum::<f64>() + tail
}

fn sign(v: f32) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `exp(-(Σ_k (image_k · sgn(query_k) - image_k))²)`: 1 when the image's
/// importance lies on classes the query has, `e^-1` when none of it does.
pub fn iod_similarity(image: &[f32], query: &[f32]) -> f64 {
    let masked: f64 = image
        .iter()
        .zip(query)
        .map(|(&i, &q)| i as f64 * sign(q) - i as f64)
        .sum::<f64>()
        // Stored importances are f32, so their total can miss 1 by an ulp.
        .clamp(-1.0, 0.0);
    (-(masked * masked)).exp()
}

/// Raw similarities of model row `i` to `q`, in block order. Gender is ±1.
pub fn similarity_row(model: &CompositionModel, i: usize, q: &FeatureRecord) -> [f64; Block::COUNT] {
    [
        dot(model.row(Block::Vgg, i), &q.vgg),
        iod_similarity(model.row(Block::Iod, i), &q.iod),
        dot(model.row(Block::Cade, i), &q.cade),
        dot(model.row(Block::Arpose, i), &q.arpose),
        model.rating(i),
        if model.row(Block::Gender, i) == q.gender.as_slice() { 1.0 } else { -1.0 },
    ]
}

/// Raw similarity rows, one value per model row.
pub fn similarity(model: &CompositionModel, q: &FeatureRecord) -> Result<[Vec<f64>; Block::COUNT]> {
    if model.is_empty() {
        return Err(Error::EmptyModel);
    }
    q.check_dims()?;
    let mut rows = vec![[0.0; Block::COUNT]; model.len()];
    par::fill(&mut rows, |i, slot| *slot = similarity_row(model, i, q));
    Ok(std::array::from_fn(|d| rows.iter().map(|r| r[d]).collect()))
}

/// Turns one raw row into a distribution. The gender row is first mapped
/// from {−1, 1} to {0, 1}.
pub fn normalize_row(block: Block, raw: &[f64]) -> Vec<f64> {
    let shifted: Vec<f64> = if block == Block::Gender {
        raw.iter().map(|v| (v + 1.0) / 2.0).collect()
    } else {
        raw.to_vec()
    };
    let total: f64 = shifted.iter().sum();
    if !(total >= DEGENERATE_ROW_SUM) {
        let n = shifted.len().max(1) as f64;
        return vec![1.0 / n; shifted.len()];
    }
    shifted.into_iter().map(|v| v / total).collect()
}

pub fn normalize(raw: &[Vec<f64>; Block::COUNT]) -> [Vec<f64>; Block::COUNT] {
    std::array::from_fn(|d| normalize_row(Block::ALL[d], &raw[d]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTensor {
    pub raw: [Vec<f64>; Block::COUNT],
    pub normalized: [Vec<f64>; Block::COUNT],
}

impl SimilarityTensor {
    pub fn compute(model: &CompositionModel, q: &FeatureRecord) -> Result<SimilarityTensor> {
        let raw = similarity(model, q)?;
        let normalized = normalize(&raw);
        Ok(SimilarityTensor { raw, normalized })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub image_id: String,
    pub score: f64,
    /// Weighted contribution of each block; sums to `score`.
    pub breakdown: ScoreBreakdown,
}

/// Orders images by `wᵀ S^N`, highest first, ties by ascending image id,
/// and keeps the first `top_k`.
pub fn rank(ids: &[String], normalized: &[Vec<f64>; Block::COUNT], w: &UspWeights, top_k: usize) -> Vec<Ranked> {
    let weights = w.as_array();
    let contributions: Vec<[f64; Block::COUNT]> = (0..ids.len())
        .map(|i| std::array::from_fn(|d| weights[d] * normalized[d][i]))
        .collect();
    let scores: Vec<f64> = contributions.iter().map(|c| c.iter().sum()).collect();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then_with(|| ids[*a].cmp(&ids[*b]));
    if top_k < order.len() && top_k > 0 {
        order.select_nth_unstable_by(top_k - 1, cmp);
        order.truncate(top_k);
    }
    order.truncate(top_k);
    order.sort_unstable_by(cmp);
    order
        .into_iter()
        .map(|i| Ranked {
            image_id: ids[i].clone(),
            score: scores[i],
            breakdown: contributions[i].into(),
        })
        .collect()
}

/// Similarity, normalization and ranking in one call.
pub fn query(model: &CompositionModel, q: &FeatureRecord, w: &UspWeights, top_k: usize) -> Result<Vec<Ranked>> {
    let raw = similarity(model, q)?;
    Ok(rank(model.ids(), &normalize(&raw), w, top_k))
}

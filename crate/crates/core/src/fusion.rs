//! Detector fusion: hysteresis detection across the three detectors,
//! saliency weighting around the center of mass, and the 210-entry object
//! importance vector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationBundle, ClassMap, DetectorKind, TensorTriple, MERGED_CLASSES};
use crate::grid::Plane;
use crate::{Error, Result};

pub const DEFAULT_LOW: f64 = 0.09;
pub const DEFAULT_HIGH: f64 = 0.44;
/// Objects covering less of the image than this are dropped before
/// importance weighting.
pub const MIN_OBJECT_AREA: f64 = 0.0115;

/// LOW/HIGH probability thresholds of one (class, detector) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub fn new(low: f64, high: f64) -> Result<Band> {
        if !(0.0 <= low && low < high && high < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "thresholds need 0 <= low < high < 1, got low={low} high={high}"
            )));
        }
        Ok(Band { low, high })
    }
}

impl Default for Band {
    fn default() -> Self {
        Band {
            low: DEFAULT_LOW,
            high: DEFAULT_HIGH,
        }
    }
}

/// Person cut-offs: mean object-detector person probability, and the
/// normalized area of the dominant pose-estimator person.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonCutoffs {
    pub od_probability: f64,
    pub pe_area: f64,
}

impl Default for PersonCutoffs {
    fn default() -> Self {
        PersonCutoffs {
            od_probability: 0.40,
            pe_area: 0.10,
        }
    }
}

/// Per-(merged class, detector) hysteresis bands with a global fallback.
///
/// Text form, one row per line, `#` starts a comment:
///
/// ```text
/// # class detector low  high
/// 1       od       0.10 0.40
/// default          0.09 0.44
/// cutoff  od_probability 0.40
/// cutoff  pe_area        0.10
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Thresholds {
    pub default: Band,
    bands: BTreeMap<(u16, DetectorKind), Band>,
    pub person: PersonCutoffs,
}

impl Thresholds {
    pub fn band(&self, class: u16, kind: DetectorKind) -> Band {
        self.bands.get(&(class, kind)).copied().unwrap_or(self.default)
    }

    pub fn set_band(&mut self, class: u16, kind: DetectorKind, band: Band) {
        self.bands.insert((class, kind), band);
    }

    pub fn parse(text: &str) -> Result<Thresholds> {
        let mut out = Thresholds::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::InvalidParameter(format!("thresholds line {}: {raw:?}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            match fields.as_slice() {
                ["default", low, high] => out.default = Band::new(num(low)?, num(high)?)?,
                ["cutoff", "od_probability", v] => out.person.od_probability = num(v)?,
                ["cutoff", "pe_area", v] => out.person.pe_area = num(v)?,
                [class, det, low, high] => {
                    let class: u16 = class.parse().map_err(|_| bad())?;
                    if !(1..=MERGED_CLASSES as u16).contains(&class) {
                        return Err(bad());
                    }
                    let kind = DetectorKind::parse(det).ok_or_else(bad)?;
                    out.bands.insert((class, kind), Band::new(num(low)?, num(high)?)?);
                }
                _ => return Err(bad()),
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Thresholds> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Thresholds::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# class detector low high\n");
        let _ = writeln!(s, "default {} {}", self.default.low, self.default.high);
        let _ = writeln!(s, "cutoff od_probability {}", self.person.od_probability);
        let _ = writeln!(s, "cutoff pe_area {}", self.person.pe_area);
        for ((class, kind), band) in &self.bands {
            let _ = writeln!(s, "{class} {} {} {}", kind.name(), band.low, band.high);
        }
        s
    }
}

/// Merged class a detector pixel id stands for.
#[inline]
pub fn merged_class(kind: DetectorKind, id: u16, map: &ClassMap) -> Option<u16> {
    if id == 0 {
        return None;
    }
    match kind {
        DetectorKind::Od => map.from_od(id),
        DetectorKind::Sp => map.from_sp(id),
        DetectorKind::Pe => Some(map.person()),
    }
}

/// Mean clamped probability of each merged class, per detector, over the
/// pixels that detector labels with it.
pub fn class_means(tensors: &TensorTriple, map: &ClassMap) -> BTreeMap<u16, [Option<f64>; 3]> {
    // (sum, compensation, count). Neumaier summation keeps a uniform region
    // at exactly its pixel value, which matters at the inclusive cut-offs.
    let mut sums: BTreeMap<u16, [(f64, f64, usize); 3]> = BTreeMap::new();
    for (d, kind) in DetectorKind::ALL.into_iter().enumerate() {
        let t = tensors.get(kind);
        for (&id, &p) in t.ids.as_slice().iter().zip(t.probabilities.as_slice()) {
            if let Some(class) = merged_class(kind, id, map) {
                let slot = &mut sums.entry(class).or_default()[d];
                let next = slot.0 + p;
                slot.1 += if slot.0.abs() >= p.abs() { (slot.0 - next) + p } else { (p - next) + slot.0 };
                slot.0 = next;
                slot.2 += 1;
            }
        }
    }
    sums.into_iter()
        .map(|(class, acc)| (class, acc.map(|(s, c, n)| (n > 0).then(|| (s + c) / n as f64))))
        .collect()
}

/// Outcome of hysteresis detection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Presence {
    /// Some detector's mean probability exceeds its HIGH threshold.
    pub present: BTreeSet<u16>,
    /// Not present, but not below LOW on every detector either.
    pub uncertain: BTreeSet<u16>,
}

/// Hysteresis detection with union across detectors.
///
/// A class is present when any detector's mean probability for it is
/// strictly above that pair's HIGH threshold; absent when every detector's
/// mean is strictly below LOW (a detector that never labels the class counts
/// as 0); uncertain otherwise.
pub fn hysteresis_detect(tensors: &TensorTriple, map: &ClassMap, thresholds: &Thresholds) -> Presence {
    let mut out = Presence::default();
    for (class, means) in class_means(tensors, map) {
        let mut present = false;
        let mut all_low = true;
        for (d, kind) in DetectorKind::ALL.into_iter().enumerate() {
            let band = thresholds.band(class, kind);
            let mean = means[d].unwrap_or(0.0);
            present |= mean > band.high;
            all_low &= mean < band.low;
        }
        if present {
            out.present.insert(class);
        } else if !all_low {
            out.uncertain.insert(class);
        }
    }
    out
}

/// Drops classes whose pixel area (union over the three detectors) is below
/// `min_fraction` of the image.
pub fn drop_small_objects(
    present: &BTreeSet<u16>,
    tensors: &TensorTriple,
    map: &ClassMap,
    min_fraction: f64,
) -> BTreeSet<u16> {
    let total = tensors.width() * tensors.height();
    if total == 0 {
        return BTreeSet::new();
    }
    let mut area: BTreeMap<u16, usize> = BTreeMap::new();
    for flat in 0..total {
        let mut seen: [u16; 3] = [0; 3];
        for (d, kind) in DetectorKind::ALL.into_iter().enumerate() {
            let id = tensors.get(kind).ids.as_slice()[flat];
            if let Some(class) = merged_class(kind, id, map) {
                if !seen[..d].contains(&class) {
                    *area.entry(class).or_default() += 1;
                }
                seen[d] = class;
            }
        }
    }
    present
        .iter()
        .copied()
        .filter(|c| area.get(c).copied().unwrap_or(0) as f64 >= min_fraction * total as f64)
        .collect()
}

/// The two measurements behind the person decision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonEvidence {
    /// Mean probability over object-detector person pixels.
    pub od_probability: f64,
    /// Joint-extent area of the dominant pose-estimator person over image area.
    pub pe_area: f64,
}

impl PersonEvidence {
    pub fn measure(bundle: &AnnotationBundle, tensors: &TensorTriple, map: &ClassMap) -> Self {
        let od_probability = class_means(tensors, map)
            .get(&map.person())
            .and_then(|m| m[0])
            .unwrap_or(0.0);
        let pixels = bundle.pixel_count();
        let pe_area = match (bundle.dominant_person().and_then(|p| p.extent()), pixels) {
            (Some((x0, y0, x1, y1)), n) if n > 0 => ((x1 - x0) * (y1 - y0) / n as f64).clamp(0.0, 1.0),
            _ => 0.0,
        };
        PersonEvidence {
            od_probability,
            pe_area,
        }
    }
}

/// True when either cut-off is met (inclusive).
pub fn person_present(evidence: &PersonEvidence, cutoffs: &PersonCutoffs) -> bool {
    evidence.od_probability >= cutoffs.od_probability || evidence.pe_area >= cutoffs.pe_area
}

/// The bundle's saliency map, or all ones when it has none.
pub fn saliency_or_default(bundle: &AnnotationBundle) -> Plane<f64> {
    match &bundle.saliency {
        Some(s) => Plane::from_vec(bundle.width, bundle.height, s.iter().map(|&v| v as f64).collect()),
        None => Plane::filled(bundle.width, bundle.height, 1.0),
    }
}

/// Saliency center of mass and the normalized centric-distance map.
#[derive(Debug, Clone, PartialEq)]
pub struct CentricDistance {
    /// `(row, col)` center of mass.
    pub center: (f64, f64),
    /// `exp(-‖[i,j] - c‖₁) / K`, summing to 1.
    pub weights: Plane<f64>,
}

pub fn centric_distance(saliency: &Plane<f64>) -> Result<CentricDistance> {
    let (mut total, mut row_acc, mut col_acc) = (0.0, 0.0, 0.0);
    for (flat, &s) in saliency.as_slice().iter().enumerate() {
        let (r, c) = saliency.coords(flat);
        total += s;
        row_acc += s * r as f64;
        col_acc += s * c as f64;
    }
    if !(total > 0.0) {
        return Err(Error::ZeroSaliency);
    }
    let center = (row_acc / total, col_acc / total);
    let (w, h) = (saliency.width(), saliency.height());
    let mut weights = Plane::filled(w, h, 0.0);
    let mut norm = 0.0;
    for (flat, slot) in weights.as_mut_slice().iter_mut().enumerate() {
        let (r, c) = (flat / w, flat % w);
        let d = (r as f64 - center.0).abs() + (c as f64 - center.1).abs();
        *slot = (-d).exp();
        norm += *slot;
    }
    weights.as_mut_slice().iter_mut().for_each(|v| *v /= norm);
    Ok(CentricDistance { center, weights })
}

/// Weighted saliency and the merged class credited at each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSaliency {
    pub weights: Plane<f64>,
    /// 0 where no present class is detected.
    pub labels: Plane<u16>,
}

/// `W = max_H(od score, sp score) · S · D`.
///
/// Only pixels whose merged class is in `present` contribute a score; the
/// larger of the two surviving scores wins and names the pixel's class, with
/// ties going to the object detector.
pub fn weighted_saliency(
    tensors: &TensorTriple,
    present: &BTreeSet<u16>,
    map: &ClassMap,
    saliency: &Plane<f64>,
    centric: &Plane<f64>,
) -> WeightedSaliency {
    let (w, h) = (tensors.width(), tensors.height());
    let mut weights = Plane::filled(w, h, 0.0);
    let mut labels = Plane::filled(w, h, 0u16);
    let candidate = |kind: DetectorKind, flat: usize| {
        let t = tensors.get(kind);
        merged_class(kind, t.ids.as_slice()[flat], map)
            .filter(|c| present.contains(c))
            .map(|c| (c, t.scores.as_slice()[flat]))
    };
    for flat in 0..w * h {
        let best = match (candidate(DetectorKind::Od, flat), candidate(DetectorKind::Sp, flat)) {
            (Some(od), Some(sp)) => Some(if sp.1 > od.1 { sp } else { od }),
            (od, sp) => od.or(sp),
        };
        if let Some((class, score)) = best {
            weights.as_mut_slice()[flat] = score * saliency.as_slice()[flat] * centric.as_slice()[flat];
            labels.as_mut_slice()[flat] = class;
        }
    }
    WeightedSaliency { weights, labels }
}

/// Per-class share of the total weighted saliency, indexed by merged id − 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector(pub Vec<f64>);

impl ImportanceVector {
    pub fn zeros() -> Self {
        ImportanceVector(vec![0.0; MERGED_CLASSES])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, merged: u16) -> f64 {
        self.0[merged as usize - 1]
    }

    /// The `n` most important classes as `(merged id, importance)`, nonzero only.
    pub fn top(&self, n: usize) -> Vec<(u16, f64)> {
        let mut v: Vec<(u16, f64)> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(i, &x)| (i as u16 + 1, x))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(n);
        v
    }
}

pub fn importance_vector(weights: &Plane<f64>, labels: &Plane<u16>) -> ImportanceVector {
    let mut out = ImportanceVector::zeros();
    let mut total = 0.0;
    for (&w, &label) in weights.as_slice().iter().zip(labels.as_slice()) {
        if label != 0 {
            out.0[label as usize - 1] += w;
        }
        total += w;
    }
    if total > 0.0 {
        out.0.iter_mut().for_each(|v| *v /= total);
    } else {
        out.0.iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

/// Everything fusion derives for one image.
#[derive(Debug, Clone)]
pub struct FusionResult {
    pub presence: Presence,
    /// `presence.present` after the minimum-area filter.
    pub present: BTreeSet<u16>,
    pub person: PersonEvidence,
    pub person_present: bool,
    pub saliency: Plane<f64>,
    /// `None` when the saliency map is identically zero.
    pub centric: Option<CentricDistance>,
    pub weighted: WeightedSaliency,
    pub importance: ImportanceVector,
}

pub fn fuse(bundle: &AnnotationBundle, tensors: &TensorTriple, map: &ClassMap, thresholds: &Thresholds) -> FusionResult {
    let presence = hysteresis_detect(tensors, map, thresholds);
    let present = drop_small_objects(&presence.present, tensors, map, MIN_OBJECT_AREA);
    let person = PersonEvidence::measure(bundle, tensors, map);
    let person_present = person_present(&person, &thresholds.person);
    let saliency = saliency_or_default(bundle);
    let centric = centric_distance(&saliency).ok();
    let (weighted, importance) = match &centric {
        Some(cd) => {
            let ws = weighted_saliency(tensors, &present, map, &saliency, &cd.weights);
            let imp = importance_vector(&ws.weights, &ws.labels);
            (ws, imp)
        }
        None => (
            WeightedSaliency {
                weights: Plane::filled(bundle.width, bundle.height, 0.0),
                labels: Plane::filled(bundle.width, bundle.height, 0),
            },
            ImportanceVector::zeros(),
        ),
    };
    FusionResult {
        presence,
        present,
        person,
        person_present,
        saliency,
        centric,
        weighted,
        importance,
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Every check compares library output against an independent
//! re-implementation written here, or against a property that must hold
//! exactly.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use captain_core::annotation::{
    AnnotationBundle, BoundingBox, ClassMap, Corpus, DetectionTensor, DetectorKind, Joint, JointId,
    ObjectDetection, Skeleton, TensorTriple, JOINT_COUNT,
};
use captain_core::arpose::{elbow_scan, j2l_features, kmeans, pose_vector, skeleton_context, KMeansConfig, SC_BINS};
use captain_core::cade::{solve_binary, train_mcmsvm, SmoParams, SvmParams};
use captain_core::fusion::{
    centric_distance, hysteresis_detect, importance_vector, person_present, weighted_saliency, Band,
    PersonCutoffs, PersonEvidence, Thresholds,
};
use captain_core::grid::Plane;
use captain_core::index::{Block, CompositionModel, Decomposer, FeatureRecord};
use captain_core::matching::{favorite_shot, pose_distance, pose_shot, to_polar, PolarPose};
use captain_core::retrieval::{iod_similarity, query, rank, similarity, normalize, UspWeights};
use captain_core::{par, synthetic};
use captain_core::annotation::Category;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Importance oracle
// ---------------------------------------------------------------------------

fn oracle_score(p: f64) -> f64 {
    let p = p.min(1.0 - 2f64.powi(-20));
    -(1.0 - p).log2()
}

fn random_plane<R: Rng>(rng: &mut R, n: usize, classes: &[u16]) -> Vec<(u16, f64)> {
    (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                (0, 0.0)
            } else {
                (classes[rng.random_range(0..classes.len())], rng.random_range(0.0..0.999))
            }
        })
        .collect()
}

fn importance_oracle() -> Outcome {
    let start = Instant::now();
    let map = ClassMap::default();
    let mut rng = synthetic::rng(101);
    let (w, h) = (8, 8);
    let mut worst = 0.0f64;
    let mut nonzero = 0;
    for case in 0..200 {
        let od_px = random_plane(&mut rng, w * h, &[1, 3, 17, 62]);
        let sp_px = random_plane(&mut rng, w * h, &[3, 7, 22, 150]);
        let pe_px: Vec<(u16, f64)> = (0..w * h)
            .map(|_| if rng.random_bool(0.1) { (rng.random_range(1..=18), rng.random_range(0.0..0.99)) } else { (0, 0.0) })
            .collect();
        let tensors = TensorTriple {
            od: DetectionTensor::from_pixels(DetectorKind::Od, w, h, &od_px),
            sp: DetectionTensor::from_pixels(DetectorKind::Sp, w, h, &sp_px),
            pe: DetectionTensor::from_pixels(DetectorKind::Pe, w, h, &pe_px),
        };
        let mut sal: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
        if case % 10 == 0 {
            sal.iter_mut().for_each(|v| *v = 1.0);
        }
        let present = hysteresis_detect(&tensors, &map, &Thresholds::default()).present;
        let saliency = Plane::from_vec(w, h, sal.clone());
        let cd = centric_distance(&saliency).map_err(|e| e.to_string())?;
        let ws = weighted_saliency(&tensors, &present, &map, &saliency, &cd.weights);
        let got = importance_vector(&ws.weights, &ws.labels);

        // Brute force: every quantity from the raw pixel lists.
        let total_s: f64 = sal.iter().sum();
        let (mut ci, mut cj) = (0.0, 0.0);
        for i in 0..h {
            for j in 0..w {
                ci += sal[i * w + j] * i as f64;
                cj += sal[i * w + j] * j as f64;
            }
        }
        let (ci, cj) = (ci / total_s, cj / total_s);
        let mut k = 0.0;
        for i in 0..h {
            for j in 0..w {
                k += (-((i as f64 - ci).abs() + (j as f64 - cj).abs())).exp();
            }
        }
        let mut mass = BTreeMap::<u16, f64>::new();
        let mut total_w = 0.0;
        for i in 0..h {
            for j in 0..w {
                let f = i * w + j;
                let d = (-((i as f64 - ci).abs() + (j as f64 - cj).abs())).exp() / k;
                let od = map.from_od(od_px[f].0).filter(|c| od_px[f].1 > 0.0 && present.contains(c));
                let sp = map.from_sp(sp_px[f].0).filter(|c| sp_px[f].1 > 0.0 && present.contains(c));
                let pick = match (od, sp) {
                    (Some(a), Some(b)) => {
                        let (sa, sb) = (oracle_score(od_px[f].1), oracle_score(sp_px[f].1));
                        Some(if sb > sa { (b, sb) } else { (a, sa) })
                    }
                    (Some(a), None) => Some((a, oracle_score(od_px[f].1))),
                    (None, Some(b)) => Some((b, oracle_score(sp_px[f].1))),
                    (None, None) => None,
                };
                if let Some((class, score)) = pick {
                    let v = score * sal[f] * d;
                    *mass.entry(class).or_default() += v;
                    total_w += v;
                }
            }
        }
        for class in 1..=210u16 {
            let expect = if total_w > 0.0 { mass.get(&class).copied().unwrap_or(0.0) / total_w } else { 0.0 };
            worst = worst.max((got.get(class) - expect).abs());
        }
        let sum: f64 = got.as_slice().iter().sum();
        if total_w > 0.0 {
            nonzero += 1;
            ensure((sum - 1.0).abs() < 1e-9, || format!("case {case}: importance sums to {sum}"))?;
        } else {
            ensure(sum == 0.0, || format!("case {case}: zero W but importance sums to {sum}"))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, || format!("max deviation from oracle {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("200 cases ({nonzero} with objects), max |Δ| = {worst:.1e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// Hysteresis properties
// ---------------------------------------------------------------------------

fn single_detector(t: &TensorTriple, keep: DetectorKind) -> TensorTriple {
    let (w, h) = (t.width(), t.height());
    let pick = |k: DetectorKind| if k == keep { t.get(k).clone() } else { DetectionTensor::empty(k, w, h) };
    TensorTriple {
        od: pick(DetectorKind::Od),
        sp: pick(DetectorKind::Sp),
        pe: pick(DetectorKind::Pe),
    }
}

fn one_pixel(kind: DetectorKind, id: u16, p: f64) -> TensorTriple {
    let mut t = TensorTriple {
        od: DetectionTensor::empty(DetectorKind::Od, 1, 1),
        sp: DetectionTensor::empty(DetectorKind::Sp, 1, 1),
        pe: DetectionTensor::empty(DetectorKind::Pe, 1, 1),
    };
    let tensor = DetectionTensor::from_pixels(kind, 1, 1, &[(id, p)]);
    match kind {
        DetectorKind::Od => t.od = tensor,
        DetectorKind::Sp => t.sp = tensor,
        DetectorKind::Pe => t.pe = tensor,
    }
    t
}

fn hysteresis_properties() -> Outcome {
    let map = ClassMap::default();
    let mut rng = synthetic::rng(202);
    let (w, h) = (6, 5);
    let kinds = DetectorKind::ALL;
    for case in 0..1000 {
        let mut th = Thresholds::default();
        for class in [1u16, 3, 17, 62, 87, 120] {
            for kind in kinds {
                if rng.random_bool(0.5) {
                    let low = rng.random_range(0.0..0.5);
                    let high = rng.random_range(low + 0.01..0.99);
                    th.set_band(class, kind, Band::new(low, high).map_err(|e| e.to_string())?);
                }
            }
        }
        let od_px = random_plane(&mut rng, w * h, &[1, 3, 17, 62]);
        let sp_px = random_plane(&mut rng, w * h, &[3, 13, 28]);
        let pe_px: Vec<(u16, f64)> = (0..w * h)
            .map(|_| if rng.random_bool(0.3) { (rng.random_range(1..=18), rng.random_range(0.0..0.99)) } else { (0, 0.0) })
            .collect();
        let t = TensorTriple {
            od: DetectionTensor::from_pixels(DetectorKind::Od, w, h, &od_px),
            sp: DetectionTensor::from_pixels(DetectorKind::Sp, w, h, &sp_px),
            pe: DetectionTensor::from_pixels(DetectorKind::Pe, w, h, &pe_px),
        };
        let fused = hysteresis_detect(&t, &map, &th).present;
        for kind in kinds {
            let alone = hysteresis_detect(&single_detector(&t, kind), &map, &th).present;
            ensure(alone.is_subset(&fused), || {
                format!("case {case}: {} alone finds {alone:?}, fused only {fused:?}", kind.name())
            })?;
        }
        // Raise every od pixel of one class; nothing present may vanish.
        let target = [1u16, 3, 17, 62][rng.random_range(0..4)];
        let boost = rng.random_range(0.0..0.5);
        let raised: Vec<(u16, f64)> = od_px
            .iter()
            .map(|&(id, p)| if id == target && p > 0.0 { (id, (p + boost).min(0.999)) } else { (id, p) })
            .collect();
        let t2 = TensorTriple {
            od: DetectionTensor::from_pixels(DetectorKind::Od, w, h, &raised),
            ..t.clone()
        };
        let after = hysteresis_detect(&t2, &map, &th).present;
        ensure(fused.is_subset(&after), || format!("case {case}: raising class {target} removed {fused:?} -> {after:?}"))?;
    }

    // Boundaries on a single pixel, so the class mean is the pixel value.
    let th = Thresholds::default();
    let status = |p: f64| {
        let r = hysteresis_detect(&one_pixel(DetectorKind::Od, 3, p), &map, &th);
        (r.present.contains(&3), r.uncertain.contains(&3))
    };
    ensure(status(0.44) == (false, true), || "mean 0.44 must not be present".into())?;
    ensure(status(0.44 + 1e-12) == (true, false), || "mean just above 0.44 must be present".into())?;
    ensure(status(0.09) == (false, true), || "mean 0.09 must be uncertain".into())?;
    ensure(status(0.09 - 1e-12) == (false, false), || "mean just below 0.09 must be absent".into())?;
    ensure(status(0.50) == (true, false), || "mean 0.50 must be present".into())?;
    ensure(status(0.05) == (false, false), || "mean 0.05 must be absent".into())?;

    let cut = PersonCutoffs::default();
    let ev = |od_probability, pe_area| PersonEvidence { od_probability, pe_area };
    ensure(person_present(&ev(0.40, 0.0), &cut), || "od 0.40 must count".into())?;
    ensure(!person_present(&ev(0.40 - 1e-12, 0.0), &cut), || "od below 0.40 must not count".into())?;
    ensure(person_present(&ev(0.0, 0.10), &cut), || "pe area 0.10 must count".into())?;
    ensure(!person_present(&ev(0.0, 0.10 - 1e-12), &cut), || "pe area below 0.10 must not count".into())?;
    ensure(person_present(&ev(0.45, 0.02), &cut) && person_present(&ev(0.10, 0.12), &cut), || "examples".into())?;
    ensure(!person_present(&ev(0.0, 0.0), &cut), || "no evidence".into())?;

    // The same boundaries measured from bundles.
    let mut b = AnnotationBundle::empty("edge", 10, 10);
    let mut s = Skeleton::new();
    s.set(JointId::Nose, Joint { x: 1.0, y: 1.0, score: 0.5 });
    s.set(JointId::Neck, Joint { x: 3.5, y: 5.0, score: 0.5 });
    b.persons.push(s);
    let t = captain_core::annotation::unify(&b);
    let measured = PersonEvidence::measure(&b, &t, &map);
    ensure(measured.pe_area == 0.10 && person_present(&measured, &cut), || format!("pe area {measured:?}"))?;
    let mut b = AnnotationBundle::empty("edge-od", 10, 10);
    b.objects.push(ObjectDetection { class_id: 1, probability: 0.40, bbox: BoundingBox::from([0.0, 0.0, 3.0, 3.0]) });
    let t = captain_core::annotation::unify(&b);
    let measured = PersonEvidence::measure(&b, &t, &map);
    ensure(measured.od_probability == 0.40 && person_present(&measured, &cut), || format!("od {measured:?}"))?;

    Ok("1000 random cases: union dominance and monotonicity hold; 0.09/0.44 and 0.40/0.10 exact at the boundary".into())
}

// ---------------------------------------------------------------------------
// Ranking oracle
// ---------------------------------------------------------------------------

fn naive_scores(model: &CompositionModel, q: &FeatureRecord, w: &[f64; 6]) -> Vec<f64> {
    let n = model.len();
    let mut raw = vec![[0.0f64; 6]; n];
    for (i, row) in raw.iter_mut().enumerate() {
        let r = model.record(i);
        let dotp = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum::<f64>();
        let mut masked = 0.0;
        for k in 0..r.iod.len() {
            let s = if q.iod[k] > 0.0 { 1.0 } else { 0.0 };
            masked += r.iod[k] as f64 * s - r.iod[k] as f64;
        }
        let masked = masked.clamp(-1.0, 0.0);
        row[0] = dotp(&r.vgg, &q.vgg);
        row[1] = (-(masked * masked)).exp();
        row[2] = dotp(&r.cade, &q.cade);
        row[3] = dotp(&r.arpose, &q.arpose);
        row[4] = r.stat[0] as f64;
        row[5] = if r.gender == q.gender { 1.0 } else { 0.0 };
    }
    let mut out = vec![0.0; n];
    for d in 0..6 {
        let total: f64 = raw.iter().map(|r| r[d]).sum();
        for i in 0..n {
            let v = if total < 1e-12 { 1.0 / n as f64 } else { raw[i][d] / total };
            out[i] += w[d] * v;
        }
    }
    out
}

fn random_weights<R: Rng>(rng: &mut R) -> [f64; 6] {
    let mut w = [0.0; 6];
    for v in w.iter_mut() {
        if rng.random_bool(0.7) {
            *v = rng.random_range(0.0..3.0);
        }
    }
    if w.iter().sum::<f64>() == 0.0 {
        w[4] = 1.0;
    }
    w
}

fn ranking_oracle() -> Outcome {
    let mut rng = synthetic::rng(303);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(1..=50);
        let model = synthetic::random_model(1000 + case, n);
        let q = synthetic::random_record(&mut rng, "query");
        let raw_w = random_weights(&mut rng);
        let total: f64 = raw_w.iter().sum();
        let norm_w = raw_w.map(|v| v / total);
        let w = UspWeights::new(raw_w).map_err(|e| e.to_string())?;
        let got = query(&model, &q, &w, n).map_err(|e| e.to_string())?;

        let scores = naive_scores(&model, &q, &norm_w);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(model.ids()[a].cmp(&model.ids()[b])));
        // Near-ties may legitimately order differently under 1e-16 noise.
        for (pos, r) in got.iter().enumerate() {
            let i = model.position(&r.image_id).unwrap();
            worst = worst.max((r.score - scores[i]).abs());
            let expect = order[pos];
            if i != expect {
                ensure((scores[i] - scores[expect]).abs() < 1e-12, || {
                    format!("case {case}: position {pos} holds {} but oracle has {}", r.image_id, model.ids()[expect])
                })?;
            }
        }

        let c = rng.random_range(0.01..100.0);
        let scaled = UspWeights::new(raw_w.map(|v| v * c)).map_err(|e| e.to_string())?;
        let again = query(&model, &q, &scaled, n).map_err(|e| e.to_string())?;
        let ids = |v: &[captain_core::retrieval::Ranked]| v.iter().map(|r| r.image_id.clone()).collect::<Vec<_>>();
        ensure(ids(&got) == ids(&again), || format!("case {case}: rescaling weights by {c} changed the order"))?;
    }
    ensure(worst <= 1e-9, || format!("max |ΔV| = {worst:e}"))?;
    Ok(format!("100 random models (N ≤ 50), max |ΔV| = {worst:.1e}, order invariant to weight rescaling"))
}

// ---------------------------------------------------------------------------
// S_iod bounds
// ---------------------------------------------------------------------------

fn random_importance<R: Rng>(rng: &mut R, support: &[usize]) -> Vec<f32> {
    let mut v = vec![0.0f64; 210];
    for &k in support {
        v[k] = rng.random_range(0.001..1.0);
    }
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
    v.into_iter().map(|x| x as f32).collect()
}

fn iod_bounds() -> Outcome {
    let mut rng = synthetic::rng(404);
    let lower = (-1.0f64).exp();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for case in 0..20_000 {
        let pick = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            let n = rng.random_range(0..8);
            (0..n).map(|_| rng.random_range(0..210)).collect()
        };
        let (sa, sb) = (pick(&mut rng), pick(&mut rng));
        let (a, b) = (random_importance(&mut rng, &sa), random_importance(&mut rng, &sb));
        let s = iod_similarity(&a, &b);
        lo = lo.min(s);
        hi = hi.max(s);
        ensure((lower..=1.0).contains(&s), || format!("case {case}: S_iod = {s}"))?;

        // Image support inside the query support: exactly 1.
        let mut sup = sb.clone();
        sup.push(rng.random_range(0..210));
        let sub: Vec<usize> = sup.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
        let image = random_importance(&mut rng, &sub);
        let q = random_importance(&mut rng, &sup);
        let s = iod_similarity(&image, &q);
        ensure(s == 1.0, || format!("case {case}: masked superset gives {s}"))?;
    }
    let disjoint = iod_similarity(&random_importance(&mut rng, &[0, 1]), &random_importance(&mut rng, &[5]));
    ensure((disjoint - lower).abs() < 1e-7, || format!("disjoint gives {disjoint}"))?;
    Ok(format!("20000 random pairs within [{lo:.6}, {hi}], superset case exactly 1"))
}

// ---------------------------------------------------------------------------
// Pose-feature invariance
// ---------------------------------------------------------------------------

fn pose_invariance() -> Outcome {
    let mut rng = synthetic::rng(505);
    let mut worst = 0.0f64;
    let mut checked_rot = 0;
    for case in 0..500 {
        let s = synthetic::random_skeleton(&mut rng, 640.0, 480.0, 3);
        let base_j = j2l_features(&s).map_err(|e| e.to_string())?;
        let base_sc = skeleton_context(&s).map_err(|e| e.to_string())?;
        let k = rng.random_range(0.05..20.0);
        let (tx, ty) = (rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3));
        let moved = s.map_points(|x, y| (x * k + tx, y * k + ty));
        let j = j2l_features(&moved).map_err(|e| e.to_string())?;
        let sc = skeleton_context(&moved).map_err(|e| e.to_string())?;
        for (a, b) in base_j.iter().chain(&base_sc).zip(j.iter().chain(&sc)) {
            worst = worst.max((a - b).abs());
        }
        ensure(worst <= 1e-9, || format!("case {case}: scale {k} shift ({tx}, {ty}) moved a feature by {worst:e}"))?;

        let (cx, cy) = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let a = 20f64.to_radians();
        let rotated = s.map_points(|x, y| {
            let (dx, dy) = (x - cx, y - cy);
            (cx + dx * a.cos() - dy * a.sin(), cy + dx * a.sin() + dy * a.cos())
        });
        let rsc = skeleton_context(&rotated).map_err(|e| e.to_string())?;
        for r in 0..JOINT_COUNT {
            for bin in 0..SC_BINS {
                let expect = base_sc[r * SC_BINS + bin];
                let got = rsc[r * SC_BINS + (bin + 1) % SC_BINS];
                ensure((expect - got).abs() <= 1e-12, || format!("case {case}: row {r} did not shift by one bin"))?;
            }
        }
        checked_rot += 1;
    }
    Ok(format!("500 skeletons, max |Δ| under scale+translation {worst:.1e}; {checked_rot} rotations shift SC rows by one bin"))
}

// ---------------------------------------------------------------------------
// Clustering recovery
// ---------------------------------------------------------------------------

fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut table = BTreeMap::<(usize, usize), f64>::new();
    let mut ra = BTreeMap::<usize, f64>::new();
    let mut rb = BTreeMap::<usize, f64>::new();
    for i in 0..n {
        *table.entry((a[i], b[i])).or_default() += 1.0;
        *ra.entry(a[i]).or_default() += 1.0;
        *rb.entry(b[i]).or_default() += 1.0;
    }
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n as f64);
    let max = (sa + sb) / 2.0;
    (index - expected) / (max - expected)
}

fn clustering_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = synthetic::rng(606);
    let prototypes = synthetic::pose_prototypes(&mut rng, 15);
    let mut features = Vec::with_capacity(1500);
    let mut truth = Vec::with_capacity(1500);
    for (c, proto) in prototypes.iter().enumerate() {
        for _ in 0..100 {
            let angles = synthetic::jitter_angles(&mut rng, proto, 5.0);
            let scale = rng.random_range(5.0..40.0);
            let origin = (rng.random_range(0.0..600.0), rng.random_range(0.0..400.0));
            let s = synthetic::pose_from_angles(&angles, scale, origin);
            features.push(pose_vector(&s).map_err(|e| e.to_string())?);
            truth.push(c);
        }
    }
    let clusters = par::sequential(|| kmeans(&features, &KMeansConfig::new(15, 10, 7))).map_err(|e| e.to_string())?;
    let ari = adjusted_rand_index(&truth, &clusters.assignments);

    let mut blob_rng = synthetic::rng(607);
    let blobs: Vec<Vec<f64>> = synthetic::gaussian_blobs(&mut blob_rng, 3, 60, 12, 25.0).into_iter().map(|(x, _)| x).collect();
    let scan = par::sequential(|| elbow_scan(&blobs, 8, 10, 3)).map_err(|e| e.to_string())?;
    let drop_at = scan.largest_drop_at().unwrap_or(0);
    let elapsed = start.elapsed();

    ensure(ari >= 0.9, || format!("ARI {ari:.4} < 0.9"))?;
    ensure(drop_at <= 3 && drop_at >= 2, || format!("largest elbow drop at k = {drop_at}"))?;
    ensure(scan.drops.iter().all(|&d| d >= 0.0), || "elbow distortion rose".into())?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("ARI {ari:.4} (k=15, 10 restarts), elbow largest drop at k = {drop_at}, {elapsed:.1?} single-threaded"))
}

// ---------------------------------------------------------------------------
// SVM correctness
// ---------------------------------------------------------------------------

fn svm_correctness() -> Outcome {
    let mut rng = synthetic::rng(707);
    let data = synthetic::gaussian_blobs(&mut rng, 10, 200, 40, 6.0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, (x, c)) in data.into_iter().enumerate() {
        let cat = Category::ALL[c];
        if i % 200 < 160 {
            train.push((x, cat));
        } else {
            test.push((x, cat));
        }
    }
    let model = train_mcmsvm(&train, &SvmParams::default()).map_err(|e| e.to_string())?;
    ensure(model.binaries.len() == 45, || format!("{} pairwise classifiers", model.binaries.len()))?;

    // Independent path for pair (0, 1): standardize, build the Gram matrix,
    // solve, and evaluate the decision function over every training point.
    let dim = 40;
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|d| train.iter().map(|(x, _)| x[d]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..dim)
        .map(|d| (train.iter().map(|(x, _)| (x[d] - mean[d]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let z = |x: &[f64]| (0..dim).map(|d| (x[d] - mean[d]) / sd[d]).collect::<Vec<f64>>();
    let gamma = 1.0 / dim as f64;
    let kernel = |a: &[f64], b: &[f64]| (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp();
    let pair: Vec<(Vec<f64>, f64)> = train
        .iter()
        .filter(|(_, c)| *c == Category::Facial || *c == Category::Fullbody)
        .map(|(x, c)| (z(x), if *c == Category::Facial { 1.0 } else { -1.0 }))
        .collect();
    let m = pair.len();
    let mut gram = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            gram[a * m + b] = kernel(&pair[a].0, &pair[b].0);
        }
    }
    let y: Vec<f64> = pair.iter().map(|p| p.1).collect();
    let params = SmoParams::default();
    let sol = solve_binary(&gram, &y, &params).map_err(|e| e.to_string())?;
    ensure(sol.converged, || "SMO did not converge".into())?;
    ensure(sol.alpha.iter().all(|&a| (0.0..=params.c).contains(&a)), || "box constraint violated".into())?;
    // KKT: with f(x_i) = Σ_j y_j α_j K_ij − ρ, free points sit on the margin
    // and bound points on the correct side, up to the tolerance.
    for i in 0..m {
        let f: f64 = (0..m).map(|j| y[j] * sol.alpha[j] * gram[i * m + j]).sum::<f64>() - sol.rho;
        let yf = y[i] * f;
        let ok = if sol.alpha[i] <= 0.0 {
            yf >= 1.0 - 2.0 * params.tol
        } else if sol.alpha[i] >= params.c {
            yf <= 1.0 + 2.0 * params.tol
        } else {
            (yf - 1.0).abs() <= 2.0 * params.tol
        };
        ensure(ok, || format!("KKT violated at sample {i}: α = {}, y·f = {yf}", sol.alpha[i]))?;
    }
    let mut worst = 0.0f64;
    for (x, _) in test.iter().chain(&train).take(600) {
        let zx = z(x);
        let brute: f64 = (0..m).map(|j| y[j] * sol.alpha[j] * kernel(&pair[j].0, &zx)).sum::<f64>() - sol.rho;
        let got = model.decision_values(x).map_err(|e| e.to_string())?[0];
        worst = worst.max((got - brute).abs());
    }
    ensure(worst <= 1e-9, || format!("decision values differ from kernel sums by {worst:e}"))?;

    let correct = test.iter().filter(|(x, c)| model.predict(x).map(|p| p == *c).unwrap_or(false)).count();
    let acc = correct as f64 / test.len() as f64;
    ensure(acc >= 0.95, || format!("held-out accuracy {:.2}%", acc * 100.0))?;
    Ok(format!("max |Δ decision| = {worst:.1e}, KKT within tolerance, held-out accuracy {:.2}% ({correct}/{})", acc * 100.0, test.len()))
}

// ---------------------------------------------------------------------------
// Matching oracles
// ---------------------------------------------------------------------------

fn phase_distance(a: &PolarPose, b: &PolarPose) -> f64 {
    (1..JOINT_COUNT)
        .map(|k| match (a.links[k], b.links[k]) {
            (Some(x), Some(y)) => (x.theta.sin() - y.theta.sin()).abs(),
            _ => 0.0,
        })
        .sum()
}

fn full_pose<R: Rng>(rng: &mut R) -> PolarPose {
    to_polar(&synthetic::random_skeleton(rng, 640.0, 480.0, JOINT_COUNT)).expect("full skeleton has a root")
}

fn brute_favorite(style: &CompositionModel, cands: &[FeatureRecord], w: &[f64; 6]) -> Vec<f64> {
    let (ns, nq) = (style.len(), cands.len());
    let mut raw = vec![vec![[0.0f64; 6]; ns]; nq];
    for q in 0..nq {
        for j in 0..ns {
            let r = style.record(j);
            let c = &cands[q];
            let dotp = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum::<f64>();
            let mut masked = 0.0;
            for k in 0..210 {
                masked += if c.iod[k] > 0.0 { 0.0 } else { -(r.iod[k] as f64) };
            }
            let masked = masked.clamp(-1.0, 0.0);
            raw[q][j] = [
                dotp(&r.vgg, &c.vgg),
                (-(masked * masked)).exp(),
                dotp(&r.cade, &c.cade),
                dotp(&r.arpose, &c.arpose),
                r.stat[0] as f64,
                if r.gender == c.gender { 1.0 } else { 0.0 },
            ];
        }
    }
    let mut scores = vec![0.0; nq];
    for d in 0..6 {
        let total: f64 = raw.iter().flat_map(|col| col.iter().map(|r| r[d])).sum();
        for q in 0..nq {
            for j in 0..ns {
                let v = if total < 1e-12 { 1.0 / (ns * nq) as f64 } else { raw[q][j][d] / total };
                scores[q] += w[d] * v;
            }
        }
    }
    scores
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn matching_oracles() -> Outcome {
    let mut rng = synthetic::rng(808);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let taken: Vec<PolarPose> = (0..rng.random_range(1..=20)).map(|_| full_pose(&mut rng)).collect();
        let preferred: Vec<PolarPose> = (0..rng.random_range(1..=10)).map(|_| full_pose(&mut rng)).collect();
        let ignored: Vec<PolarPose> = (0..rng.random_range(0..=5)).map(|_| full_pose(&mut rng)).collect();
        let got = pose_shot(&taken, &preferred, &ignored, 1.0).map_err(|e| e.to_string())?;
        let objective: Vec<f64> = taken
            .iter()
            .map(|t| {
                let away = ignored.iter().map(|g| phase_distance(t, g)).fold(f64::INFINITY, f64::min);
                let away = if ignored.is_empty() { 0.0 } else { away };
                away - preferred.iter().map(|p| phase_distance(t, p)).fold(f64::INFINITY, f64::min)
            })
            .collect();
        ensure(got.index == first_argmax(&objective), || format!("case {case}: pose shot {} vs {}", got.index, first_argmax(&objective)))?;

        let style = synthetic::random_model(5000 + case, rng.random_range(1..=10));
        let cands: Vec<FeatureRecord> = (0..rng.random_range(1..=20))
            .map(|i| synthetic::random_record(&mut rng, &format!("shot{i}")))
            .collect();
        let raw_w = random_weights(&mut rng);
        let total: f64 = raw_w.iter().sum();
        let w = UspWeights::new(raw_w).map_err(|e| e.to_string())?;
        let fav = favorite_shot(&style, &cands, &w).map_err(|e| e.to_string())?;
        let brute = brute_favorite(&style, &cands, &raw_w.map(|v| v / total));
        for (a, b) in fav.scores.iter().zip(&brute) {
            worst = worst.max((a - b).abs());
        }
        let best = first_argmax(&brute);
        ensure(fav.index == best || (brute[fav.index] - brute[best]).abs() < 1e-12, || {
            format!("case {case}: favorite {} vs {best}", fav.index)
        })?;
    }
    ensure(worst <= 1e-9, || format!("favorite scores differ by {worst:e}"))?;

    // Pseudometric on random triples.
    let mut max_violation = 0.0f64;
    for _ in 0..10_000 {
        let (a, b, c) = (full_pose(&mut rng), full_pose(&mut rng), full_pose(&mut rng));
        let d = |x: &PolarPose, y: &PolarPose| pose_distance(x, y, 1.0).map(|d| d.value).unwrap();
        let (ab, ba, bc, ac) = (d(&a, &b), d(&b, &a), d(&b, &c), d(&a, &c));
        ensure(ab >= 0.0 && d(&a, &a) == 0.0, || "non-negativity or identity".into())?;
        ensure((ab - ba).abs() <= 1e-12, || format!("asymmetric {ab} vs {ba}"))?;
        max_violation = max_violation.max(ac - (ab + bc));
    }
    ensure(max_violation <= 1e-12, || format!("triangle inequality violated by {max_violation:e}"))?;
    Ok(format!("100 sessions match enumeration (max |Δscore| {worst:.1e}); 10000 triples satisfy the pseudometric axioms"))
}

// ---------------------------------------------------------------------------
// Determinism and persistence
// ---------------------------------------------------------------------------

fn bits(m: &CompositionModel) -> Vec<Vec<u32>> {
    Block::ALL.iter().map(|&b| m.block(b).iter().map(|v| v.to_bits()).collect()).collect()
}

fn pipeline_persistence() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = synthetic::BundleSpec::default();
    let bundles = synthetic::random_corpus(909, 24, &spec);
    let corpus = Corpus::write(&tmp.path().join("corpus"), &bundles).map_err(|e| e.to_string())?;
    let dec = Decomposer::default();
    let (model, report) = CompositionModel::build(&corpus, &dec).map_err(|e| e.to_string())?;
    ensure(report.failures.is_empty(), || format!("build failures: {:?}", report.failures))?;
    let (again, _) = par::sequential(|| CompositionModel::build(&corpus, &dec)).map_err(|e| e.to_string())?;
    ensure(bits(&model) == bits(&again), || "parallel and sequential builds differ".into())?;

    let dir = tmp.path().join("model.cm");
    model.save(&dir).map_err(|e| e.to_string())?;
    let loaded = CompositionModel::load(&dir).map_err(|e| e.to_string())?;
    ensure(loaded.ids() == model.ids() && bits(&loaded) == bits(&model), || "save/load changed the matrices".into())?;

    let probe = captain_core::annotation::load_bundle(&corpus.bundles[5]).map_err(|e| e.to_string())?;
    let q = dec.decompose(&probe).map_err(|e| e.to_string())?;
    let w = UspWeights::uniform();
    let a = query(&model, &q, &w, 24).map_err(|e| e.to_string())?;
    let b = query(&loaded, &q, &w, 24).map_err(|e| e.to_string())?;
    let same = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.image_id == y.image_id && x.score.to_bits() == y.score.to_bits());
    ensure(same, || "query results differ after reload".into())?;

    let mut rng = synthetic::rng(910);
    for case in 0..50u64 {
        let n = rng.random_range(1..=6);
        let small = synthetic::random_corpus(2000 + case, n + 1, &synthetic::BundleSpec { width: 24, height: 18, ..spec });
        let (full, _) = CompositionModel::build_from_bundles(&small, &dec).map_err(|e| e.to_string())?;
        let (mut grown, _) = CompositionModel::build_from_bundles(&small[..n], &dec).map_err(|e| e.to_string())?;
        grown.append(&small[n], &dec).map_err(|e| e.to_string())?;
        ensure(grown.ids() == full.ids() && bits(&grown) == bits(&full), || format!("case {case}: append differs from rebuild"))?;
        let dup = grown.append(&small[0], &dec);
        ensure(matches!(dup, Err(captain_core::Error::DuplicateId(_))), || "duplicate append accepted".into())?;
    }
    Ok("build → save → load → query bit-exact; append equals rebuild on 50 random corpora".into())
}

// ---------------------------------------------------------------------------
// Performance
// ---------------------------------------------------------------------------

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

fn performance() -> Outcome {
    let model = synthetic::random_model(1111, 10_000);
    let mut rng = synthetic::rng(1112);
    let q = synthetic::random_record(&mut rng, "query");
    let w: UspWeights = "vgg=0.3,iod=0.2,cade=0.2,arpose=0.2,stat=0.05,gender=0.05".parse().map_err(|e: captain_core::Error| e.to_string())?;
    let mut rank_times = Vec::new();
    for _ in 0..7 {
        let t = Instant::now();
        let r = par::sequential(|| query(&model, &q, &w, 20)).map_err(|e| e.to_string())?;
        rank_times.push(t.elapsed());
        ensure(r.len() == 20, || "short result".into())?;
    }
    let rank_time = median(rank_times);

    let spec = synthetic::BundleSpec { width: 320, height: 240, max_objects: 6, max_persons: 2, scene: true, saliency: true };
    let bundle = synthetic::random_bundle(&mut rng, "live", &spec);
    let dec = Decomposer::default();
    let mut e2e_times = Vec::new();
    for _ in 0..5 {
        let t = Instant::now();
        par::sequential(|| -> Result<(), captain_core::Error> {
            let rec = dec.decompose(&bundle)?;
            let raw = similarity(&model, &rec)?;
            let _ = rank(model.ids(), &normalize(&raw), &w, 20);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
        e2e_times.push(t.elapsed());
    }
    let e2e = median(e2e_times);
    ensure(rank_time < Duration::from_millis(50), || format!("ranking 10000 rows took {rank_time:?}"))?;
    ensure(e2e < Duration::from_millis(150), || format!("decompose + rank took {e2e:?}"))?;
    Ok(format!("rank over 10000 rows {rank_time:.2?}; decompose (320×240) + rank {e2e:.2?}; single-threaded medians"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("importance oracle", importance_oracle),
        ("hysteresis properties", hysteresis_properties),
        ("ranking oracle", ranking_oracle),
        ("S_iod bounds", iod_bounds),
        ("pose-feature invariance", pose_invariance),
        ("clustering recovery", clustering_recovery),
        ("SVM correctness", svm_correctness),
        ("matching oracles", matching_oracles),
        ("determinism and persistence", pipeline_persistence),
        ("performance", performance),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

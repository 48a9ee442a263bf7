//! Composition assistance engine.
//!
//! Photographs arrive as pre-computed detector annotations
//! ([`annotation::AnnotationBundle`]). They are decomposed into six feature
//! blocks (generic descriptors, object importance, portrait category, pose,
//! statistics, gender), indexed into a [`index::CompositionModel`], ranked
//! against a query under user-specified preference weights, and finally
//! matched against a preferred style set to pick the best candidate shot.
//!
//! Module map:
//!
//! * [`annotation`] – bundle data model, loading, class merging, value unification.
//! * [`fusion`] – hysteresis detection, weighted saliency, object importance.
//! * [`cade`] – genre gate, 40-feature extraction, one-vs-one RBF SVM.
//! * [`arpose`] – J2L and skeleton-context pose features, k-means, fuzzy membership, elbow scan.
//! * [`index`] – feature records, decomposition, the composition model and its on-disk format.
//! * [`retrieval`] – per-detector similarity, normalization and preference-weighted ranking.
//! * [`matching`] – polar skeletons, phase distance, pose-shot and favorite-shot selection.
//! * [`par`] – data-parallel helpers with a sequential fallback.
//! * [`synthetic`] – seeded generators for tests, benches and demos.

pub mod annotation;
pub mod arpose;
pub mod cade;
mod error;
pub mod fusion;
pub mod grid;
pub mod index;
pub mod matching;
pub mod par;
pub mod retrieval;
pub mod synthetic;

pub use error::{Error, Result};

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Block, Decomposer, FeatureRecord};
use crate::annotation::{load_bundle, AnnotationBundle, Corpus};
use crate::{par, Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const HEADER_FILE: &str = "header.json";
const FORMAT_NAME: &str = "composition-model";

/// `header.json` of a model directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub version: u32,
    pub rows: usize,
    pub dims: BTreeMap<Block, usize>,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildFailure {
    /// Bundle directory, or the image id for in-memory builds.
    pub source: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub indexed: usize,
    pub failures: Vec<BuildFailure>,
}

/// Row-per-image concatenation of the six feature blocks. Each block is a
/// dense row-major `rows × dim` matrix of `f32`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompositionModel {
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    blocks: [Vec<f32>; Block::COUNT],
}

fn block_file(block: Block) -> String {
    format!("{}.f32", block.name())
}

impl CompositionModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, image_id: &str) -> Option<usize> {
        self.positions.get(image_id).copied()
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.positions.contains_key(image_id)
    }

    /// Whole block matrix.
    pub fn block(&self, block: Block) -> &[f32] {
        &self.blocks[block.index()]
    }

    pub fn row(&self, block: Block, i: usize) -> &[f32] {
        let d = block.dim();
        &self.blocks[block.index()][i * d..(i + 1) * d]
    }

    pub fn rating(&self, i: usize) -> f64 {
        self.row(Block::Stat, i)[0] as f64
    }

    pub fn record(&self, i: usize) -> FeatureRecord {
        let mut r = FeatureRecord::zeros(self.ids[i].clone());
        for b in Block::ALL {
            *r.block_mut(b) = self.row(b, i).to_vec();
        }
        r
    }

    pub fn record_by_id(&self, image_id: &str) -> Result<FeatureRecord> {
        self.position(image_id)
            .map(|i| self.record(i))
            .ok_or_else(|| Error::UnknownId(image_id.to_string()))
    }

    /// Adds one row at the end.
    pub fn push(&mut self, record: FeatureRecord) -> Result<()> {
        record.check_dims()?;
        if self.contains(&record.image_id) {
            return Err(Error::DuplicateId(record.image_id));
        }
        for b in Block::ALL {
            self.blocks[b.index()].extend_from_slice(record.block(b));
        }
        self.positions.insert(record.image_id.clone(), self.ids.len());
        self.ids.push(record.image_id);
        Ok(())
    }

    pub fn from_records(records: impl IntoIterator<Item = FeatureRecord>) -> Result<Self> {
        let mut model = CompositionModel::new();
        for r in records {
            model.push(r)?;
        }
        Ok(model)
    }

    /// The rows for `ids`, in the given order.
    pub fn subset(&self, ids: &[String]) -> Result<CompositionModel> {
        let records = ids.iter().map(|id| self.record_by_id(id)).collect::<Result<Vec<_>>>()?;
        CompositionModel::from_records(records)
    }

    /// Decomposes every bundle of the corpus, in manifest order. Bundles
    /// that fail to load or decompose are reported, not fatal.
    pub fn build(corpus: &Corpus, decomposer: &Decomposer) -> Result<(CompositionModel, BuildReport)> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let results = par::map(&corpus.bundles, |dir| {
            load_bundle(dir).and_then(|b| decomposer.decompose(&b))
        });
        let sources = corpus.bundles.iter().map(|p| p.display().to_string());
        Self::assemble(sources.zip(results))
    }

    /// [`build`](Self::build) over bundles already in memory.
    pub fn build_from_bundles(
        bundles: &[AnnotationBundle],
        decomposer: &Decomposer,
    ) -> Result<(CompositionModel, BuildReport)> {
        if bundles.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let results = par::map(bundles, |b| b.validate().and_then(|_| decomposer.decompose(b)));
        Self::assemble(bundles.iter().map(|b| b.image_id.clone()).zip(results))
    }

    fn assemble(
        results: impl Iterator<Item = (String, Result<FeatureRecord>)>,
    ) -> Result<(CompositionModel, BuildReport)> {
        let mut model = CompositionModel::new();
        let mut report = BuildReport::default();
        for (source, result) in results {
            match result.and_then(|r| model.push(r)) {
                Ok(()) => report.indexed += 1,
                Err(e) => report.failures.push(BuildFailure {
                    source,
                    error: e.to_string(),
                }),
            }
        }
        Ok((model, report))
    }

    /// Decomposes `bundle` and adds it as the last row.
    pub fn append(&mut self, bundle: &AnnotationBundle, decomposer: &Decomposer) -> Result<()> {
        if self.contains(&bundle.image_id) {
            return Err(Error::DuplicateId(bundle.image_id.clone()));
        }
        let record = decomposer.decompose(bundle)?;
        self.push(record)
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            rows: self.len(),
            dims: Block::ALL.iter().map(|&b| (b, b.dim())).collect(),
            ids: self.ids.clone(),
        }
    }

    /// Writes the model directory. The new contents are staged in a sibling
    /// directory and swapped in with renames, so readers see the old or the
    /// new model. Other files already in `dir` are carried over.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let parent = match dir.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let name = dir
            .file_name()
            .ok_or_else(|| Error::InvalidParameter(format!("bad model path {}", dir.display())))?
            .to_string_lossy()
            .into_owned();
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
        let retired = parent.join(format!(".{name}.retired-{}", std::process::id()));
        let _ = fs::remove_dir_all(&staging);
        fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;

        let header = serde_json::to_vec_pretty(&self.header()).expect("header serializes");
        let path = staging.join(HEADER_FILE);
        fs::write(&path, header).map_err(|e| Error::io(&path, e))?;
        for b in Block::ALL {
            let bytes: Vec<u8> = self.block(b).iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = staging.join(block_file(b));
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }

        if dir.is_dir() {
            let ours: Vec<String> = std::iter::once(HEADER_FILE.to_string())
                .chain(Block::ALL.iter().map(|&b| block_file(b)))
                .collect();
            for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
                let entry = entry.map_err(|e| Error::io(dir, e))?;
                let file_name = entry.file_name().to_string_lossy().into_owned();
                if entry.path().is_file() && !ours.contains(&file_name) {
                    let to = staging.join(&file_name);
                    fs::copy(entry.path(), &to).map_err(|e| Error::io(&to, e))?;
                }
            }
            let _ = fs::remove_dir_all(&retired);
            fs::rename(dir, &retired).map_err(|e| Error::io(dir, e))?;
            fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
            let _ = fs::remove_dir_all(&retired);
        } else {
            fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }

    pub fn read_header(dir: &Path) -> Result<ModelHeader> {
        let path = dir.join(HEADER_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let header: ModelHeader =
            serde_json::from_slice(&text).map_err(|e| Error::ModelFormat(format!("header.json: {e}")))?;
        if header.format != FORMAT_NAME {
            return Err(Error::ModelFormat(format!("unexpected format {:?}", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", header.version)));
        }
        if header.ids.len() != header.rows {
            return Err(Error::ModelFormat(format!(
                "{} ids for {} rows",
                header.ids.len(),
                header.rows
            )));
        }
        for b in Block::ALL {
            if header.dims.get(&b) != Some(&b.dim()) {
                return Err(Error::ModelFormat(format!("{b} block dimension mismatch")));
            }
        }
        Ok(header)
    }

    pub fn load(dir: &Path) -> Result<CompositionModel> {
        let header = Self::read_header(dir)?;
        let mut blocks: [Vec<f32>; Block::COUNT] = Default::default();
        for b in Block::ALL {
            let path = dir.join(block_file(b));
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() != header.rows * b.dim() * 4 {
                return Err(Error::ModelFormat(format!(
                    "{} holds {} bytes, expected {}",
                    path.display(),
                    bytes.len(),
                    header.rows * b.dim() * 4
                )));
            }
            blocks[b.index()] = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
        }
        let mut positions = HashMap::with_capacity(header.rows);
        for (i, id) in header.ids.iter().enumerate() {
            if positions.insert(id.clone(), i).is_some() {
                return Err(Error::ModelFormat(format!("duplicate id {id:?}")));
            }
        }
        Ok(CompositionModel {
            ids: header.ids,
            positions,
            blocks,
        })
    }
}

//! Binary model file.
//!
//! ```text
//! "CADE" u32 version
//! f64 gamma, f64 c, u32 dim, dim × f64 mean, dim × f64 scale
//! u32 class count, class count × u8 category index
//! u32 classifier count, then per classifier:
//!   u8 positive, u8 negative, f64 rho, u32 support count,
//!   support count × (f64 coef, dim × f64 vector)
//! ```
//!
//! Everything is little-endian.

use std::path::Path;

use super::svm::{BinarySvm, Standardizer, SvmModel};
use crate::annotation::Category;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CADE";
const VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::ModelFormat("truncated svm model".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn category(&mut self) -> Result<Category> {
        let i = self.u8()?;
        Category::from_index(i as usize).ok_or_else(|| Error::ModelFormat(format!("bad category index {i}")))
    }
}

impl SvmModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let f = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_le_bytes());
        f(&mut out, self.gamma);
        f(&mut out, self.c);
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for &v in self.standardizer.mean.iter().chain(&self.standardizer.scale) {
            f(&mut out, v);
        }
        out.extend_from_slice(&(self.classes.len() as u32).to_le_bytes());
        out.extend(self.classes.iter().map(|c| c.index() as u8));
        out.extend_from_slice(&(self.binaries.len() as u32).to_le_bytes());
        for b in &self.binaries {
            out.push(b.positive.index() as u8);
            out.push(b.negative.index() as u8);
            f(&mut out, b.rho);
            out.extend_from_slice(&(b.support.len() as u32).to_le_bytes());
            for (sv, &coef) in b.support.iter().zip(&b.coef) {
                f(&mut out, coef);
                for &v in sv {
                    f(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<SvmModel> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::ModelFormat("not an svm model file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::ModelFormat(format!("unsupported svm model version {version}")));
        }
        let gamma = r.f64()?;
        let c = r.f64()?;
        let dim = r.u32()? as usize;
        let mean = r.f64s(dim)?;
        let scale = r.f64s(dim)?;
        let n_classes = r.u32()? as usize;
        let classes = (0..n_classes).map(|_| r.category()).collect::<Result<Vec<_>>>()?;
        let n_binaries = r.u32()? as usize;
        let mut binaries = Vec::with_capacity(n_binaries.min(64));
        for _ in 0..n_binaries {
            let positive = r.category()?;
            let negative = r.category()?;
            let rho = r.f64()?;
            let n_sv = r.u32()? as usize;
            let mut support = Vec::with_capacity(n_sv.min(1 << 16));
            let mut coef = Vec::with_capacity(n_sv.min(1 << 16));
            for _ in 0..n_sv {
                coef.push(r.f64()?);
                support.push(r.f64s(dim)?);
            }
            binaries.push(BinarySvm {
                positive,
                negative,
                support,
                coef,
                rho,
            });
        }
        if r.pos != buf.len() {
            return Err(Error::ModelFormat("trailing bytes after svm model".into()));
        }
        Ok(SvmModel {
            gamma,
            c,
            standardizer: Standardizer { mean, scale },
            classes,
            binaries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SvmModel> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        SvmModel::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::super::svm::{train_mcmsvm, SvmParams};
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let samples: Vec<(Vec<f64>, Category)> = (0..12)
            .map(|i| {
                let c = if i % 2 == 0 { Category::Two } else { Category::Leg };
                (vec![i as f64 * 0.3, (i % 2) as f64 * 4.0 + 0.1 * i as f64], c)
            })
            .collect();
        let model = train_mcmsvm(&samples, &SvmParams::default()).unwrap();
        let back = SvmModel::from_bytes(&model.to_bytes()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(SvmModel::from_bytes(b"nope"), Err(Error::ModelFormat(_))));
        assert!(matches!(SvmModel::from_bytes(b"CADE\x01\0\0\0"), Err(Error::ModelFormat(_))));
    }
}

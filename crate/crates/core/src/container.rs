//! The single-file model container.
//!
//! Layout (little endian, see `FORMAT.md`): magic, format version, scalar
//! width, the effective config text, the three per-sequence extractors and
//! selections, the stage-1 classifier, the calibration, the stage-2 selection
//! and classifier, and finally the total parameter count, which is recounted
//! and compared on load. A CRC-32 of everything before it closes the file.

use std::path::Path;

use crate::anomaly::Calibration;
use crate::codec::{Reader, Writer};
use crate::config::RunConfig;
use crate::dft::DftSelection;
use crate::error::{Error, Result};
use crate::gbdt::GbdtModel;
use crate::radhop::{GlobalPca, RadHopConfig, RadHopModel, RadHopParts};
use crate::saab::{CwSaabLayer, SaabKernel};
use crate::scalar::Scalar;
use crate::stage1::Stage1Model;
use crate::stage2::Stage2Model;

pub const MODEL_MAGIC: &[u8; 8] = b"RADHOPM\0";
pub const MODEL_VERSION: u32 = 1;

/// Everything needed to run both stages on a new study.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelContainer<T> {
    pub config: RunConfig,
    pub stage1: Stage1Model<T>,
    pub calibration: Calibration,
    pub stage2: Stage2Model,
}

impl<T: Scalar> ModelContainer<T> {
    /// Stored reals: extractors, selected indices, both classifiers and the
    /// threshold.
    pub fn parameter_count(&self) -> usize {
        self.stage1.parameter_count() + self.stage2.parameter_count() + 1
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MODEL_MAGIC);
        w.u32(MODEL_VERSION);
        w.u8(std::mem::size_of::<T>() as u8);
        w.str(&self.config.to_text());
        for (model, sel) in self.stage1.radhop.iter().zip(&self.stage1.selections) {
            write_radhop(&mut w, model);
            write_selection(&mut w, sel);
        }
        self.stage1.classifier.encode(&mut w);
        w.f64(self.calibration.threshold);
        w.f64(self.calibration.tpr);
        w.f64(self.calibration.fpr);
        write_selection(&mut w, &self.stage2.selection);
        self.stage2.classifier.encode(&mut w);
        w.usize(self.parameter_count());
        let mut bytes = w.into_bytes();
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MODEL_MAGIC.len() + 4 {
            return Err(Error::Format(format!("model file too short ({} bytes)", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let mut r = Reader::new(body);
        if r.take(MODEL_MAGIC.len())? != MODEL_MAGIC {
            return Err(Error::Format("not a model container (bad magic)".into()));
        }
        let version = r.u32()?;
        let stored_crc = u32::from_le_bytes(tail.try_into().expect("four bytes"));
        if crc32fast::hash(body) != stored_crc {
            return Err(Error::Format("model checksum mismatch".into()));
        }
        if version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {version}, expected {MODEL_VERSION}"
            )));
        }
        let width = r.u8()? as usize;
        if width != std::mem::size_of::<T>() {
            return Err(Error::Format(format!(
                "model stores {}-byte reals, loader expects {}",
                width,
                std::mem::size_of::<T>()
            )));
        }
        let config = RunConfig::parse(&r.str()?)?;
        let mut radhop = Vec::with_capacity(3);
        let mut selections = Vec::with_capacity(3);
        for _ in 0..3 {
            let model = read_radhop::<T>(&mut r)?;
            let sel = read_selection(&mut r)?;
            if sel.input_len() != model.feature_len() {
                return Err(Error::Format("selection does not match its extractor".into()));
            }
            radhop.push(model);
            selections.push(sel);
        }
        let classifier = GbdtModel::decode(&mut r)?;
        let stage1 = Stage1Model {
            radhop: radhop.try_into().expect("three sequences"),
            selections: selections.try_into().expect("three sequences"),
            classifier,
        };
        if stage1.classifier.n_features != stage1.fused_len() {
            return Err(Error::Format("stage-1 classifier width mismatch".into()));
        }
        let calibration = Calibration {
            threshold: r.f64()?,
            tpr: r.f64()?,
            fpr: r.f64()?,
        };
        let selection = read_selection(&mut r)?;
        let classifier = GbdtModel::decode(&mut r)?;
        if classifier.n_features != selection.output_len() {
            return Err(Error::Format("stage-2 classifier width mismatch".into()));
        }
        let stored = r.usize()?;
        if !r.is_at_end() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        let model = ModelContainer {
            config,
            stage1,
            calibration,
            stage2: Stage2Model { selection, classifier },
        };
        let recount = model.parameter_count();
        if recount != stored {
            return Err(Error::Format(format!(
                "parameter self-check failed: stored {stored}, recounted {recount}"
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_reals<T: Scalar>(w: &mut Writer, v: &[T]) {
    w.usize(v.len());
    v.iter().for_each(|x| w.f64(x.as_f64()));
}

fn read_reals<T: Scalar>(r: &mut Reader) -> Result<Vec<T>> {
    let n = r.len(8)?;
    (0..n).map(|_| r.f64().map(T::of)).collect()
}

fn write_kernel<T: Scalar>(w: &mut Writer, k: &SaabKernel<T>) {
    w.usize(k.filter_size());
    write_reals(w, k.mean());
    w.usize(k.num_anchors());
    k.anchors().iter().for_each(|a| write_reals(w, a));
    write_reals(w, k.bias());
    write_reals(w, k.energies());
}

fn read_kernel<T: Scalar>(r: &mut Reader) -> Result<SaabKernel<T>> {
    let f = r.usize()?;
    let mean = read_reals(r)?;
    let m = r.len(8)?;
    let anchors = (0..m).map(|_| read_reals(r)).collect::<Result<_>>()?;
    SaabKernel::from_parts(f, mean, anchors, read_reals(r)?, read_reals(r)?)
}

fn write_pca<T: Scalar>(w: &mut Writer, g: &GlobalPca<T>) {
    write_reals(w, &g.mean);
    write_reals(w, &g.direction);
}

fn read_pca<T: Scalar>(r: &mut Reader) -> Result<GlobalPca<T>> {
    Ok(GlobalPca {
        mean: read_reals(r)?,
        direction: read_reals(r)?,
    })
}

fn write_radhop<T: Scalar>(w: &mut Writer, model: &RadHopModel<T>) {
    let p = model.to_parts();
    w.usize(p.config.patch_size);
    w.usize(p.config.filter_size);
    w.f64(p.config.energy_threshold);
    w.u8(p.config.include_dc as u8);
    w.usize(p.config.min_fit_patches);
    w.usizes(&p.hop1_ids);
    write_kernel(w, &p.hop1);
    write_reals(w, p.hop2.parent_energies());
    for k in p.hop2.kernels() {
        write_kernel(w, k);
    }
    for g in &p.global1 {
        write_pca(w, g);
    }
    for children in &p.global2 {
        w.usize(children.len());
        for g in children {
            match g {
                Some(g) => {
                    w.u8(1);
                    write_pca(w, g);
                }
                None => w.u8(0),
            }
        }
    }
}

fn read_radhop<T: Scalar>(r: &mut Reader) -> Result<RadHopModel<T>> {
    let config = RadHopConfig {
        patch_size: r.usize()?,
        filter_size: r.usize()?,
        energy_threshold: r.f64()?,
        include_dc: r.bool()?,
        min_fit_patches: r.usize()?,
    };
    let hop1_ids = r.usizes()?;
    let hop1 = read_kernel(r)?;
    let parent_energies: Vec<T> = read_reals(r)?;
    let kernels = (0..parent_energies.len())
        .map(|_| read_kernel(r))
        .collect::<Result<Vec<_>>>()?;
    let hop2 = CwSaabLayer::from_kernels(kernels, parent_energies, T::of(config.energy_threshold))
        .map_err(|e| Error::Format(format!("hop-2 layer: {e}")))?;
    let global1 = (0..hop1.num_anchors())
        .map(|_| read_pca(r))
        .collect::<Result<_>>()?;
    let global2 = (0..hop2.num_parents())
        .map(|_| {
            let n = r.len(1)?;
            (0..n)
                .map(|_| if r.bool()? { read_pca(r).map(Some) } else { Ok(None) })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    RadHopModel::from_parts(RadHopParts {
        config,
        hop1_ids,
        hop1,
        hop2,
        global1,
        global2,
    })
}

fn write_selection(w: &mut Writer, s: &DftSelection) {
    w.f64s(&s.scores);
    w.f64s(&s.f_min);
    w.f64s(&s.f_max);
    w.usizes(&s.kept);
}

fn read_selection(r: &mut Reader) -> Result<DftSelection> {
    let s = DftSelection {
        scores: r.f64s()?,
        f_min: r.f64s()?,
        f_max: r.f64s()?,
        kept: r.usizes()?,
    };
    let d = s.scores.len();
    if s.f_min.len() != d || s.f_max.len() != d || s.kept.iter().any(|&k| k >= d) {
        return Err(Error::Format("inconsistent feature selection".into()));
    }
    Ok(s)
}

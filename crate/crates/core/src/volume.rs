//! Volumes, studies, the raw+sidecar on-disk format and resampling.
//!
//! A volume file is a flat array of little-endian `f32` values in z-major,
//! then y, then x order (`<name>.f32raw`), paired with a JSON sidecar
//! (`<name>.meta.json`) holding `dims`, `spacing_mm`, `role` and `version`.
//! Voxel `(z, y, x)` covers the physical box starting at `(z, y, x) * spacing`,
//! so its centre sits at `(index + 0.5) * spacing` millimetres.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Current sidecar format version.
pub const SIDECAR_VERSION: u32 = 1;

/// A 3D grid with voxel spacing in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<T>,
}

impl<T: Copy> Volume<T> {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Format(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Format(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::shape(expected, data.len()));
        }
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: T) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims[0] * dims[1] * dims[2]])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn depth(&self) -> usize {
        self.dims[0]
    }

    pub fn height(&self) -> usize {
        self.dims[1]
    }

    pub fn width(&self) -> usize {
        self.dims[2]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let plane = self.dims[1] * self.dims[2];
        [
            index / plane,
            (index % plane) / self.dims[2],
            index % self.dims[2],
        ]
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> T {
        self.data[self.index(z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, value: T) {
        let i = self.index(z, y, x);
        self.data[i] = value;
    }

    /// Row-major view of one axial slice.
    pub fn slice(&self, z: usize) -> &[T] {
        let plane = self.dims[1] * self.dims[2];
        &self.data[z * plane..(z + 1) * plane]
    }

    pub fn same_grid<U>(&self, other: &Volume<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `size × size` crop of slice `z` whose top-left corner is `(y0, x0)`.
    pub fn crop(&self, z: usize, y0: usize, x0: usize, size: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(size * size);
        for y in y0..y0 + size {
            let start = self.index(z, y, x0);
            out.extend_from_slice(&self.data[start..start + size]);
        }
        out
    }
}

/// Top-left coordinate along one axis of a `size` window centred at `center`,
/// shifted so that the window stays inside `[0, dim)`. Requires `size <= dim`.
pub fn window_origin(center: usize, size: usize, dim: usize) -> usize {
    debug_assert!(size <= dim);
    center.saturating_sub(size / 2).min(dim - size)
}

/// Resamples `src` onto the grid of `reference` by trilinear interpolation in
/// physical coordinates. Samples outside the source clamp to the edge voxel.
pub fn resample_to_reference<T: Scalar, U>(src: &Volume<T>, reference: &Volume<U>) -> Volume<T> {
    if src.same_grid(reference) {
        return src.clone();
    }
    let positions: Vec<Vec<(usize, usize, T)>> = (0..3)
        .map(|axis| {
            axis_weights(
                reference.dims[axis],
                reference.spacing[axis],
                src.dims[axis],
                src.spacing[axis],
            )
        })
        .collect();
    let [d, h, w] = reference.dims;
    let mut data = Vec::with_capacity(d * h * w);
    for &(z0, z1, fz) in &positions[0] {
        for &(y0, y1, fy) in &positions[1] {
            for &(x0, x1, fx) in &positions[2] {
                let lerp = |a: T, b: T, f: T| a + (b - a) * f;
                let c00 = lerp(src.get(z0, y0, x0), src.get(z0, y0, x1), fx);
                let c01 = lerp(src.get(z0, y1, x0), src.get(z0, y1, x1), fx);
                let c10 = lerp(src.get(z1, y0, x0), src.get(z1, y0, x1), fx);
                let c11 = lerp(src.get(z1, y1, x0), src.get(z1, y1, x1), fx);
                let c0 = lerp(c00, c01, fy);
                let c1 = lerp(c10, c11, fy);
                data.push(lerp(c0, c1, fz));
            }
        }
    }
    Volume {
        dims: reference.dims,
        spacing: reference.spacing,
        data,
    }
}

fn axis_weights<T: Scalar>(
    n_ref: usize,
    s_ref: f64,
    n_src: usize,
    s_src: f64,
) -> Vec<(usize, usize, T)> {
    (0..n_ref)
        .map(|i| {
            let u = ((i as f64 + 0.5) * s_ref / s_src - 0.5).clamp(0.0, (n_src - 1) as f64);
            let lo = u.floor() as usize;
            let hi = (lo + 1).min(n_src - 1);
            (lo, hi, T::of(u - lo as f64))
        })
        .collect()
}

/// Nearest-neighbour resampling, used for label and mask grids.
pub fn resample_nearest<T: Copy, U>(src: &Volume<T>, reference: &Volume<U>) -> Volume<T> {
    if src.same_grid(reference) {
        return src.clone();
    }
    let index = |axis: usize| -> Vec<usize> {
        (0..reference.dims[axis])
            .map(|i| {
                let p = (i as f64 + 0.5) * reference.spacing[axis] / src.spacing[axis];
                (p.floor().max(0.0) as usize).min(src.dims[axis] - 1)
            })
            .collect()
    };
    let (iz, iy, ix) = (index(0), index(1), index(2));
    let mut data = Vec::with_capacity(reference.data.len());
    for &z in &iz {
        for &y in &iy {
            for &x in &ix {
                data.push(src.get(z, y, x));
            }
        }
    }
    Volume {
        dims: reference.dims,
        spacing: reference.spacing,
        data,
    }
}

/// The MRI channels consumed by the detector, in fusion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sequence {
    T2,
    Adc,
    Dwi,
}

impl Sequence {
    pub const ALL: [Sequence; 3] = [Sequence::T2, Sequence::Adc, Sequence::Dwi];

    pub fn name(self) -> &'static str {
        match self {
            Sequence::T2 => "t2",
            Sequence::Adc => "adc",
            Sequence::Dwi => "dwi",
        }
    }
}

/// Role of a volume file, as recorded in its sidecar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    T2,
    Adc,
    Dwi,
    Gland,
    Lesion,
    Heatmap,
    Anomaly,
}

impl Role {
    fn file_stem(self) -> &'static str {
        match self {
            Role::T2 => "t2",
            Role::Adc => "adc",
            Role::Dwi => "dwi",
            Role::Gland => "gland",
            Role::Lesion => "lesion",
            Role::Heatmap => "heatmap",
            Role::Anomaly => "anomaly",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub role: Role,
    #[serde(default = "default_version")]
    pub version: u32,
}

fn default_version() -> u32 {
    SIDECAR_VERSION
}

/// Path of the sidecar that belongs to a `.f32raw` file.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let stem = raw
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.strip_suffix(".f32raw").unwrap_or(n))
        .unwrap_or("volume");
    raw.with_file_name(format!("{stem}.meta.json"))
}

/// Writes `<dir>/<name>.f32raw` and its sidecar.
pub fn write_volume<T: Scalar>(dir: &Path, name: &str, volume: &Volume<T>, role: Role) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let raw = dir.join(format!("{name}.f32raw"));
    let mut bytes = Vec::with_capacity(volume.len() * 4);
    for &v in volume.data() {
        bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
    let sidecar = Sidecar {
        dims: volume.dims(),
        spacing_mm: volume.spacing(),
        role,
        version: SIDECAR_VERSION,
    };
    let meta = sidecar_path(&raw);
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
    Ok(raw)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if sidecar.version != SIDECAR_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported sidecar version {} (expected {SIDECAR_VERSION})",
            path.display(),
            sidecar.version
        )));
    }
    Ok(sidecar)
}

/// Reads a raw volume given its data file and sidecar.
pub fn read_volume(raw: &Path, sidecar: &Path) -> Result<(Volume<f64>, Role)> {
    let meta = read_sidecar(sidecar)?;
    let bytes = fs::read(raw).map_err(|e| Error::io(raw, e))?;
    let expected = meta.dims.iter().product::<usize>() * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} bytes for dims {:?}, found {}",
            raw.display(),
            meta.dims,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let volume = Volume::new(meta.dims, meta.spacing_mm, data)
        .map_err(|e| Error::Format(format!("{}: {e}", sidecar.display())))?;
    Ok((volume, meta.role))
}

/// One co-registered bi-parametric study.
#[derive(Clone, Debug, PartialEq)]
pub struct Study {
    pub patient_id: String,
    pub t2: Volume<f64>,
    pub adc: Volume<f64>,
    pub dwi: Volume<f64>,
    pub gland_mask: Volume<u8>,
    /// 0 = background, k = lesion id.
    pub lesion_mask: Option<Volume<u16>>,
}

impl Study {
    /// Builds a study, checking that every grid matches the T2 grid.
    pub fn new(
        patient_id: impl Into<String>,
        t2: Volume<f64>,
        adc: Volume<f64>,
        dwi: Volume<f64>,
        gland_mask: Volume<u8>,
        lesion_mask: Option<Volume<u16>>,
    ) -> Result<Self> {
        let grids_match = t2.same_grid(&adc)
            && t2.same_grid(&dwi)
            && t2.same_grid(&gland_mask)
            && lesion_mask.as_ref().is_none_or(|l| t2.same_grid(l));
        if !grids_match {
            return Err(Error::Ingest(
                "all channels and masks must share the T2 grid".into(),
            ));
        }
        Ok(Study {
            patient_id: patient_id.into(),
            t2,
            adc,
            dwi,
            gland_mask,
            lesion_mask,
        })
    }

    pub fn channel(&self, sequence: Sequence) -> &Volume<f64> {
        match sequence {
            Sequence::T2 => &self.t2,
            Sequence::Adc => &self.adc,
            Sequence::Dwi => &self.dwi,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.t2.dims()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.t2.spacing()
    }

    pub fn in_gland(&self, z: usize, y: usize, x: usize) -> bool {
        self.gland_mask.get(z, y, x) != 0
    }

    pub fn lesion_at(&self, z: usize, y: usize, x: usize) -> u16 {
        self.lesion_mask.as_ref().map_or(0, |m| m.get(z, y, x))
    }

    pub fn has_lesion(&self) -> bool {
        self.lesion_mask
            .as_ref()
            .is_some_and(|m| m.data().iter().any(|&v| v != 0))
    }

    /// Distinct lesion ids present in the lesion mask, ascending.
    pub fn lesion_ids(&self) -> Vec<u16> {
        let mut ids: Vec<u16> = self
            .lesion_mask
            .as_ref()
            .map(|m| m.data().iter().copied().filter(|&v| v != 0).collect())
            .unwrap_or_default();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Voxel indices of each lesion, keyed by ascending lesion id.
    pub fn lesion_voxel_sets(&self) -> Vec<(u16, Vec<usize>)> {
        let Some(mask) = &self.lesion_mask else {
            return Vec::new();
        };
        let ids = self.lesion_ids();
        let mut sets: Vec<(u16, Vec<usize>)> = ids.iter().map(|&id| (id, Vec::new())).collect();
        for (i, &v) in mask.data().iter().enumerate() {
            if v != 0 {
                let k = ids.binary_search(&v).expect("id collected above");
                sets[k].1.push(i);
            }
        }
        sets
    }

    /// Slices that contain at least one gland voxel.
    pub fn gland_slices(&self) -> Vec<usize> {
        (0..self.gland_mask.depth())
            .filter(|&z| self.gland_mask.slice(z).iter().any(|&v| v != 0))
            .collect()
    }
}

/// Loads a study from `(raw, sidecar)` pairs, resampling everything onto the
/// T2 grid (trilinear for intensities, nearest neighbour for masks).
pub fn load_study(files: &[(PathBuf, PathBuf)], patient_id: &str) -> Result<Study> {
    let mut t2 = None;
    let mut adc = None;
    let mut dwi = None;
    let mut gland = None;
    let mut lesion = None;
    for (raw, meta) in files {
        let (volume, role) = read_volume(raw, meta)?;
        let slot = match role {
            Role::T2 => &mut t2,
            Role::Adc => &mut adc,
            Role::Dwi => &mut dwi,
            Role::Gland => &mut gland,
            Role::Lesion => &mut lesion,
            Role::Heatmap | Role::Anomaly => continue,
        };
        if slot.is_some() {
            return Err(Error::Ingest(format!(
                "{patient_id}: duplicate {role:?} channel"
            )));
        }
        *slot = Some(volume);
    }
    let missing = |name: &str| Error::Ingest(format!("{patient_id}: missing {name} channel"));
    let t2 = t2.ok_or_else(|| missing("T2"))?;
    let adc = adc.ok_or_else(|| missing("ADC"))?;
    let dwi = dwi.ok_or_else(|| missing("DWI"))?;
    let gland = gland.ok_or_else(|| missing("GLAND"))?;

    let adc = resample_to_reference(&adc, &t2);
    let dwi = resample_to_reference(&dwi, &t2);
    let gland = resample_nearest(&gland, &t2).map(|v| u8::from(v > 0.5));
    let lesion = lesion.map(|l| resample_nearest(&l, &t2).map(|v| v.round().max(0.0) as u16));
    if gland.data().iter().all(|&v| v == 0) {
        return Err(Error::Ingest(format!("{patient_id}: gland mask is empty")));
    }
    Study::new(patient_id, t2, adc, dwi, gland, lesion)
}

/// Loads every `*.meta.json` + `.f32raw` pair in `dir` as one study named
/// after the directory.
pub fn load_study_dir(dir: &Path) -> Result<Study> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(stem) = name.strip_suffix(".meta.json") {
            let role = read_sidecar(&path)?.role;
            if matches!(role, Role::Heatmap | Role::Anomaly) {
                continue;
            }
            files.push((dir.join(format!("{stem}.f32raw")), path));
        }
    }
    files.sort();
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("study")
        .to_string();
    load_study(&files, &id)
}

/// Writes all channels and masks of `study` into `dir`.
pub fn save_study(dir: &Path, study: &Study) -> Result<()> {
    write_volume(dir, Role::T2.file_stem(), &study.t2, Role::T2)?;
    write_volume(dir, Role::Adc.file_stem(), &study.adc, Role::Adc)?;
    write_volume(dir, Role::Dwi.file_stem(), &study.dwi, Role::Dwi)?;
    write_volume(
        dir,
        Role::Gland.file_stem(),
        &study.gland_mask.map(f64::from),
        Role::Gland,
    )?;
    if let Some(lesion) = &study.lesion_mask {
        write_volume(dir, Role::Lesion.file_stem(), &lesion.map(f64::from), Role::Lesion)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Volume<f64> {
        // value = 1 + 2x + 3y + 5z on a 2×2×2 grid
        let mut data = Vec::new();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    data.push(1.0 + 2.0 * x as f64 + 3.0 * y as f64 + 5.0 * z as f64);
                }
            }
        }
        Volume::new([2, 2, 2], [1.5, 1.5, 1.5], data).unwrap()
    }

    #[test]
    fn rejects_bad_spacing_and_length() {
        assert!(matches!(
            Volume::new([1, 1, 2], [1.0, 0.0, 1.0], vec![0.0; 2]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Volume::new([1, 1, 2], [1.0, 1.0, 1.0], vec![0.0; 3]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn identity_resample_is_bitwise() {
        let v = ramp();
        let out = resample_to_reference(&v, &v);
        assert_eq!(out, v);
    }

    #[test]
    fn constant_resample_stays_constant() {
        let src = Volume::filled([3, 5, 4], [2.0, 0.7, 1.3], 4.25f64).unwrap();
        let reference = Volume::filled([7, 3, 9], [0.9, 1.1, 0.5], 0.0f64).unwrap();
        let out = resample_to_reference(&src, &reference);
        assert!(out.data().iter().all(|&v| (v - 4.25).abs() < 1e-12));
    }

    #[test]
    fn ramp_upsampled_matches_hand_trilinear() {
        // Source voxel centres at 0.75 and 2.25 mm, target centres at 0.5, 1.5, 2.5 mm.
        // Continuous source index u = p / 1.5 - 0.5 → -1/6 (clamped 0), 0.5, 7/6 (clamped 1).
        let reference = Volume::filled([3, 3, 3], [1.0, 1.0, 1.0], 0.0f64).unwrap();
        let out = resample_to_reference(&ramp(), &reference);
        let u = [0.0, 0.5, 1.0];
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    let expected = 1.0 + 2.0 * u[x] + 3.0 * u[y] + 5.0 * u[z];
                    assert!((out.get(z, y, x) - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn nearest_resample_picks_containing_voxel() {
        let src = Volume::new([1, 1, 2], [1.0, 1.0, 2.0], vec![7u16, 9]).unwrap();
        let reference = Volume::filled([1, 1, 4], [1.0, 1.0, 1.0], 0u8).unwrap();
        let out = resample_nearest(&src, &reference);
        assert_eq!(out.data(), &[7, 7, 9, 9]);
    }

    #[test]
    fn window_origin_clamps() {
        assert_eq!(window_origin(30, 24, 64), 18);
        assert_eq!(window_origin(5, 24, 64), 0);
        assert_eq!(window_origin(60, 24, 64), 40);
    }
}

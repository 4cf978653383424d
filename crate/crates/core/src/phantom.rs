//! Synthetic three-channel prostate phantoms with planted lesions.
//!
//! Intensity model (before noise), per voxel:
//!
//! * background outside the gland: T2 0.25, ADC 0.35, DWI 0.15
//! * gland: T2 0.60, ADC 0.65, DWI 0.30
//! * both multiplied by `1 + texture_amplitude * t(p)`, where `t` is a fixed
//!   smooth sinusoidal texture in `[-1, 1]`
//! * every lesion and mimic draws a strength `a` uniformly from
//!   `[1 - contrast_jitter, 1]`; with `c = texture_contrast · a`:
//! * lesion voxels: T2 and ADC scaled by `1 - c`, DWI by `1 + c` (hypointense,
//!   hypointense, hyperintense), times `1 + lesion_heterogeneity · u` with `u`
//!   uniform in `[-1, 1]` per voxel
//! * benign mimics: T2 scaled by `1 - c`, ADC by `1 - s c` and DWI by
//!   `1 + s c` with `s = mimic_similarity`; mimics are smooth and not annotated
//!
//! Independent Gaussian noise with `noise_sigma` is then added to each channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::volume::{Study, Volume};

const BACKGROUND: [f64; 3] = [0.25, 0.35, 0.15];
const GLAND: [f64; 3] = [0.60, 0.65, 0.30];
const MAX_PLACEMENT_ATTEMPTS: usize = 2000;
/// Fresh layouts tried when an earlier blob leaves no room for a later one.
const MAX_LAYOUTS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub seed: u64,
    pub n_lesions: usize,
    pub gland_radius_mm: f64,
    pub lesion_radius_mm: f64,
    /// Relative intensity change inside lesions, in (0, 1].
    pub texture_contrast: f64,
    pub noise_sigma: f64,
    /// Unannotated T2-dark blobs that resemble lesions in one channel only.
    pub n_mimics: usize,
    /// How closely mimics follow the lesion ADC/DWI signature, in [0, 1].
    pub mimic_similarity: f64,
    /// Relative spread of lesion and mimic strengths, in [0, 1).
    pub contrast_jitter: f64,
    /// Amplitude of the per-voxel multiplicative texture inside lesions.
    pub lesion_heterogeneity: f64,
    /// Amplitude of the smooth multiplicative background texture.
    pub texture_amplitude: f64,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            seed: 0,
            n_lesions: 1,
            gland_radius_mm: 30.0,
            lesion_radius_mm: 8.0,
            texture_contrast: 0.5,
            noise_sigma: 0.03,
            n_mimics: 2,
            mimic_similarity: 0.8,
            contrast_jitter: 0.5,
            lesion_heterogeneity: 0.1,
            texture_amplitude: 0.08,
            dims: [12, 96, 96],
            spacing_mm: [3.0, 1.0, 1.0],
        }
    }
}

fn parse_list<const N: usize, V: std::str::FromStr>(s: &str) -> Option<[V; N]> {
    let v: Vec<V> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    v.try_into().ok()
}

fn render_list<V: std::fmt::Display>(v: &[V]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl PhantomSpec {
    /// Parses a `key = value` spec over the defaults. Keys are the field
    /// names; `dims` and `spacing_mm` take comma lists.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = PhantomSpec::default();
        for (key, value) in crate::config::key_values(text)? {
            let bad = || Error::Config(format!("invalid value {value:?} for phantom key {key}"));
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
            let int = |v: &str| v.parse::<usize>().map_err(|_| bad());
            match key {
                "seed" => s.seed = value.parse().map_err(|_| bad())?,
                "n_lesions" => s.n_lesions = int(value)?,
                "gland_radius_mm" => s.gland_radius_mm = num(value)?,
                "lesion_radius_mm" => s.lesion_radius_mm = num(value)?,
                "texture_contrast" => s.texture_contrast = num(value)?,
                "noise_sigma" => s.noise_sigma = num(value)?,
                "n_mimics" => s.n_mimics = int(value)?,
                "mimic_similarity" => s.mimic_similarity = num(value)?,
                "contrast_jitter" => s.contrast_jitter = num(value)?,
                "lesion_heterogeneity" => s.lesion_heterogeneity = num(value)?,
                "texture_amplitude" => s.texture_amplitude = num(value)?,
                "dims" => s.dims = parse_list(value).ok_or_else(bad)?,
                "spacing_mm" => s.spacing_mm = parse_list(value).ok_or_else(bad)?,
                _ => return Err(Error::Config(format!("unknown phantom key {key:?}"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        [
            ("seed", self.seed.to_string()),
            ("n_lesions", self.n_lesions.to_string()),
            ("gland_radius_mm", self.gland_radius_mm.to_string()),
            ("lesion_radius_mm", self.lesion_radius_mm.to_string()),
            ("texture_contrast", self.texture_contrast.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("n_mimics", self.n_mimics.to_string()),
            ("mimic_similarity", self.mimic_similarity.to_string()),
            ("contrast_jitter", self.contrast_jitter.to_string()),
            ("lesion_heterogeneity", self.lesion_heterogeneity.to_string()),
            ("texture_amplitude", self.texture_amplitude.to_string()),
            ("dims", render_list(&self.dims)),
            ("spacing_mm", render_list(&self.spacing_mm)),
        ]
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lesion_radius_mm > 0.0 && self.lesion_radius_mm < self.gland_radius_mm) {
            return bad(format!(
                "lesion radius {} must be positive and below gland radius {}",
                self.lesion_radius_mm, self.gland_radius_mm
            ));
        }
        if !(self.texture_contrast > 0.0 && self.texture_contrast <= 1.0) {
            return bad(format!("texture contrast {} not in (0, 1]", self.texture_contrast));
        }
        if !(self.noise_sigma >= 0.0) || !(self.texture_amplitude >= 0.0) || !(self.lesion_heterogeneity >= 0.0) {
            return bad("noise sigma, texture amplitude and heterogeneity must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.mimic_similarity) || !(0.0..1.0).contains(&self.contrast_jitter) {
            return bad(format!(
                "mimic similarity {} must be in [0, 1] and contrast jitter {} in [0, 1)",
                self.mimic_similarity, self.contrast_jitter
            ));
        }
        if self.dims.contains(&0) || self.spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return bad("phantom dims and spacing must be positive".into());
        }
        let extent_y = self.dims[1] as f64 * self.spacing_mm[1];
        let extent_x = self.dims[2] as f64 * self.spacing_mm[2];
        if 2.0 * self.gland_radius_mm >= extent_y.min(extent_x) {
            return bad(format!(
                "gland radius {} does not fit a {extent_y}×{extent_x} mm slice",
                self.gland_radius_mm
            ));
        }
        Ok(())
    }
}

/// Ground truth for one planted lesion.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedLesion {
    pub id: u16,
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
    pub voxels: usize,
}

#[derive(Clone, Copy)]
struct Ellipsoid {
    center: [f64; 3],
    axes: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|k| ((p[k] - self.center[k]) / self.axes[k]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

struct Texture {
    waves: Vec<([f64; 3], f64)>,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..3)
            .map(|_| {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let wavelength = rng.random_range(6.0..20.0);
                let k = std::f64::consts::TAU / wavelength;
                let kz = rng.random_range(-0.3..0.3) * k;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                ([kz, k * theta.sin(), k * theta.cos()], phase)
            })
            .collect();
        Texture { waves }
    }

    fn at(&self, p: [f64; 3]) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|(k, phase)| (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).sin())
            .sum();
        s / self.waves.len() as f64
    }
}

/// Generates a deterministic phantom study and its lesion list.
pub fn generate_phantom(spec: &PhantomSpec, patient_id: &str) -> Result<(Study, Vec<PlantedLesion>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [d, h, w] = spec.dims;
    let sp = spec.spacing_mm;
    let center_of = |z: usize, y: usize, x: usize| {
        [
            (z as f64 + 0.5) * sp[0],
            (y as f64 + 0.5) * sp[1],
            (x as f64 + 0.5) * sp[2],
        ]
    };
    let extent = [d as f64 * sp[0], h as f64 * sp[1], w as f64 * sp[2]];

    let r = spec.gland_radius_mm;
    let gland = Ellipsoid {
        center: [
            extent[0] / 2.0,
            extent[1] / 2.0 + rng.random_range(-2.0..2.0),
            extent[2] / 2.0 + rng.random_range(-2.0..2.0),
        ],
        axes: [(0.7 * r).min(0.5 * extent[0] - sp[0]).max(sp[0]), 0.85 * r, r],
    };
    let texture = Texture::new(&mut rng);

    let mut gland_mask = Volume::filled(spec.dims, sp, 0u8)?;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if gland.contains(center_of(z, y, x)) {
                    gland_mask.set(z, y, x, 1);
                }
            }
        }
    }

    let place = |rng: &mut ChaCha8Rng, placed: &mut Vec<Ellipsoid>| -> Result<Ellipsoid> {
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let rl = spec.lesion_radius_mm;
            let axes = [
                rl * rng.random_range(0.8..1.2),
                rl * rng.random_range(0.8..1.2),
                rl * rng.random_range(0.8..1.2),
            ];
            let shrunk: Vec<f64> = (0..3).map(|k| gland.axes[k] - axes[k]).collect();
            if shrunk.iter().any(|&a| a <= 0.0) {
                continue;
            }
            let center: [f64; 3] =
                std::array::from_fn(|k| gland.center[k] + rng.random_range(-1.0..1.0) * shrunk[k]);
            let candidate = Ellipsoid { center, axes };
            if !(0..3).map(|k| ((center[k] - gland.center[k]) / shrunk[k]).powi(2)).sum::<f64>().le(&1.0) {
                continue;
            }
            let clear = placed.iter().all(|o| {
                let dist = (0..3).map(|k| (o.center[k] - center[k]).powi(2)).sum::<f64>().sqrt();
                let reach = |e: &Ellipsoid| e.axes.iter().cloned().fold(0.0, f64::max);
                dist >= reach(o) + reach(&candidate) + 2.0
            });
            if !clear {
                continue;
            }
            let mut any = false;
            let mut inside = true;
            for z in 0..d {
                for y in 0..h {
                    for x in 0..w {
                        if candidate.contains(center_of(z, y, x)) {
                            any = true;
                            inside &= gland_mask.get(z, y, x) != 0;
                        }
                    }
                }
            }
            if any && inside {
                placed.push(candidate);
                return Ok(candidate);
            }
        }
        Err(Error::Placement {
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })
    };

    let mut layout = None;
    for _ in 0..MAX_LAYOUTS {
        let mut placed: Vec<Ellipsoid> = Vec::new();
        if let Ok(blobs) = (0..spec.n_lesions + spec.n_mimics)
            .map(|_| place(&mut rng, &mut placed))
            .collect::<Result<Vec<_>>>()
        {
            layout = Some(blobs);
            break;
        }
    }
    let Some(mut lesions) = layout else {
        return Err(Error::Placement {
            attempts: MAX_LAYOUTS * MAX_PLACEMENT_ATTEMPTS,
        });
    };
    let mimics = lesions.split_off(spec.n_lesions);

    let mut strength = || spec.texture_contrast * (1.0 - spec.contrast_jitter * rng.random::<f64>());
    let lesion_c: Vec<f64> = lesions.iter().map(|_| strength()).collect();
    let mimic_c: Vec<f64> = mimics.iter().map(|_| strength()).collect();
    let hetero = spec.lesion_heterogeneity;
    let mut lesion_mask = Volume::filled(spec.dims, sp, 0u16)?;
    let mut channels: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(d * h * w));
    let s = spec.mimic_similarity;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let p = center_of(z, y, x);
                let base = if gland_mask.get(z, y, x) != 0 { GLAND } else { BACKGROUND };
                let modulation = 1.0 + spec.texture_amplitude * texture.at(p);
                let mut v: [f64; 3] = std::array::from_fn(|k| base[k] * modulation);
                if let Some(k) = lesions.iter().position(|e| e.contains(p)) {
                    lesion_mask.set(z, y, x, k as u16 + 1);
                    let c = lesion_c[k];
                    let u = 1.0 + hetero * rng.random_range(-1.0..=1.0);
                    v[0] *= (1.0 - c) * u;
                    v[1] *= (1.0 - c) * u;
                    v[2] *= (1.0 + c) * u;
                } else if let Some(m) = mimics.iter().position(|e| e.contains(p)) {
                    let c = mimic_c[m];
                    v[0] *= 1.0 - c;
                    v[1] *= 1.0 - s * c;
                    v[2] *= 1.0 + s * c;
                }
                for k in 0..3 {
                    channels[k].push(v[k]);
                }
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        for channel in channels.iter_mut() {
            for v in channel.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }

    let planted = lesions
        .iter()
        .enumerate()
        .map(|(k, e)| PlantedLesion {
            id: k as u16 + 1,
            center_mm: e.center,
            semi_axes_mm: e.axes,
            voxels: lesion_mask.data().iter().filter(|&&v| v == k as u16 + 1).count(),
        })
        .collect();
    let [t2, adc, dwi] = channels;
    let study = Study::new(
        patient_id,
        Volume::new(spec.dims, sp, t2)?,
        Volume::new(spec.dims, sp, adc)?,
        Volume::new(spec.dims, sp, dwi)?,
        gland_mask,
        Some(lesion_mask),
    )?;
    Ok((study, planted))
}

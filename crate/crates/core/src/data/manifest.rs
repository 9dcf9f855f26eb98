use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::degrade::Degradation;
use super::image::Image;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 8] = ["path", "mos", "width", "height", "blur", "noise", "down", "contrast"];

/// One labelled image. `path` is relative to the manifest's root directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub path: String,
    pub mos: f64,
    pub width: usize,
    pub height: usize,
    pub degradation: Degradation,
}

#[derive(Serialize, Deserialize)]
struct Row {
    path: String,
    mos: f64,
    width: usize,
    height: usize,
    blur: f64,
    noise: f64,
    down: f64,
    contrast: f64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    version: u32,
    seed: Option<u64>,
    count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    samples: Vec<Sample>,
    seed: Option<u64>,
    version: u32,
    root: PathBuf,
}

fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

impl Manifest {
    /// Checks labels against their degradation records and path uniqueness.
    pub fn new(samples: Vec<Sample>, seed: Option<u64>, root: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if !seen.insert(s.path.as_str()) {
                return Err(Error::Format(format!("duplicate path {} at row {}", s.path, i + 1)));
            }
            if !(0.0..=1.0).contains(&s.mos) {
                return Err(Error::Format(format!("{}: mos {} outside [0, 1]", s.path, s.mos)));
            }
            s.degradation
                .validate()
                .map_err(|e| Error::Format(format!("{}: {e}", s.path)))?;
            let expected = s.degradation.mos();
            if (s.mos - expected).abs() > 1e-12 {
                return Err(Error::Format(format!(
                    "{}: mos {} does not match its degradation record ({expected})",
                    s.path, s.mos
                )));
            }
        }
        Ok(Manifest {
            samples,
            seed,
            version: MANIFEST_VERSION,
            root: root.into(),
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, sample: &Sample) -> PathBuf {
        self.root.join(&sample.path)
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mos).collect()
    }

    /// The samples at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Manifest> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("index {i} out of range for {} samples", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Manifest::new(samples, self.seed, self.root.clone())
    }

    /// Write the CSV plus a `.json` sidecar carrying seed and format version.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        for s in &self.samples {
            w.serialize(Row {
                path: s.path.clone(),
                mos: s.mos,
                width: s.width,
                height: s.height,
                blur: s.degradation.blur,
                noise: s.degradation.noise,
                down: s.degradation.down,
                contrast: s.degradation.contrast,
            })
            .map_err(|e| csv_error(path, e))?;
        }
        if self.samples.is_empty() {
            w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let meta = Meta {
            version: self.version,
            seed: self.seed,
            count: self.len(),
        };
        let mp = meta_path(path);
        let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&mp, json + "\n").map_err(|e| Error::io(&mp, e))
    }

    /// Read a manifest CSV. Image paths resolve against the CSV's directory.
    /// The metadata sidecar is optional.
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?;
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Format(format!(
                "{}: header must be {}",
                path.display(),
                CSV_HEADER.join(",")
            )));
        }
        let mut samples = Vec::new();
        for row in r.deserialize::<Row>() {
            let row = row.map_err(|e| csv_error(path, e))?;
            samples.push(Sample {
                path: row.path,
                mos: row.mos,
                width: row.width,
                height: row.height,
                degradation: Degradation {
                    blur: row.blur,
                    noise: row.noise,
                    down: row.down,
                    contrast: row.contrast,
                },
            });
        }
        let mp = meta_path(path);
        let seed = match fs::read_to_string(&mp) {
            Ok(text) => {
                let meta: Meta = serde_json::from_str(&text)
                    .map_err(|e| Error::Format(format!("{}: {e}", mp.display())))?;
                if meta.version != MANIFEST_VERSION {
                    return Err(Error::Format(format!(
                        "{}: unsupported manifest version {}",
                        mp.display(),
                        meta.version
                    )));
                }
                meta.seed
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(Error::io(&mp, e)),
        };
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::new(samples, seed, root)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    Ok(())
}

fn subset_size(n: usize, fraction: f64) -> usize {
    // the epsilon keeps 0.9 * 10 from landing on 8.999…
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Seeded shuffle, keep the first `⌊fraction·n⌋`. The subset keeps manifest
/// order; `full` is returned unchanged.
pub fn split_manifest(m: &Manifest, fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    let (subset, _) = partition(m, fraction, seed)?;
    Ok((subset, m.clone()))
}

/// Like [`split_manifest`] but returns the complement instead of the full set.
pub fn partition(m: &Manifest, fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    check_fraction(fraction)?;
    let k = subset_size(m.len(), fraction);
    let idx = shuffled_indices(m.len(), seed);
    let mut keep = idx[..k].to_vec();
    let mut rest = idx[k..].to_vec();
    keep.sort_unstable();
    rest.sort_unstable();
    Ok((m.select(&keep)?, m.select(&rest)?))
}

/// A manifest with every image decoded in memory. Cloning and
/// [`Dataset::restrict`] share the decoded images.
#[derive(Clone, Debug)]
pub struct Dataset {
    manifest: Manifest,
    images: Vec<Arc<Image>>,
}

impl Dataset {
    pub fn load(manifest: &Manifest) -> Result<Dataset> {
        let images = manifest
            .samples()
            .iter()
            .map(|s| {
                let img = Image::load_png(manifest.resolve(s))?;
                if img.width() != s.width || img.height() != s.height {
                    return Err(Error::Format(format!(
                        "{}: image is {}x{}, manifest says {}x{}",
                        s.path,
                        img.width(),
                        img.height(),
                        s.width,
                        s.height
                    )));
                }
                Ok(Arc::new(img))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            manifest: manifest.clone(),
            images,
        })
    }

    /// Build from images already in memory; `images[i]` belongs to sample `i`.
    pub fn from_parts(manifest: Manifest, images: Vec<Image>) -> Result<Dataset> {
        if images.len() != manifest.len() {
            return Err(Error::invalid(format!(
                "{} images for {} samples",
                images.len(),
                manifest.len()
            )));
        }
        Ok(Dataset {
            manifest,
            images: images.into_iter().map(Arc::new).collect(),
        })
    }

    /// The samples of `sub` (which must all be present here), reusing decoded images.
    pub fn restrict(&self, sub: &Manifest) -> Result<Dataset> {
        let index: HashMap<&str, usize> = self
            .manifest
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.path.as_str(), i))
            .collect();
        let images = sub
            .samples()
            .iter()
            .map(|s| {
                index
                    .get(s.path.as_str())
                    .map(|&i| self.images[i].clone())
                    .ok_or_else(|| Error::invalid(format!("{} is not part of this dataset", s.path)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            manifest: sub.clone(),
            images,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.manifest.samples()[i]
    }

    pub fn image(&self, i: usize) -> &Image {
        &self.images[i]
    }
}

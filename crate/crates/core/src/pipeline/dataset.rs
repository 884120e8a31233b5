//! Paired blurred/sharp datasets: ingestion, splitting, severity statistics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub blurred_path: PathBuf,
    pub sharp_path: PathBuf,
    pub split: Split,
}

/// Aligned blurred/sharp samples plus the target resolution every loaded
/// image is resized to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedDataset {
    pub pairs: Vec<PairRecord>,
    pub img_size: (usize, usize),
    /// Unpaired files reported during ingestion.
    pub warnings: Vec<String>,
}

impl PairedDataset {
    /// Decode, resize, and normalize one pair.
    pub fn load_pair(&self, record: &PairRecord) -> Result<(ImageTensor, ImageTensor)> {
        let load = |path: &Path| -> Result<ImageTensor> {
            ImageTensor::load_png(path)?.resize_bilinear(self.img_size.0, self.img_size.1)
        };
        Ok((load(&record.blurred_path)?, load(&record.sharp_path)?))
    }

    pub fn records(&self, split: Split) -> Vec<&PairRecord> {
        self.pairs.iter().filter(|p| p.split == split).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut stems = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(stems)
}

/// Pair PNGs from two directories by identical filename stem. Every paired
/// image is decoded once to validate it; unpaired files become warnings.
pub fn ingest(blurred_dir: &Path, sharp_dir: &Path, img_size: (usize, usize)) -> Result<PairedDataset> {
    if img_size.0 == 0 || img_size.1 == 0 {
        return Err(Error::Parameter("img_size must be positive".into()));
    }
    let blurred = png_stems(blurred_dir)?;
    let mut sharp = png_stems(sharp_dir)?;
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for (stem, blurred_path) in blurred {
        match sharp.remove(&stem) {
            Some(sharp_path) => {
                pairs.push(PairRecord {
                    id: stem,
                    blurred_path,
                    sharp_path,
                    split: Split::Train,
                });
            }
            None => warnings.push(format!("unpaired blurred image: {}", blurred_path.display())),
        }
    }
    for (_, orphan) in sharp {
        warnings.push(format!("unpaired sharp image: {}", orphan.display()));
    }
    if pairs.is_empty() {
        return Err(Error::Dataset(format!(
            "no paired images between {} and {}",
            blurred_dir.display(),
            sharp_dir.display()
        )));
    }
    let dataset = PairedDataset { pairs, img_size, warnings };
    for record in &dataset.pairs {
        // decode now so bad files fail ingestion, not training
        dataset.load_pair(record)?;
    }
    Ok(dataset)
}

/// Split sizes, either proportional or exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    /// (train, val, test); must sum to 1.
    Fractions(f64, f64, f64),
    /// (train, val, test); must sum to the dataset size.
    Counts(usize, usize, usize),
}

impl SplitSpec {
    fn resolve(&self, n: usize) -> Result<(usize, usize, usize)> {
        match *self {
            SplitSpec::Counts(tr, va, te) => {
                if tr + va + te != n {
                    return Err(Error::Parameter(format!(
                        "split counts {tr}+{va}+{te} != dataset size {n}"
                    )));
                }
                Ok((tr, va, te))
            }
            SplitSpec::Fractions(ftr, fva, fte) => {
                if ftr < 0.0 || fva < 0.0 || fte < 0.0 || (ftr + fva + fte - 1.0).abs() > 1e-9 {
                    return Err(Error::Parameter(format!(
                        "split fractions {ftr}+{fva}+{fte} must be nonnegative and sum to 1"
                    )));
                }
                let mut tr = (ftr * n as f64).floor() as usize;
                let mut va = (fva * n as f64).floor() as usize;
                let mut te = (fte * n as f64).floor() as usize;
                // hand leftovers out in train/val/test order
                let mut rem = n - (tr + va + te);
                for slot in [&mut tr, &mut va, &mut te] {
                    if rem == 0 {
                        break;
                    }
                    *slot += 1;
                    rem -= 1;
                }
                Ok((tr, va, te))
            }
        }
    }
}

/// Deterministic seeded shuffle, then contiguous assignment train/val/test.
/// Splits are disjoint and cover the dataset.
pub fn split(dataset: &mut PairedDataset, spec: SplitSpec, seed: u64) -> Result<()> {
    let n = dataset.len();
    let (tr, va, _te) = spec.resolve(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    for (rank, &idx) in order.iter().enumerate() {
        dataset.pairs[idx].split = if rank < tr {
            Split::Train
        } else if rank < tr + va {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatBand {
    pub min: f64,
    pub mean: f64,
}

/// Blur-severity summary: blurred-vs-sharp PSNR and SSIM across all pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityStats {
    pub psnr_db: StatBand,
    pub ssim: StatBand,
    pub pairs: usize,
}

/// Severity of the full-scale reference corpus, recorded alongside desk
/// results for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityReference {
    pub psnr_db: StatBand,
    pub ssim: StatBand,
}

impl Default for SeverityReference {
    fn default() -> Self {
        Self {
            psnr_db: StatBand {
                min: 10.08,
                mean: 22.32,
            },
            ssim: StatBand {
                min: -0.0264,
                mean: 0.63,
            },
        }
    }
}

pub fn severity_stats(dataset: &PairedDataset) -> Result<SeverityStats> {
    if dataset.is_empty() {
        return Err(Error::Dataset("severity stats on an empty dataset".into()));
    }
    let mut psnr_min = f64::INFINITY;
    let mut psnr_sum = 0.0;
    let mut ssim_min = f64::INFINITY;
    let mut ssim_sum = 0.0;
    for record in &dataset.pairs {
        let (blurred, sharp) = dataset.load_pair(record)?;
        let p = metrics::psnr(&blurred, &sharp, 1.0)?;
        let s = metrics::ssim(&blurred, &sharp, 1.0)?;
        psnr_min = psnr_min.min(p);
        psnr_sum += p;
        ssim_min = ssim_min.min(s);
        ssim_sum += s;
    }
    let n = dataset.len() as f64;
    Ok(SeverityStats {
        psnr_db: StatBand {
            min: psnr_min,
            mean: psnr_sum / n,
        },
        ssim: StatBand {
            min: ssim_min,
            mean: ssim_sum / n,
        },
        pairs: dataset.len(),
    })
}

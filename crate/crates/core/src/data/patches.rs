use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const IMAGE_STREAM: u64 = 0x1ad6e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Pixel / 255.
    #[default]
    UnitRange,
    /// Pixel / 255 with the patch mean subtracted.
    UnitRangeDcRemoved,
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-range" => Ok(Normalization::UnitRange),
            "unit-range-dc-removed" | "dc-removed" => Ok(Normalization::UnitRangeDcRemoved),
            other => Err(Error::Config(format!(
                "unknown normalization {other:?} (expected unit-range or unit-range-dc-removed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub patch_edge: usize,
    pub count: usize,
    pub seed: u64,
    pub normalization: Normalization,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            patch_edge: 8,
            count: 8192,
            seed: 0,
            normalization: Normalization::UnitRange,
        }
    }
}

impl PatchConfig {
    pub fn signal_dim(&self) -> usize {
        self.patch_edge * self.patch_edge
    }
}

/// Samples `cfg.count` patches (top-left corners uniform over the valid
/// positions, with replacement) and stacks them as columns; each patch is
/// vectorized column-major.
pub fn extract_patches(img: &GrayImage, cfg: &PatchConfig) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_into(img, cfg, cfg.count, &mut rng)
}

fn sample_into(img: &GrayImage, cfg: &PatchConfig, count: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let e = cfg.patch_edge;
    if e == 0 || cfg.count == 0 {
        return Err(Error::Config("patch_edge and count must be at least 1".into()));
    }
    if img.width < e || img.height < e {
        return Err(Error::Input(format!(
            "{}x{} image is smaller than a {e}x{e} patch",
            img.width, img.height
        )));
    }
    let p = e * e;
    let mut out = Matrix::zeros(p, count);
    for j in 0..count {
        let r0 = rng.random_range(0..=img.height - e);
        let c0 = rng.random_range(0..=img.width - e);
        let col = out.col_mut(j);
        let mut total = 0u64;
        for pc in 0..e {
            for pr in 0..e {
                let px = img.get(r0 + pr, c0 + pc);
                total += px as u64;
                col[pc * e + pr] = px as f64 / 255.0;
            }
        }
        if cfg.normalization == Normalization::UnitRangeDcRemoved {
            // mean from the integer sum, so flat patches become exactly zero
            let mean = (total as f64 / p as f64) / 255.0;
            col.iter_mut().for_each(|v| *v -= mean);
        }
    }
    Ok(out)
}

/// Patches from several images: `cfg.count` is split as evenly as possible
/// (earlier images take the remainder) and columns are concatenated in
/// image order. Each image draws from its own seeded stream.
pub fn extract_patches_from_images(images: &[GrayImage], cfg: &PatchConfig) -> Result<Matrix> {
    if images.is_empty() {
        return Err(Error::Input("no images given".into()));
    }
    let n = images.len();
    let mut data = Vec::with_capacity(cfg.signal_dim() * cfg.count);
    for (i, img) in images.iter().enumerate() {
        let count = cfg.count / n + usize::from(i < cfg.count % n);
        if count == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(crate::sbo::derive_seed(cfg.seed, IMAGE_STREAM, i as u64));
        data.extend(sample_into(img, cfg, count, &mut rng)?.into_vec());
    }
    Matrix::from_col_major(cfg.signal_dim(), cfg.count, data)
}

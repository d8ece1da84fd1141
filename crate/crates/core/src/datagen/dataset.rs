use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distort::{apply_distortion, resize_bilinear, DistortionSpec};
use super::forge::{copy_move, removal_fill, splice};
use super::mask::{make_mask, MaskGranularity};
use super::texture::procedural_image;
use crate::bridge::{render_explanation, Verdict};
use crate::domain::{
    load_image, load_mask, save_image, save_mask, BinaryMask, DatasetManifest, ForgeryType, Label,
    ManifestEntry, RasterImage,
};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for};

const FORGE_ATTEMPTS: u64 = 20;
const SHIFT_ATTEMPTS: usize = 50;

/// Where clean source images come from.
#[derive(Clone, Debug)]
pub enum SourcePool {
    /// Seeded multi-frequency textures, generated on demand.
    Procedural,
    /// Fixed images, already resized to the working size.
    Images(Vec<RasterImage>),
}

impl SourcePool {
    /// Load every PNG/JPEG in `dir` (sorted by file name) and resize to
    /// `size×size`.
    pub fn from_dir(dir: impl AsRef<Path>, size: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
                    Some(ref e) if e == "png" || e == "jpg" || e == "jpeg"
                )
            })
            .collect();
        paths.sort();
        let images = paths
            .iter()
            .map(|p| load_image(p).and_then(|img| resize_bilinear(&img, size, size)))
            .collect::<Result<Vec<_>>>()?;
        if images.is_empty() {
            return Err(Error::Config(format!(
                "no source images in {}",
                dir.display()
            )));
        }
        Ok(SourcePool::Images(images))
    }

    /// Source image for stream 1; any other stream gives a donor that
    /// differs from the source whenever the pool has two or more images.
    fn pick(&self, seed: u64, stream: u64, size: usize) -> Result<RasterImage> {
        match self {
            SourcePool::Procedural => procedural_image(derive_seed(seed, stream), size),
            SourcePool::Images(v) if v.is_empty() => Err(Error::Config("empty source pool".into())),
            SourcePool::Images(v) => {
                let src = rng_for(seed, 1).random_range(0..v.len());
                let i = if stream == 1 || v.len() == 1 {
                    src
                } else {
                    (src + 1 + rng_for(seed, stream).random_range(0..v.len() - 1)) % v.len()
                };
                Ok(v[i].clone())
            }
        }
    }
}

/// Each entry gets at most one distortion, drawn uniformly from
/// `candidates` with the given probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionPolicy {
    pub candidates: Vec<DistortionSpec>,
    pub probability: f64,
}

impl DistortionPolicy {
    pub fn none() -> Self {
        Self {
            candidates: vec![],
            probability: 0.0,
        }
    }

    /// Noise sigma in {3, 15} or JPEG quality in {50, 100}, half the time.
    pub fn training_default() -> Self {
        Self {
            candidates: DistortionSpec::training_policy(),
            probability: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Config(format!(
                "distortion probability {} outside [0, 1]",
                self.probability
            )));
        }
        self.candidates
            .iter()
            .try_for_each(DistortionSpec::validate)
    }

    pub fn sample(&self, seed: u64) -> Vec<DistortionSpec> {
        if self.candidates.is_empty() {
            return vec![];
        }
        let mut rng = rng_for(seed, 0);
        if rng.random::<f64>() < self.probability {
            vec![self.candidates[rng.random_range(0..self.candidates.len())]]
        } else {
            vec![]
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetRequest {
    pub n_forged: usize,
    pub n_authentic: usize,
    /// Forged entry `i` uses `types[i % types.len()]`.
    pub types: Vec<ForgeryType>,
    /// Each forged entry draws one band from this list.
    pub granularities: Vec<MaskGranularity>,
    pub seed: u64,
    pub image_size: usize,
    pub policy: DistortionPolicy,
}

impl DatasetRequest {
    pub fn new(n_forged: usize, n_authentic: usize, seed: u64) -> Self {
        Self {
            n_forged,
            n_authentic,
            types: ForgeryType::FORGED.to_vec(),
            granularities: MaskGranularity::presets(),
            seed,
            image_size: 64,
            policy: DistortionPolicy::none(),
        }
    }
}

/// Everything produced for one entry, including the intermediate images
/// needed to audit tamper locality.
#[derive(Clone, Debug)]
pub struct Sample {
    pub source: RasterImage,
    /// Forged image before any distortion.
    pub tampered: RasterImage,
    /// Final image after distortions.
    pub image: RasterImage,
    /// Ground truth at the size of `tampered`.
    pub mask: BinaryMask,
    /// Ground truth at the size of `image`.
    pub final_mask: BinaryMask,
    pub label: Label,
    pub forgery_type: ForgeryType,
    pub distortions: Vec<DistortionSpec>,
}

fn pick_shift(seed: u64, mask: &BinaryMask) -> Option<(isize, isize)> {
    let bb = mask.bounding_box()?;
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let (x0, y0, x1, y1) = (
        bb.x0 as isize,
        bb.y0 as isize,
        bb.x1 as isize,
        bb.y1 as isize,
    );
    let (dx_lo, dx_hi) = (-x0, w - 1 - x1);
    let (dy_lo, dy_hi) = (-y0, h - 1 - y1);
    let mut rng = rng_for(seed, 0);
    let min_move = ((x1 - x0 + 1).max(y1 - y0 + 1) / 2).max(2);
    for _ in 0..SHIFT_ATTEMPTS {
        let dx = rng.random_range(dx_lo as i64..=dx_hi as i64) as isize;
        let dy = rng.random_range(dy_lo as i64..=dy_hi as i64) as isize;
        if dx.abs().max(dy.abs()) >= min_move {
            return Some((dx, dy));
        }
    }
    None
}

/// Deterministically produce one entry from its seed. Forged entries need a
/// granularity; distortions are applied in order.
pub fn synthesize(
    seed: u64,
    forgery_type: ForgeryType,
    granularity: Option<&MaskGranularity>,
    distortions: &[DistortionSpec],
    pool: &SourcePool,
    size: usize,
) -> Result<Sample> {
    let source = pool.pick(seed, 1, size)?;
    let (tampered, mask) = if forgery_type == ForgeryType::None {
        (source.clone(), BinaryMask::zeros(size, size))
    } else {
        let g = granularity.ok_or_else(|| {
            Error::Config(format!("{forgery_type} entry needs a mask granularity"))
        })?;
        forge_with_retries(seed, forgery_type, g, &source, pool, size)?
    };
    let mut image = tampered.clone();
    for (i, d) in distortions.iter().enumerate() {
        image = apply_distortion(&image, d, derive_seed(seed, 200 + i as u64))?;
    }
    let final_mask = if image.same_dims(size, size) {
        mask.clone()
    } else {
        mask.resize_nearest(image.width(), image.height())
    };
    let label = if forgery_type == ForgeryType::None {
        Label::Authentic
    } else {
        Label::Forged
    };
    Ok(Sample {
        source,
        tampered,
        image,
        mask,
        final_mask,
        label,
        forgery_type,
        distortions: distortions.to_vec(),
    })
}

fn forge_with_retries(
    seed: u64,
    forgery_type: ForgeryType,
    g: &MaskGranularity,
    source: &RasterImage,
    pool: &SourcePool,
    size: usize,
) -> Result<(RasterImage, BinaryMask)> {
    let mut last_err = None;
    for attempt in 0..FORGE_ATTEMPTS {
        let mask = make_mask(derive_seed(seed, 100 + attempt), g, size)?;
        let result = match forgery_type {
            ForgeryType::Splicing => {
                let donor = pool.pick(seed, 2, size)?;
                splice(source, &donor, &mask)
            }
            ForgeryType::CopyMove => match pick_shift(derive_seed(seed, 300 + attempt), &mask) {
                Some(shift) => copy_move(source, &mask, shift),
                None => Err(Error::Geometry("no admissible shift".into())),
            },
            ForgeryType::Removal => removal_fill(source, &mask),
            ForgeryType::None => unreachable!("authentic entries are not forged"),
        };
        match result {
            Ok(out) => return Ok(out),
            Err(e @ (Error::Geometry(_) | Error::Generation(_))) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(format!(
        "{forgery_type} forgery failed after {FORGE_ATTEMPTS} attempts: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Deterministic caption for a sample's ground truth.
pub fn caption_for(forgery_type: ForgeryType, mask: &BinaryMask) -> Result<String> {
    let verdict = if forgery_type == ForgeryType::None {
        Verdict::Authentic
    } else {
        Verdict::Forged
    };
    render_explanation(verdict, forgery_type, &mask.to_score_map())
}

struct Planned {
    id: String,
    seed: u64,
    forgery_type: ForgeryType,
    granularity: Option<MaskGranularity>,
    distortions: Vec<DistortionSpec>,
}

fn plan(req: &DatasetRequest) -> Result<Vec<Planned>> {
    if req.n_forged > 0 && (req.types.is_empty() || req.granularities.is_empty()) {
        return Err(Error::Config(
            "forged entries need types and granularities".into(),
        ));
    }
    if req.types.contains(&ForgeryType::None) {
        return Err(Error::Config("`none` is not a forgery type".into()));
    }
    for g in &req.granularities {
        g.validate()?;
    }
    req.policy.validate()?;
    let mut out = Vec::with_capacity(req.n_forged + req.n_authentic);
    for i in 0..req.n_forged {
        let seed = derive_seed(req.seed, i as u64);
        let gi = rng_for(seed, 7).random_range(0..req.granularities.len());
        out.push(Planned {
            id: format!("forged-{i:04}"),
            seed,
            forgery_type: req.types[i % req.types.len()],
            granularity: Some(req.granularities[gi]),
            distortions: req.policy.sample(derive_seed(seed, 8)),
        });
    }
    for j in 0..req.n_authentic {
        let seed = derive_seed(req.seed, (1 << 32) | j as u64);
        out.push(Planned {
            id: format!("authentic-{j:04}"),
            seed,
            forgery_type: ForgeryType::None,
            granularity: None,
            distortions: req.policy.sample(derive_seed(seed, 8)),
        });
    }
    Ok(out)
}

/// Generate images, masks and `manifest.json` under `out_dir`. Entries are
/// produced on `jobs` worker threads; output does not depend on `jobs`.
pub fn build_dataset(
    req: &DatasetRequest,
    pool: &SourcePool,
    out_dir: impl AsRef<Path>,
    jobs: usize,
) -> Result<DatasetManifest> {
    if let SourcePool::Images(v) = pool {
        if v.is_empty() {
            return Err(Error::Config("empty source pool".into()));
        }
    }
    let out_dir = out_dir.as_ref();
    let planned = plan(req)?;
    for sub in ["images", "masks"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let make = |p: &Planned| -> Result<ManifestEntry> {
        let s = synthesize(
            p.seed,
            p.forgery_type,
            p.granularity.as_ref(),
            &p.distortions,
            pool,
            req.image_size,
        )?;
        let image_path = PathBuf::from("images").join(format!("{}.png", p.id));
        let mask_path = PathBuf::from("masks").join(format!("{}.png", p.id));
        save_image(&s.image, out_dir.join(&image_path))?;
        save_mask(&s.final_mask, out_dir.join(&mask_path))?;
        Ok(ManifestEntry {
            id: p.id.clone(),
            image_path,
            mask_path,
            label: s.label,
            forgery_type: p.forgery_type,
            distortions: p.distortions.clone(),
            seed: p.seed,
            caption: caption_for(p.forgery_type, &s.final_mask)?,
            granularity: p.granularity,
        })
    };
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let entries = threads.install(|| planned.par_iter().map(make).collect::<Result<Vec<_>>>())?;
    let manifest = DatasetManifest::new(entries, out_dir);
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Regenerate one entry from its recorded seed, type, granularity and
/// distortions.
pub fn rebuild_entry(entry: &ManifestEntry, pool: &SourcePool, size: usize) -> Result<Sample> {
    synthesize(
        entry.seed,
        entry.forgery_type,
        entry.granularity.as_ref(),
        &entry.distortions,
        pool,
        size,
    )
}

/// Ids of entries whose files differ from a fresh rebuild.
pub fn verify_rebuild(
    manifest: &DatasetManifest,
    pool: &SourcePool,
    size: usize,
) -> Result<Vec<String>> {
    let mut mismatched = Vec::new();
    for e in &manifest.entries {
        let s = rebuild_entry(e, pool, size)?;
        let img = load_image(manifest.resolve(&e.image_path))?;
        let mask = load_mask(manifest.resolve(&e.mask_path))?;
        if img != s.image || mask != s.final_mask {
            mismatched.push(e.id.clone());
        }
    }
    Ok(mismatched)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_sampling_is_seeded() {
        let p = DistortionPolicy::training_default();
        let draws: Vec<_> = (0..200).map(|s| p.sample(s)).collect();
        assert_eq!(draws, (0..200).map(|s| p.sample(s)).collect::<Vec<_>>());
        let hit = draws.iter().filter(|d| !d.is_empty()).count();
        assert!((60..140).contains(&hit), "{hit}");
        assert!(DistortionPolicy::none().sample(3).is_empty());
    }

    #[test]
    fn every_type_synthesizes() {
        let g = MaskGranularity::presets()[2];
        for (i, t) in ForgeryType::FORGED.into_iter().enumerate() {
            let s = synthesize(i as u64, t, Some(&g), &[], &SourcePool::Procedural, 64).unwrap();
            assert_eq!(s.label, Label::Forged);
            assert!(s.mask.positives() > 0);
            for y in 0..64 {
                for x in 0..64 {
                    if !s.mask.get(x, y) {
                        assert_eq!(s.tampered.pixel(x, y), s.source.pixel(x, y));
                    }
                }
            }
        }
    }

    #[test]
    fn resize_distortion_resizes_mask() {
        let g = MaskGranularity::presets()[4];
        let d = [DistortionSpec::Resize { scale: 0.78 }];
        let s = synthesize(
            9,
            ForgeryType::Splicing,
            Some(&g),
            &d,
            &SourcePool::Procedural,
            64,
        )
        .unwrap();
        assert_eq!((s.image.width(), s.final_mask.width()), (50, 50));
    }

    #[test]
    fn empty_image_pool_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            SourcePool::from_dir(dir.path(), 64),
            Err(Error::Config(_))
        ));
        let req = DatasetRequest::new(1, 1, 0);
        assert!(matches!(
            build_dataset(&req, &SourcePool::Images(vec![]), dir.path(), 1),
            Err(Error::Config(_))
        ));
    }
}

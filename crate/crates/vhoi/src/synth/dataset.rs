//! Dataset export/import: a manifest JSON plus per-scene directories with
//! PNG sequences, tracks.json, contact.json, prompts.json and spec.json.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raster::{rasterize, SceneSample};
use super::{generate_scene_with_dims, Difficulty, SceneSpec};
use crate::hoi::palette::build_palette;
use crate::hoi::tracks::sample_track_points;
use crate::hoi::video::{MaskVideo, TrajectorySet};
use crate::synth::prompts::detokenize;
use crate::{Error, Result};

/// How scene difficulties are assigned across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyMix {
    /// Alternate reach / navigate_then_interact by layout seed (default).
    Mix,
    Reach,
    Navigate,
    Static,
}

impl DifficultyMix {
    pub fn difficulty_for(self, seed: u64) -> Difficulty {
        match self {
            DifficultyMix::Mix => {
                if (seed >> 1) % 2 == 0 {
                    Difficulty::Reach
                } else {
                    Difficulty::NavigateThenInteract
                }
            }
            DifficultyMix::Reach => Difficulty::Reach,
            DifficultyMix::Navigate => Difficulty::NavigateThenInteract,
            DifficultyMix::Static => Difficulty::Static,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dir: String,
    pub seed: u64,
    pub difficulty: Difficulty,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub base_seed: u64,
    pub samples: Vec<ManifestEntry>,
}

/// Generates `n` scenes starting at `base_seed` and writes the on-disk
/// dataset layout. Returns the manifest.
pub fn generate_dataset(
    root: &Path,
    n: usize,
    base_seed: u64,
    t: usize,
    h: usize,
    w: usize,
    mix: DifficultyMix,
) -> Result<DatasetManifest> {
    let pal = build_palette();
    std::fs::create_dir_all(root)?;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let seed = base_seed + i as u64;
        let difficulty = mix.difficulty_for(seed);
        let spec = generate_scene_with_dims(seed, difficulty, t, h, w);
        let sample = rasterize(&spec, t, h, w, &pal)?;
        let dir_name = format!("scene_{i:05}");
        let dir = root.join(&dir_name);
        write_scene(&dir, &sample)?;
        samples.push(ManifestEntry { dir: dir_name, seed, difficulty });
    }
    let manifest = DatasetManifest { t, h, w, base_seed, samples };
    std::fs::write(
        root.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn write_scene(dir: &Path, sample: &SceneSample) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    MaskVideo { data: sample.rgb.clone() }.save_png_dir(&dir.join("rgb"))?;
    sample.human_masks.save_png_dir(&dir.join("human_masks"))?;
    sample.object_masks.save_png_dir(&dir.join("object_masks"))?;
    sample.hoi_masks.save_png_dir(&dir.join("hoi_masks"))?;

    // one reference trajectory set per scene, seeded by the scene seed
    let mut rng = ChaCha8Rng::seed_from_u64(sample.spec.seed.wrapping_mul(0x9E37_79B9).wrapping_add(17));
    use rand::Rng;
    let k_h = rng.random_range(1..=8usize);
    let k_o = rng.random_range(1..=8usize);
    let tracks = sample_track_points(sample, k_h, k_o, &mut rng)?;
    tracks.save(&dir.join("tracks.json"))?;

    std::fs::write(dir.join("contact.json"), serde_json::to_string(&sample.contact)?)?;
    let prompts = serde_json::json!({
        "motion_only": detokenize(&sample.motion_tokens),
        "full": detokenize(&sample.full_tokens),
    });
    std::fs::write(dir.join("prompts.json"), serde_json::to_string_pretty(&prompts)?)?;
    std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&sample.spec)?)?;
    Ok(())
}

/// A loaded dataset: regenerated samples plus the per-scene reference
/// trajectories from disk.
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<SceneSample>,
    pub tracks: Vec<TrajectorySet>,
    pub root: PathBuf,
}

/// Loads a dataset by regenerating every scene from its recorded seed
/// (generation is deterministic and cheap) and reading the stored
/// reference tracks.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let manifest_path = root.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::Data(format!("no manifest.json under {}", root.display())));
    }
    let manifest: DatasetManifest =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    if manifest.samples.is_empty() {
        return Err(Error::Data("dataset manifest lists no samples".into()));
    }
    let pal = build_palette();
    let mut samples = Vec::with_capacity(manifest.samples.len());
    let mut tracks = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let spec_path = root.join(&entry.dir).join("spec.json");
        let spec: SceneSpec = serde_json::from_str(&std::fs::read_to_string(&spec_path)?)?;
        let sample = rasterize(&spec, manifest.t, manifest.h, manifest.w, &pal)?;
        let tr = TrajectorySet::load(&root.join(&entry.dir).join("tracks.json"))?;
        samples.push(sample);
        tracks.push(tr);
    }
    Ok(Dataset { manifest, samples, tracks, root: root.to_path_buf() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip_regenerates_identical_masks() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 2, 0, 8, 32, 32, DifficultyMix::Mix).unwrap();
        assert_eq!(manifest.samples.len(), 2);
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.samples.len(), 2);
        // stored PNGs equal the regenerated masks
        let stored = MaskVideo::load_png_dir(&dir.path().join("scene_00000/hoi_masks")).unwrap();
        assert_eq!(stored, ds.samples[0].hoi_masks);
        let stored_rgb = MaskVideo::load_png_dir(&dir.path().join("scene_00000/rgb")).unwrap();
        assert_eq!(stored_rgb.data, ds.samples[0].rgb);
        // contact json round-trips
        let contact: Vec<bool> = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("scene_00000/contact.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(contact, ds.samples[0].contact);
        ds.tracks[0].validate().unwrap();
    }

    #[test]
    fn loading_missing_dataset_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }
}

//! Dataset manifest: a JSON file naming the images of a run plus optional
//! per-image ground truth (target class, bounding box, gaze fixations).
//!
//! All pixel coordinates in the manifest refer to the stored image at its
//! declared size; commands rescale them alongside the image when the
//! predictor wants a different resolution.

use std::path::{Path, PathBuf};

use fovex::imaging::Rect;
use fovex::{Error, Result};
use serde::{Deserialize, Serialize};

/// Height/width/channels every stored image in the manifest must match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSize {
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
}

fn default_channels() -> usize {
    3
}

/// One dataset image with optional evaluation ground truth. `gaze_fixations`
/// holds `[x, y]` pixel pairs in stored-image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze_fixations: Option<Vec<[usize; 2]>>,
}

/// The manifest as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Directory image paths resolve against, itself relative to the
    /// manifest's directory when not absolute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    pub input_size: InputSize,
    pub entries: Vec<ManifestEntry>,
}

/// An entry with its path resolved and a stable output label attached.
#[derive(Debug, Clone)]
pub struct ResolvedEntry {
    pub index: usize,
    pub path: PathBuf,
    /// `<index>_<stem>`, unique per entry and safe as a file-name prefix.
    pub label: String,
    pub target_class: Option<usize>,
    pub bbox: Option<Rect>,
    pub gaze_fixations: Option<Vec<[usize; 2]>>,
}

/// A validated manifest ready for a run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub input_size: InputSize,
    pub entries: Vec<ResolvedEntry>,
}

impl Dataset {
    /// Parses and validates a manifest file. Every failure here is a usage
    /// error: paths must resolve, boxes and gaze points must sit inside the
    /// declared size, and at least one entry must be present.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| {
            Error::invalid(format!("cannot read manifest {}: {e}", manifest_path.display()))
        })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
            Error::invalid(format!("manifest {} is not valid JSON: {e}", manifest_path.display()))
        })?;
        let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let root = match &manifest.root {
            Some(r) if r.is_absolute() => r.clone(),
            Some(r) => base.join(r),
            None => base,
        };
        Self::resolve(&manifest, &root)
    }

    fn resolve(manifest: &Manifest, root: &Path) -> Result<Self> {
        let size = manifest.input_size;
        if size.height == 0 || size.width == 0 {
            return Err(Error::invalid("input_size must have positive height and width"));
        }
        if size.channels != 1 && size.channels != 3 {
            return Err(Error::invalid("input_size.channels must be 1 or 3"));
        }
        if manifest.entries.is_empty() {
            return Err(Error::invalid("manifest has no entries"));
        }
        let mut entries = Vec::with_capacity(manifest.entries.len());
        for (index, entry) in manifest.entries.iter().enumerate() {
            let path = if entry.image_path.is_absolute() {
                entry.image_path.clone()
            } else {
                root.join(&entry.image_path)
            };
            if !path.is_file() {
                return Err(Error::invalid(format!(
                    "entry {index}: image {} does not exist",
                    path.display()
                )));
            }
            if let Some(b) = &entry.bbox {
                if b.w == 0 || b.h == 0 {
                    return Err(Error::invalid(format!("entry {index}: bbox has zero area")));
                }
                if b.x + b.w > size.width || b.y + b.h > size.height {
                    return Err(Error::invalid(format!(
                        "entry {index}: bbox exceeds the declared {}x{} size",
                        size.width, size.height
                    )));
                }
            }
            if let Some(points) = &entry.gaze_fixations {
                if points.is_empty() {
                    return Err(Error::invalid(format!(
                        "entry {index}: gaze_fixations is empty; omit the field instead"
                    )));
                }
                for p in points {
                    if p[0] >= size.width || p[1] >= size.height {
                        return Err(Error::invalid(format!(
                            "entry {index}: gaze fixation ({}, {}) outside the declared {}x{} size",
                            p[0], p[1], size.width, size.height
                        )));
                    }
                }
            }
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".to_string());
            entries.push(ResolvedEntry {
                index,
                path,
                label: format!("{index:04}_{stem}"),
                target_class: entry.target_class,
                bbox: entry.bbox,
                gaze_fixations: entry.gaze_fixations.clone(),
            });
        }
        Ok(Dataset { input_size: size, entries })
    }
}

/// Maps a stored-image gaze point to the pixel grid of an `h×w` map.
pub fn rescale_gaze_point(
    point: [usize; 2],
    from: InputSize,
    h: usize,
    w: usize,
) -> (usize, usize) {
    let col = ((point[0] as f64 + 0.5) * w as f64 / from.width as f64) as usize;
    let row = ((point[1] as f64 + 0.5) * h as f64 / from.height as f64) as usize;
    (row.min(h - 1), col.min(w - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fovex::imaging::io::save_image;
    use fovex::imaging::Image;

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("manifest.json");
        std::fs::write(&path, body).unwrap();
        path
    }

    fn write_image(dir: &Path, name: &str, h: usize, w: usize) -> PathBuf {
        let path = dir.join(name);
        let image = Image::filled(h, w, 3, 0.5).unwrap();
        save_image(&path, &image).unwrap();
        path
    }

    #[test]
    fn loads_a_minimal_manifest_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        write_image(dir.path(), "a.png", 8, 8);
        let path = write_manifest(
            dir.path(),
            r#"{
                "input_size": {"height": 8, "width": 8},
                "entries": [{"image_path": "a.png"}]
            }"#,
        );
        let ds = Dataset::load(&path).unwrap();
        assert_eq!(ds.entries.len(), 1);
        assert_eq!(ds.input_size.channels, 3, "channels default to 3");
        assert!(ds.entries[0].path.is_file());
        assert_eq!(ds.entries[0].label, "0000_a");
    }

    #[test]
    fn root_is_resolved_relative_to_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("imgs")).unwrap();
        write_image(&dir.path().join("imgs"), "b.png", 8, 8);
        let path = write_manifest(
            dir.path(),
            r#"{
                "root": "imgs",
                "input_size": {"height": 8, "width": 8},
                "entries": [{"image_path": "b.png"}]
            }"#,
        );
        let ds = Dataset::load(&path).unwrap();
        assert!(ds.entries[0].path.ends_with("imgs/b.png"));
    }

    #[test]
    fn missing_image_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            r#"{
                "input_size": {"height": 8, "width": 8},
                "entries": [{"image_path": "nope.png"}]
            }"#,
        );
        let err = Dataset::load(&path).unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }

    #[test]
    fn bbox_and_gaze_must_fit_the_declared_size() {
        let dir = tempfile::tempdir().unwrap();
        write_image(dir.path(), "a.png", 8, 8);
        let oversized_box = write_manifest(
            dir.path(),
            r#"{
                "input_size": {"height": 8, "width": 8},
                "entries": [{"image_path": "a.png", "bbox": {"x": 4, "y": 0, "w": 5, "h": 2}}]
            }"#,
        );
        assert!(Dataset::load(&oversized_box).is_err());

        let stray_gaze = write_manifest(
            dir.path(),
            r#"{
                "input_size": {"height": 8, "width": 8},
                "entries": [{"image_path": "a.png", "gaze_fixations": [[8, 0]]}]
            }"#,
        );
        assert!(Dataset::load(&stray_gaze).is_err());
    }

    #[test]
    fn empty_entry_list_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            r#"{"input_size": {"height": 8, "width": 8}, "entries": []}"#,
        );
        assert!(Dataset::load(&path).is_err());
    }

    #[test]
    fn gaze_rescaling_maps_centers_and_clamps_corners() {
        let from = InputSize { height: 8, width: 8, channels: 3 };
        // Identity resolution: pixel (x=3, y=5) stays put as (row 5, col 3).
        assert_eq!(rescale_gaze_point([3, 5], from, 8, 8), (5, 3));
        // Upscale to 16: pixel centers land in the middle of the 2x2 block.
        assert_eq!(rescale_gaze_point([3, 5], from, 16, 16), (11, 7));
        // Downscale to 4: last pixel stays on the grid.
        assert_eq!(rescale_gaze_point([7, 7], from, 4, 4), (3, 3));
    }
}

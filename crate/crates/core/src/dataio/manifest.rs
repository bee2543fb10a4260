use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{fuse_mean, AnnotationSet};
use crate::nn::Sample;

use super::{read_json, read_pgm, read_raster, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One case. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub id: String,
    pub image: PathBuf,
    pub annotations: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub cases: Vec<CaseEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        if m.cases.is_empty() {
            return Err(Error::format(path, "manifest lists no cases"));
        }
        for c in &m.cases {
            if c.annotations.is_empty() {
                return Err(Error::format(path, format!("case {} has no annotations", c.id)));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// A fully loaded case.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub id: String,
    pub image: Image,
    pub annotations: AnnotationSet,
    pub split: Option<Split>,
}

impl Case {
    pub fn to_sample(&self) -> Sample {
        Sample { id: self.id.clone(), image: self.image.clone(), label: fuse_mean(&self.annotations) }
    }
}

/// Load and validate one case: all annotations must match the image's size.
pub fn load_case(root: &Path, entry: &CaseEntry) -> Result<Case> {
    let in_case = |e: Error| match e {
        Error::ShapeMismatch(m) => Error::ShapeMismatch(format!("case {}: {m}", entry.id)),
        Error::Io { path, source } => {
            Error::Io { path: format!("case {} image: {}", entry.id, path.display()).into(), source }
        }
        other => other,
    };
    let image = read_raster(&root.join(&entry.image)).and_then(|r| r.to_image()).map_err(in_case)?;
    let mut masks = Vec::with_capacity(entry.annotations.len());
    for (k, rel) in entry.annotations.iter().enumerate() {
        let path = root.join(rel);
        let m = read_pgm(&path).map_err(|e| match e {
            Error::Io { path, source } => Error::Io { path: format!("case {} annotation {k}: {}", entry.id, path.display()).into(), source },
            other => other,
        })?;
        if m.shape() != image.shape() {
            return Err(Error::ShapeMismatch(format!(
                "case {}: annotation {k} ({}) is {}x{}, image is {}x{}",
                entry.id,
                path.display(),
                m.width(),
                m.height(),
                image.width(),
                image.height()
            )));
        }
        masks.push(m);
    }
    Ok(Case { id: entry.id.clone(), image, annotations: AnnotationSet::new(masks).map_err(in_case)?, split: entry.split })
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub cases: Vec<Case>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Case> {
        self.cases.iter().filter(move |c| c.split == Some(split))
    }

    /// Training cases: those tagged `train`, or every untagged case.
    pub fn train_cases(&self) -> Vec<&Case> {
        self.cases.iter().filter(|c| c.split != Some(Split::Val)).collect()
    }

    pub fn val_cases(&self) -> Vec<&Case> {
        self.split(Split::Val).collect()
    }
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::load(manifest_path)?;
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let cases = manifest.cases.iter().map(|e| load_case(&root, e)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { root, manifest, cases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{write_pgm, write_raster, RasterFile};
    use crate::mask::BinaryMask;

    fn fixture(dir: &Path, ann_w: usize) -> PathBuf {
        let img = Image::zeros(4, 4, 1).unwrap();
        write_raster(&dir.join("img.sseg"), &RasterFile::from_image(&img)).unwrap();
        write_pgm(&dir.join("a0.pgm"), &BinaryMask::ones(4, 4).unwrap()).unwrap();
        write_pgm(&dir.join("a1.pgm"), &BinaryMask::zeros(ann_w, 4).unwrap()).unwrap();
        let m = Manifest {
            version: 1,
            seed: None,
            cases: vec![CaseEntry {
                id: "c0".into(),
                image: "img.sseg".into(),
                annotations: vec!["a0.pgm".into(), "a1.pgm".into()],
                split: Some(Split::Val),
            }],
        };
        let p = dir.join("manifest.json");
        m.save(&p).unwrap();
        p
    }

    #[test]
    fn loads_and_fuses() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_dataset(&fixture(dir.path(), 4)).unwrap();
        assert_eq!(ds.cases.len(), 1);
        assert_eq!(ds.val_cases().len(), 1);
        assert!(ds.train_cases().is_empty());
        assert!(ds.cases[0].to_sample().label.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn rejects_mismatched_annotation() {
        let dir = tempfile::tempdir().unwrap();
        let msg = load_dataset(&fixture(dir.path(), 3)).unwrap_err().to_string();
        assert!(msg.contains("case c0") && msg.contains("annotation 1"), "{msg}");
    }

    #[test]
    fn missing_annotation_names_case() {
        let dir = tempfile::tempdir().unwrap();
        let p = fixture(dir.path(), 4);
        std::fs::remove_file(dir.path().join("a1.pgm")).unwrap();
        let msg = load_dataset(&p).unwrap_err().to_string();
        assert!(msg.contains("case c0"), "{msg}");
    }
}

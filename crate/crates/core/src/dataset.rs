//! Benchmark manifests and directory conventions.
//!
//! A benchmark root holds `images/`, `gt/`, `depth/` (and `labels/` for
//! generated data) plus a `manifest` file. The manifest is line-oriented:
//! the first line is a JSON header `{"format":"obkit-benchmark","version":1,"name":...}`,
//! each following line one JSON sample record. Paths are relative to the
//! manifest's directory unless absolute.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::{self, io, BinaryMap};

pub const MANIFEST_FORMAT: &str = "obkit-benchmark";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<FileRef>,
    pub gt: FileRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<FileRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<FileRef>,
}

impl SampleEntry {
    pub fn files(&self) -> impl Iterator<Item = &FileRef> {
        [Some(&self.gt), self.rgb.as_ref(), self.depth.as_ref(), self.labels.as_ref()]
            .into_iter()
            .flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkManifest {
    pub name: String,
    pub samples: Vec<SampleEntry>,
}

impl BenchmarkManifest {
    pub fn to_text(&self) -> String {
        let header = Header {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            name: self.name.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::parse(path, "empty manifest"))?;
        let header: Header = serde_json::from_str(first)
            .map_err(|e| Error::parse(path, format!("line 1: {e}")))?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported manifest {} v{}", header.format, header.version),
            ));
        }
        let mut samples = Vec::new();
        let mut ids = HashSet::new();
        for (n, line) in lines {
            let entry: SampleEntry = serde_json::from_str(line)
                .map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?;
            if !ids.insert(entry.id.clone()) {
                return Err(Error::parse(path, format!("duplicate sample id {:?}", entry.id)));
            }
            samples.push(entry);
        }
        Ok(Self {
            name: header.name,
            samples,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

/// A ground-truth mask as loaded from a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedGt {
    pub map: BinaryMap,
    /// The stored mask had 2x2 blocks and was thinned on load.
    pub thinned: bool,
}

/// A validated benchmark whose rasters are loaded on demand.
#[derive(Debug, Clone)]
pub struct Benchmark {
    root: PathBuf,
    manifest: BenchmarkManifest,
}

/// Reads a manifest, verifying that every referenced file exists and
/// matches its checksum.
pub fn load_benchmark(manifest_path: &Path) -> Result<Benchmark> {
    let text = fs::read_to_string(manifest_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(manifest_path.to_path_buf()),
        _ => Error::io(manifest_path, e),
    })?;
    let manifest = BenchmarkManifest::parse(&text, manifest_path)?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let bench = Benchmark { root, manifest };
    for sample in &bench.manifest.samples {
        for file in sample.files() {
            let path = bench.resolve(&file.path);
            if !path.is_file() {
                return Err(Error::MissingFile(path));
            }
            if sha256_file(&path)? != file.sha256 {
                return Err(Error::ChecksumMismatch(path));
            }
        }
    }
    Ok(bench)
}

impl Benchmark {
    pub fn manifest(&self) -> &BenchmarkManifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn sample(&self, index: usize) -> &SampleEntry {
        &self.manifest.samples[index]
    }

    pub fn resolve(&self, stored: &str) -> PathBuf {
        let p = Path::new(stored);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Loads a GT mask; masks with 2x2 blocks are thinned with a warning.
    pub fn load_gt(&self, index: usize) -> Result<LoadedGt> {
        let path = self.resolve(&self.sample(index).gt.path);
        load_gt_mask(&path)
    }

    pub fn load_rgb(&self, index: usize) -> Result<Option<RgbImage>> {
        self.sample(index)
            .rgb
            .as_ref()
            .map(|f| io::read_rgb(&self.resolve(&f.path)))
            .transpose()
    }

    pub fn load_depth(&self, index: usize) -> Result<Option<io::FloatRaster>> {
        self.sample(index)
            .depth
            .as_ref()
            .map(|f| io::read_float_raster(&self.resolve(&f.path)))
            .transpose()
    }
}

/// Reads a {0,255} mask, thinning it when it is not already thin.
pub fn load_gt_mask(path: &Path) -> Result<LoadedGt> {
    let map = io::read_mask(path)?;
    if raster::is_thin(&map) {
        return Ok(LoadedGt {
            map,
            thinned: false,
        });
    }
    log::warn!("{}: ground truth is not thin; thinning on load", path.display());
    Ok(LoadedGt {
        map: raster::morph_thin(&map),
        thinned: true,
    })
}

/// Result of pairing an image directory with a mask directory.
#[derive(Debug, Clone)]
pub struct ImportReport {
    pub manifest: BenchmarkManifest,
    /// Files present in only one of the two directories.
    pub unmatched: Vec<PathBuf>,
}

fn files_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

fn stored_path(path: &Path, base: &Path) -> String {
    let shown = path.strip_prefix(base).unwrap_or(path);
    shown
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Pairs images and masks by file stem and writes a manifest to `out_manifest`.
pub fn import_pairs(images: &Path, masks: &Path, out_manifest: &Path) -> Result<ImportReport> {
    let image_files = files_by_stem(images)?;
    let mask_files = files_by_stem(masks)?;
    let base = out_manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let base_abs = fs::canonicalize(base).map_err(|e| Error::io(base, e))?;

    let mut unmatched = Vec::new();
    let mut samples = Vec::new();
    for (stem, image) in &image_files {
        let Some(mask) = mask_files.get(stem) else {
            log::warn!("{}: no matching mask", image.display());
            unmatched.push(image.clone());
            continue;
        };
        let file_ref = |p: &Path| -> Result<FileRef> {
            let abs = fs::canonicalize(p).map_err(|e| Error::io(p, e))?;
            Ok(FileRef {
                path: stored_path(&abs, &base_abs),
                sha256: sha256_file(&abs)?,
            })
        };
        samples.push(SampleEntry {
            id: stem.clone(),
            rgb: Some(file_ref(image)?),
            gt: file_ref(mask)?,
            depth: None,
            labels: None,
        });
    }
    for (stem, mask) in &mask_files {
        if !image_files.contains_key(stem) {
            log::warn!("{}: no matching image", mask.display());
            unmatched.push(mask.clone());
        }
    }
    if samples.is_empty() {
        return Err(Error::NoPairs);
    }
    let name = base_abs
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "benchmark".into());
    let manifest = BenchmarkManifest { name, samples };
    manifest.write(out_manifest)?;
    Ok(ImportReport {
        manifest,
        unmatched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Pixel;

    fn write_pair(dir: &Path, stem: &str, thick: bool) {
        fs::create_dir_all(dir.join("images")).unwrap();
        fs::create_dir_all(dir.join("gt")).unwrap();
        let rgb = RgbImage::from_pixel(8, 8, image::Rgb([10, 20, 30]));
        rgb.save(dir.join("images").join(format!("{stem}.png"))).unwrap();
        let mut gt = BinaryMap::from_pixels(8, 8, (1..7).map(|x| Pixel::new(x, 3)));
        if thick {
            gt.set(1, 4, true);
            gt.set(2, 4, true);
        }
        io::write_mask(&dir.join("gt").join(format!("{stem}.png")), &gt).unwrap();
    }

    #[test]
    fn import_then_load() {
        let dir = tempfile::tempdir().unwrap();
        for stem in ["a", "b", "c"] {
            write_pair(dir.path(), stem, false);
        }
        let manifest_path = dir.path().join(MANIFEST_FILE);
        let report = import_pairs(&dir.path().join("images"), &dir.path().join("gt"), &manifest_path).unwrap();
        assert_eq!(report.manifest.samples.len(), 3);
        assert!(report.unmatched.is_empty());
        assert_eq!(report.manifest.samples[0].gt.path, "gt/a.png");
        let bench = load_benchmark(&manifest_path).unwrap();
        assert_eq!(bench.len(), 3);
        let gt = bench.load_gt(1).unwrap();
        assert!(!gt.thinned);
        assert_eq!(gt.map.count_ones(), 6);
        assert!(bench.load_rgb(0).unwrap().is_some());
    }

    #[test]
    fn import_reports_unmatched() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "a", false);
        RgbImage::new(8, 8).save(dir.path().join("images/lonely.png")).unwrap();
        let report = import_pairs(
            &dir.path().join("images"),
            &dir.path().join("gt"),
            &dir.path().join(MANIFEST_FILE),
        )
        .unwrap();
        assert_eq!(report.manifest.samples.len(), 1);
        assert_eq!(report.unmatched.len(), 1);
    }

    #[test]
    fn import_empty_is_no_pairs() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("images")).unwrap();
        fs::create_dir_all(dir.path().join("gt")).unwrap();
        let err = import_pairs(&dir.path().join("images"), &dir.path().join("gt"), &dir.path().join("m"));
        assert!(matches!(err, Err(Error::NoPairs)));
    }

    #[test]
    fn missing_file_and_checksum_detected() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "a", false);
        write_pair(dir.path(), "b", false);
        let manifest_path = dir.path().join(MANIFEST_FILE);
        import_pairs(&dir.path().join("images"), &dir.path().join("gt"), &manifest_path).unwrap();

        fs::write(dir.path().join("gt/b.png"), b"tampered").unwrap();
        assert!(matches!(load_benchmark(&manifest_path), Err(Error::ChecksumMismatch(_))));

        fs::remove_file(dir.path().join("gt/b.png")).unwrap();
        match load_benchmark(&manifest_path) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("gt/b.png")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn thick_gt_thinned_on_load() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "a", true);
        let manifest_path = dir.path().join(MANIFEST_FILE);
        import_pairs(&dir.path().join("images"), &dir.path().join("gt"), &manifest_path).unwrap();
        let gt = load_benchmark(&manifest_path).unwrap().load_gt(0).unwrap();
        assert!(gt.thinned);
        assert!(raster::is_thin(&gt.map));
    }

    #[test]
    fn parse_rejects_duplicates_and_bad_header() {
        let p = Path::new("m");
        let header = r#"{"format":"obkit-benchmark","version":1,"name":"x"}"#;
        let sample = r#"{"id":"a","gt":{"path":"gt/a.png","sha256":"00"}}"#;
        assert!(BenchmarkManifest::parse(&format!("{header}\n{sample}\n{sample}\n"), p).is_err());
        assert!(BenchmarkManifest::parse(r#"{"format":"other","version":1,"name":"x"}"#, p).is_err());
        let m = BenchmarkManifest::parse(&format!("{header}\n{sample}\n"), p).unwrap();
        assert_eq!(m.to_text(), format!("{header}\n{sample}\n"));
    }
}

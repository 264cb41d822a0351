use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use super::ObMap;
use crate::dataset::{sha256_bytes, BenchmarkManifest, FileRef, SampleEntry, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::geometry::GBuffer;
use crate::raster::io;

/// Colour image accompanying a generated sample.
#[derive(Debug, Clone)]
pub enum SampleRgb {
    /// Copied verbatim into `images/`.
    File(PathBuf),
    /// Encoded as PNG into `images/`.
    Image(RgbImage),
}

#[derive(Debug, Clone)]
pub struct BenchmarkSample {
    pub id: String,
    pub rgb: Option<SampleRgb>,
    pub ob: ObMap,
    pub gbuffer: GBuffer,
}

fn write_file(out_dir: &Path, rel: &str, bytes: &[u8]) -> Result<FileRef> {
    let path = out_dir.join(rel);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(FileRef {
        path: rel.to_string(),
        sha256: sha256_bytes(bytes),
    })
}

fn unique_id(id: &str, used: &mut HashSet<String>) -> String {
    let mut candidate = id.to_string();
    let mut n = 0;
    while used.contains(&candidate) {
        n += 1;
        candidate = format!("{id}_{n}");
    }
    used.insert(candidate.clone());
    candidate
}

/// Writes masks, label images, depth rasters and a manifest under `out_dir`.
/// Duplicate ids get `_1`, `_2`, ... suffixes in input order.
pub fn export_benchmark(samples: &[BenchmarkSample], out_dir: &Path) -> Result<BenchmarkManifest> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for sub in ["images", "gt", "labels", "depth"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut used = HashSet::new();
    let mut entries = Vec::with_capacity(samples.len());
    for sample in samples {
        let id = unique_id(&sample.id, &mut used);
        let rgb = match &sample.rgb {
            None => None,
            Some(SampleRgb::File(src)) => {
                let bytes = fs::read(src).map_err(|e| Error::io(src, e))?;
                let ext = src.extension().and_then(|e| e.to_str()).unwrap_or("png");
                Some(write_file(out_dir, &format!("images/{id}.{ext}"), &bytes)?)
            }
            Some(SampleRgb::Image(img)) => {
                let mut bytes = Vec::new();
                img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
                    .map_err(|e| Error::Image {
                        path: out_dir.join(format!("images/{id}.png")),
                        message: e.to_string(),
                    })?;
                Some(write_file(out_dir, &format!("images/{id}.png"), &bytes)?)
            }
        };
        let gt = write_file(
            out_dir,
            &format!("gt/{id}.png"),
            &io::encode_mask_png(sample.ob.boundary()),
        )?;
        let labels = write_file(
            out_dir,
            &format!("labels/{id}.png"),
            &io::encode_png(&sample.ob.label_image()),
        )?;
        let depth = write_file(
            out_dir,
            &format!("depth/{id}.obfmap"),
            &io::encode_float_raster(
                sample.gbuffer.width(),
                sample.gbuffer.height(),
                &sample.gbuffer.depth_values(),
            ),
        )?;
        entries.push(SampleEntry {
            id,
            rgb,
            gt,
            depth: Some(depth),
            labels: Some(labels),
        });
    }
    let name = out_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "benchmark".into());
    let manifest = BenchmarkManifest {
        name,
        samples: entries,
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

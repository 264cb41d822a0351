//! On-disk session state. Each session is one directory:
//!
//! ```text
//! <root>/<id>/session.json        metadata, including the committed round count
//! <root>/<id>/rgb.png
//! <root>/<id>/initial.obfmap      post-processed initial prediction
//! <root>/<id>/rounds/0001/        scribbles.json, fn.png, fp.png, output.obfmap
//! ```
//!
//! A round directory is written under a temporary name and renamed into
//! place before `session.json` is rewritten, so a crash never exposes a
//! partial round.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::RgbImage;
use obkit_core::interaction::{boundary_mask, FnFpMap, ScribbleDocument};
use obkit_core::raster::{io, BinaryMap, ProbabilityMap, ThresholdConfig};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub predictor: String,
    /// File stem of the uploaded image; predictors that look up per-image
    /// data use it as the sample id.
    pub source: String,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub threshold: ThresholdConfig,
    pub rounds: usize,
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> ApiError {
    ApiError::internal(format!("{}: {e}", path.display()))
}

fn core_err(e: obkit_core::Error) -> ApiError {
    ApiError::internal(e.to_string())
}

/// Writes `bytes` next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ApiError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn round_name(n: usize) -> String {
    format!("{n:04}")
}

/// One committed round as stored on disk.
#[derive(Debug, Clone)]
pub struct StoredRound {
    pub scribbles: ScribbleDocument,
    pub fnfp: FnFpMap,
    pub output: ProbabilityMap,
}

impl SessionStore {
    pub fn open(root: PathBuf) -> Result<Self, ApiError> {
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let store = Self { root };
        store.recover()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    /// Removes leftovers of interrupted writes: temporary files, round
    /// directories past the committed count and sessions without metadata.
    pub fn recover(&self) -> Result<(), ApiError> {
        let entries = fs::read_dir(&self.root).map_err(|e| io_err(&self.root, e))?;
        for entry in entries.flatten() {
            let dir = entry.path();
            if !dir.is_dir() {
                continue;
            }
            let Some(id) = dir.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
                continue;
            };
            let meta = match self.load_meta(&id) {
                Ok(m) => m,
                Err(_) => {
                    log::warn!("removing incomplete session {}", dir.display());
                    fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                    continue;
                }
            };
            let rounds = dir.join("rounds");
            if let Ok(list) = fs::read_dir(&rounds) {
                for r in list.flatten() {
                    let name = r.file_name().to_string_lossy().into_owned();
                    let committed = name.parse::<usize>().is_ok_and(|n| n >= 1 && n <= meta.rounds);
                    if !committed {
                        log::warn!("session {id}: discarding uncommitted round {name}");
                        let p = r.path();
                        fs::remove_dir_all(&p).map_err(|e| io_err(&p, e))?;
                    }
                }
            }
            for f in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?.flatten() {
                let p = f.path();
                if p.extension().is_some_and(|e| e == "tmp") {
                    fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
                }
            }
        }
        Ok(())
    }

    pub fn exists(&self, id: &str) -> bool {
        self.dir(id).join("session.json").is_file()
    }

    pub fn create(&self, meta: &SessionMeta, rgb: &RgbImage, initial: &ProbabilityMap) -> Result<(), ApiError> {
        let dir = self.dir(&meta.id);
        fs::create_dir_all(dir.join("rounds")).map_err(|e| io_err(&dir, e))?;
        write_atomic(&dir.join("rgb.png"), &io::encode_rgb_png(rgb))?;
        write_atomic(&dir.join("initial.obfmap"), &io::encode_obfmap(initial))?;
        self.write_meta(meta)
    }

    fn write_meta(&self, meta: &SessionMeta) -> Result<(), ApiError> {
        let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
        write_atomic(&self.dir(&meta.id).join("session.json"), text.as_bytes())
    }

    pub fn load_meta(&self, id: &str) -> Result<SessionMeta, ApiError> {
        let path = self.dir(id).join("session.json");
        let text = fs::read_to_string(&path).map_err(|_| ApiError::not_found(format!("unknown session {id}")))?;
        serde_json::from_str(&text).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
    }

    pub fn load_rgb(&self, id: &str) -> Result<RgbImage, ApiError> {
        io::read_rgb(&self.dir(id).join("rgb.png")).map_err(core_err)
    }

    pub fn load_initial(&self, id: &str) -> Result<ProbabilityMap, ApiError> {
        io::read_obfmap(&self.dir(id).join("initial.obfmap")).map_err(core_err)
    }

    /// Latest committed output (the initial prediction before any round).
    pub fn load_current(&self, meta: &SessionMeta) -> Result<ProbabilityMap, ApiError> {
        if meta.rounds == 0 {
            self.load_initial(&meta.id)
        } else {
            let path = self.dir(&meta.id).join("rounds").join(round_name(meta.rounds)).join("output.obfmap");
            io::read_obfmap(&path).map_err(core_err)
        }
    }

    pub fn load_round(&self, id: &str, n: usize) -> Result<StoredRound, ApiError> {
        let dir = self.dir(id).join("rounds").join(round_name(n));
        let doc_path = dir.join("scribbles.json");
        let text = fs::read_to_string(&doc_path).map_err(|e| io_err(&doc_path, e))?;
        let scribbles = ScribbleDocument::parse(&text).map_err(ApiError::internal)?;
        let fn_channel = io::read_mask(&dir.join("fn.png")).map_err(core_err)?;
        let fp_channel = io::read_mask(&dir.join("fp.png")).map_err(core_err)?;
        Ok(StoredRound {
            scribbles,
            fnfp: FnFpMap::new(fn_channel, fp_channel).map_err(core_err)?,
            output: io::read_obfmap(&dir.join("output.obfmap")).map_err(core_err)?,
        })
    }

    /// Writes round `meta.rounds + 1` and commits it.
    pub fn append_round(
        &self,
        meta: &mut SessionMeta,
        scribbles: &ScribbleDocument,
        fnfp: &FnFpMap,
        output: &ProbabilityMap,
    ) -> Result<(), ApiError> {
        let n = meta.rounds + 1;
        let rounds = self.dir(&meta.id).join("rounds");
        let staging = rounds.join(format!("{}.tmp", round_name(n)));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
        let files: [(&str, Vec<u8>); 4] = [
            ("scribbles.json", scribbles.to_json().into_bytes()),
            ("fn.png", io::encode_mask_png(&fnfp.fn_channel)),
            ("fp.png", io::encode_mask_png(&fnfp.fp_channel)),
            ("output.obfmap", io::encode_obfmap(output)),
        ];
        for (name, bytes) in files {
            write_atomic(&staging.join(name), &bytes)?;
        }
        let target = rounds.join(round_name(n));
        if target.exists() {
            fs::remove_dir_all(&target).map_err(|e| io_err(&target, e))?;
        }
        fs::rename(&staging, &target).map_err(|e| io_err(&target, e))?;
        meta.rounds = n;
        self.write_meta(meta)
    }

    /// Thin binary OB of the latest output.
    pub fn current_ob(&self, meta: &SessionMeta) -> Result<BinaryMap, ApiError> {
        Ok(boundary_mask(&self.load_current(meta)?, &meta.threshold))
    }
}

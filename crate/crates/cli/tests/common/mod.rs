#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use obkit_core::geometry::SceneMesh;
use obkit_core::obgen::{export_benchmark, generate_ob, BenchmarkSample, GenConfig, SampleRgb};
use obkit_core::synthetic::{frontal_camera, random_boxes, shade};

pub fn obkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obkit"))
        .args(args)
        .env_remove("OBKIT_LOG")
        .output()
        .expect("obkit runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Writes `<dir>/<name>.scene` and its OBJ for a frontal camera.
pub fn write_scene(dir: &Path, name: &str, mesh: &SceneMesh, size: u32) -> PathBuf {
    fs::write(dir.join(format!("{name}.obj")), mesh.to_obj()).unwrap();
    let c = f64::from(size) / 2.0;
    let scene = format!(
        "mesh = \"{name}.obj\"\n\n[camera]\nfx = {size}.0\nfy = {size}.0\ncx = {c}\ncy = {c}\nwidth = {size}\nheight = {size}\n"
    );
    let path = dir.join(format!("{name}.scene"));
    fs::write(&path, scene).unwrap();
    path
}

/// Benchmark of random box scenes rendered in-process; returns the manifest.
pub fn box_benchmark(out: &Path, count: u64, size: u32, boxes: usize) -> obkit_core::dataset::BenchmarkManifest {
    let cam = frontal_camera(size, f64::from(size));
    let samples: Vec<BenchmarkSample> = (0..count)
        .map(|i| {
            let (ob, gbuffer) = generate_ob(&random_boxes(i, boxes), &cam, &GenConfig::default()).unwrap();
            BenchmarkSample {
                id: format!("scene{i:02}"),
                rgb: Some(SampleRgb::Image(shade(&gbuffer))),
                ob,
                gbuffer,
            }
        })
        .collect();
    export_benchmark(&samples, out).unwrap()
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

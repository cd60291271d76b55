//! Synthetic test corpus shared by the integration and acceptance suites.
//!
//! Scenes are procedural radiance fields drawn from one family regardless of
//! class, so nothing about the *content* separates the classes; only the
//! production pipeline differs. The mHDR arm renders each scene into a
//! bracketed exposure stack (with sensor noise) and merges it with the
//! `fuse` subcommand; the iHDR arm renders a single mid exposure and expands
//! it with one of the four `synth` operators. Both arms peak near the same
//! luminance (the scene scale matches the operators' default `l_max`), so
//! classifiers must key on provenance traces — quantization density, fusion
//! weighting, noise averaging — not on global brightness.

use std::path::{Path, PathBuf};
use std::process::Command;

use hdrsource::io::{encode_ppm, LdrImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scene peak radiance; matches the synth operators' default `l_max` so the
/// two classes overlap in absolute luminance.
const SCENE_PEAK: f64 = 1000.0;
const CAMERA_GAMMA: f64 = 2.2;
/// Sensor noise sigma in 8-bit code values.
const NOISE_SIGMA: f64 = 0.8;
/// Exposure times of the bracketed stack relative to the mid exposure.
const BRACKET: [f64; 3] = [0.25, 1.0, 4.0];

pub const OPERATORS: [&str; 4] = ["linear", "sigmoid", "expand_map", "dual_region"];

/// Size and seeding knobs for a generated corpus.
#[derive(Debug, Clone, Copy)]
pub struct CorpusSpec {
    pub scenes_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

/// Where a generated corpus landed.
pub struct Corpus {
    pub mhdr_dir: PathBuf,
    pub ihdr_dir: PathBuf,
}

/// One procedural radiance field: smooth gradient plus Gaussian blobs plus
/// fine texture, scaled to [0, ~1.3] x SCENE_PEAK per channel. Values above
/// SCENE_PEAK clip in every exposure, giving both arms saturated highlights
/// to work with.
struct Scene {
    width: usize,
    height: usize,
    /// Relative radiance per channel in scene units (rgb interleaved).
    radiance: Vec<f64>,
}

fn generate_scene(width: usize, height: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fw, fh) = (width as f64, height as f64);

    // Low-frequency illumination gradient.
    let fx: f64 = rng.gen_range(0.3..1.8);
    let fy: f64 = rng.gen_range(0.3..1.8);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);

    // A handful of bright blobs of varying sharpness.
    let blob_count = rng.gen_range(3..8);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..blob_count)
        .map(|_| {
            (
                rng.gen_range(0.0..fw),
                rng.gen_range(0.0..fh),
                rng.gen_range(0.05..0.25) * fw,
                rng.gen_range(0.3..1.1),
            )
        })
        .collect();

    // Per-channel tint, close enough to neutral that luminance stays
    // representative of all three channels.
    let tint = [
        rng.gen_range(0.75..1.25),
        rng.gen_range(0.75..1.25),
        rng.gen_range(0.75..1.25),
    ];

    let mut radiance = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            let grad = 0.5
                + 0.5
                    * (std::f64::consts::TAU * (fx * xf / fw + fy * yf / fh) + phase).sin();
            let mut v = 0.04 + 0.35 * grad;
            for &(cx, cy, sigma, amp) in &blobs {
                let d2 = (xf - cx).powi(2) + (yf - cy).powi(2);
                v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            // Fine scene texture, shared by every rendering of this scene.
            let texture = 1.0 + 0.06 * (rng.gen_range(-1.0..1.0f64));
            let v = (v * texture).max(0.0);
            for t in tint {
                radiance.push(SCENE_PEAK * v * t);
            }
        }
    }
    Scene {
        width,
        height,
        radiance,
    }
}

/// Standard normal via Box-Muller; good enough for sensor noise.
fn randn(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Renders the scene through a gamma camera at relative exposure `t` (1.0
/// maps SCENE_PEAK to white) with additive sensor noise.
fn render_exposure(scene: &Scene, t: f64, rng: &mut ChaCha8Rng) -> LdrImage {
    let data: Vec<u8> = scene
        .radiance
        .iter()
        .map(|&r| {
            let lin = (r * t / SCENE_PEAK).max(0.0);
            let v = 255.0 * lin.powf(1.0 / CAMERA_GAMMA);
            (v + NOISE_SIGMA * randn(rng)).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    LdrImage::new(scene.width, scene.height, data).expect("rendered image is well-formed")
}

fn write_ppm(path: &Path, img: &LdrImage) {
    std::fs::write(path, encode_ppm(img)).expect("write ppm");
}

/// Runs the CLI under test; panics with full output on unexpected failure.
pub fn run_cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_hdrsource"))
        .args(args)
        .output()
        .expect("spawn hdrsource");
    assert!(
        out.status.success(),
        "hdrsource {args:?} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Generates the corpus under `root` using the real `fuse` and `synth`
/// subcommands. iHDR scenes are spread round-robin over the four operators.
pub fn generate(root: &Path, spec: &CorpusSpec) -> Corpus {
    assert!(
        spec.scenes_per_class % OPERATORS.len() == 0,
        "scenes_per_class must divide evenly over the operators"
    );
    let stacks_dir = root.join("stacks");
    let mhdr_dir = root.join("mhdr");
    let ihdr_dir = root.join("ihdr");
    std::fs::create_dir_all(&stacks_dir).unwrap();

    // mHDR arm: bracketed stacks.
    let mut stack_lines = String::new();
    for i in 0..spec.scenes_per_class {
        let scene = generate_scene(spec.width, spec.height, spec.seed.wrapping_add(i as u64));
        let mut noise = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6d00_0000 ^ i as u64);
        let name = format!("m{i:03}");
        let mut line = name.clone();
        for (k, &t) in BRACKET.iter().enumerate() {
            let file = format!("{name}_e{k}.ppm");
            write_ppm(&stacks_dir.join(&file), &render_exposure(&scene, t, &mut noise));
            line.push_str(&format!("\t{t}:{file}"));
        }
        stack_lines.push_str(&line);
        stack_lines.push('\n');
    }
    let stacks_file = stacks_dir.join("stacks.tsv");
    std::fs::write(&stacks_file, stack_lines).unwrap();
    run_cli(&[
        "fuse",
        "--stacks",
        stacks_file.to_str().unwrap(),
        "--out",
        mhdr_dir.to_str().unwrap(),
    ]);

    // iHDR arm: one mid exposure per scene, expanded by one operator. Scene
    // seeds continue the same stream, so content statistics match the mHDR
    // arm.
    for (op_idx, op) in OPERATORS.iter().enumerate() {
        let ldr_dir = root.join(format!("ldr_{op}"));
        std::fs::create_dir_all(&ldr_dir).unwrap();
        for i in 0..spec.scenes_per_class {
            if i % OPERATORS.len() != op_idx {
                continue;
            }
            let scene_seed = spec
                .seed
                .wrapping_add((spec.scenes_per_class + i) as u64);
            let scene = generate_scene(spec.width, spec.height, scene_seed);
            let mut noise = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6900_0000 ^ i as u64);
            write_ppm(
                &ldr_dir.join(format!("i{i:03}.ppm")),
                &render_exposure(&scene, 1.0, &mut noise),
            );
        }
        run_cli(&[
            "synth",
            "--ldr-dir",
            ldr_dir.to_str().unwrap(),
            "--out",
            ihdr_dir.to_str().unwrap(),
            "--operator",
            op,
        ]);
    }

    Corpus { mhdr_dir, ihdr_dir }
}

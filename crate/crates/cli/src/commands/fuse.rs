//! `fuse`: merge bracketed LDR exposure stacks into true mHDR radiance maps.

use std::path::PathBuf;

use hdrsource::io::{encode_rgbe, read_ldr_file, LdrImage};
use hdrsource::pipeline::fuse_exposures;

use crate::config::{ConfigFile, Resolved};
use crate::exit::{data, CliError};
use crate::FuseArgs;

/// One line of the stacks file: `name<TAB>time:path<TAB>time:path...`.
struct StackSpec {
    name: String,
    frames: Vec<(f64, PathBuf)>,
}

fn parse_stacks(text: &str, base: &std::path::Path) -> Result<Vec<StackSpec>, CliError> {
    let mut specs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let name = parts
            .next()
            .filter(|n| !n.is_empty())
            .ok_or_else(|| data(format!("stacks line {}: missing name", lineno + 1)))?
            .to_string();
        let mut frames = Vec::new();
        for part in parts {
            let (time, path) = part.split_once(':').ok_or_else(|| {
                data(format!(
                    "stack {name}: frame {part:?} is not time:path"
                ))
            })?;
            let time: f64 = time
                .parse()
                .map_err(|_| data(format!("stack {name}: bad exposure time {time:?}")))?;
            frames.push((time, base.join(path)));
        }
        if frames.len() < 2 {
            return Err(data(format!(
                "stack {name}: needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        specs.push(StackSpec { name, frames });
    }
    if specs.is_empty() {
        return Err(data("stacks file lists no stacks".to_string()));
    }
    Ok(specs)
}

pub fn run(args: &FuseArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mut resolved = Resolved::default();
    let stacks_path: PathBuf = resolved.resolve_path("stacks", args.stacks.clone(), &file)?;
    let out_dir: PathBuf = resolved.resolve_path("out", args.out.clone(), &file)?;
    let gamma: f64 = resolved.resolve("gamma", args.gamma, &file, Some(2.2))?;
    file.finish()?;

    let text = std::fs::read_to_string(&stacks_path)
        .map_err(|e| data(format!("reading {}: {e}", stacks_path.display())))?;
    let base = stacks_path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let specs = parse_stacks(&text, &base)?;

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| data(format!("creating {}: {e}", out_dir.display())))?;

    let mut written = 0usize;
    for spec in &specs {
        let out_path = out_dir.join(format!("{}.hdr", spec.name));
        if out_path.exists() {
            return Err(data(format!(
                "collision: {} already exists",
                out_path.display()
            )));
        }
        let mut frames: Vec<LdrImage> = Vec::with_capacity(spec.frames.len());
        let mut times: Vec<f64> = Vec::with_capacity(spec.frames.len());
        for (time, path) in &spec.frames {
            let frame = read_ldr_file(path)
                .map_err(|e| data(format!("stack {}: {e}", spec.name)))?;
            frames.push(frame);
            times.push(*time);
        }
        let hdr = fuse_exposures::<f32>(&frames, &times, gamma)
            .map_err(|e| data(format!("stack {}: {e}", spec.name)))?;
        std::fs::write(&out_path, encode_rgbe(&hdr)?)
            .map_err(|e| data(format!("writing {}: {e}", out_path.display())))?;
        written += 1;
    }

    resolved.write(&out_dir)?;
    crate::config::log_run(&out_dir, "fuse", "ok");
    println!("fuse: {written} stack(s) -> {}", out_dir.display());
    Ok(())
}

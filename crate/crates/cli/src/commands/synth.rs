//! `synth`: expand a directory of LDR images into iHDR surrogates with one
//! inverse tone mapping operator.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hdrsource::io::{encode_rgbe, read_ldr_file};
use hdrsource::itmo::{apply, ItmoOperator, ItmoParams};

use crate::config::{ConfigFile, Resolved};
use crate::exit::{data, usage, CliError};
use crate::SynthArgs;

pub fn run(args: &SynthArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mut resolved = Resolved::default();
    let ldr_dir: PathBuf = resolved.resolve_path("ldr-dir", args.ldr_dir.clone(), &file)?;
    let out_dir: PathBuf = resolved.resolve_path("out", args.out.clone(), &file)?;
    let operator_name: String = resolved.resolve("operator", args.operator.clone(), &file, None)?;
    let operator = ItmoOperator::parse(&operator_name)
        .map_err(|e| usage(format!("--operator: {e}")))?;

    let mut params = ItmoParams::new(operator);
    params.gamma = resolved.resolve("gamma", args.gamma, &file, Some(params.gamma))?;
    params.l_max = resolved.resolve("l-max", args.l_max, &file, Some(params.l_max))?;
    params.highlight_threshold = resolved.resolve(
        "highlight-threshold",
        args.highlight_threshold,
        &file,
        Some(params.highlight_threshold),
    )?;
    params.boost = resolved.resolve("boost", args.boost, &file, Some(params.boost))?;
    params.sigma_s = resolved.resolve("sigma-s", args.sigma_s, &file, Some(params.sigma_s))?;
    file.finish()?;
    params.validate()?;

    let inputs = super::list_files(&ldr_dir, &["ppm"])?;
    if inputs.is_empty() {
        return Err(data(format!(
            "no .ppm inputs in {}",
            ldr_dir.display()
        )));
    }

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| data(format!("creating {}: {e}", out_dir.display())))?;

    // Existing tags are merged so several operators can fill one corpus
    // directory; output image collisions are errors.
    let tags_path = out_dir.join("tags.tsv");
    let mut tags: BTreeMap<String, String> = BTreeMap::new();
    if tags_path.exists() {
        let text = std::fs::read_to_string(&tags_path)
            .map_err(|e| data(format!("reading {}: {e}", tags_path.display())))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (name, tag) = line
                .split_once('\t')
                .ok_or_else(|| data(format!("malformed tag line {line:?}")))?;
            tags.insert(name.to_string(), tag.to_string());
        }
    }

    let mut written = 0usize;
    for input in &inputs {
        let stem = input
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| data(format!("unusable file name {}", input.display())))?;
        let out_name = format!("{stem}.hdr");
        let out_path = out_dir.join(&out_name);
        if out_path.exists() {
            return Err(data(format!(
                "collision: {} already exists",
                out_path.display()
            )));
        }
        let ldr = read_ldr_file(input)?;
        let hdr = apply::<f32>(&ldr, &params)?;
        std::fs::write(&out_path, encode_rgbe(&hdr)?)
            .map_err(|e| data(format!("writing {}: {e}", out_path.display())))?;
        tags.insert(out_name, operator.name().to_string());
        written += 1;
    }

    let mut tag_text = String::new();
    for (name, tag) in &tags {
        tag_text.push_str(&format!("{name}\t{tag}\n"));
    }
    std::fs::write(&tags_path, tag_text)
        .map_err(|e| data(format!("writing {}: {e}", tags_path.display())))?;

    resolved.write(&out_dir)?;
    crate::config::log_run(&out_dir, "synth", "ok");
    println!(
        "synth: {written} image(s) -> {} via {}",
        out_dir.display(),
        operator.name()
    );
    Ok(())
}

//! End-to-end tests of the `hdrsource` binary: exit codes, config layering,
//! artifact layout, determinism, and resume semantics.

#[path = "common/corpus.rs"]
mod corpus;

use std::path::Path;
use std::process::Command;

use corpus::{generate, run_cli, CorpusSpec};
use hdrsource::io::{encode_ppm, LdrImage};

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hdrsource"))
        .args(args)
        .output()
        .expect("spawn hdrsource")
}

fn stderr_of(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// A small flat-ish test image with enough variation to be encodable.
fn tiny_ppm(path: &Path, seed: u8) {
    let data: Vec<u8> = (0..4 * 4 * 3).map(|i| (i as u8).wrapping_mul(7).wrapping_add(seed)).collect();
    let img = LdrImage::new(4, 4, data).unwrap();
    std::fs::write(path, encode_ppm(&img)).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
    assert_eq!(cli(&["--version"]).status.code(), Some(0));
    assert_eq!(cli(&["train", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_problems_exit_one() {
    // No subcommand, unknown subcommand, unknown flag, missing parameter,
    // invalid enum value: all usage errors.
    assert_eq!(cli(&[]).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["train", "--bogus"]).status.code(), Some(1));
    let out = cli(&["synth"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("--ldr-dir"),
        "missing-parameter message should name the flag: {}",
        stderr_of(&out)
    );
    let tmp = tempfile::tempdir().unwrap();
    tiny_ppm(&tmp.path().join("a.ppm"), 1);
    let out = cli(&[
        "synth",
        "--ldr-dir",
        tmp.path().to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
        "--operator",
        "nonsense",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_problems_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    // Nonexistent input directory.
    let out = cli(&[
        "synth",
        "--ldr-dir",
        tmp.path().join("missing").to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
        "--operator",
        "linear",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // A malformed model file fails eval as data, not a crash.
    let model = tmp.path().join("junk.ckpt");
    std::fs::write(&model, b"not a checkpoint at all").unwrap();
    let data_dir = tmp.path().join("nodata");
    let out = cli(&[
        "eval",
        "--data",
        data_dir.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--split",
        "verify1",
        "--out",
        tmp.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_layering_and_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let ldr = tmp.path().join("ldr");
    std::fs::create_dir_all(&ldr).unwrap();
    tiny_ppm(&ldr.join("a.ppm"), 3);

    // Unknown key in the config file is a usage error.
    let bad = tmp.path().join("bad.conf");
    std::fs::write(&bad, "operator = linear\nbanana = 3\n").unwrap();
    let out = cli(&[
        "synth",
        "--config",
        bad.to_str().unwrap(),
        "--ldr-dir",
        ldr.to_str().unwrap(),
        "--out",
        tmp.path().join("o1").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("banana"), "{}", stderr_of(&out));

    //

    // File supplies the operator; the flag overrides it; the resolved config
    // records the winner.
    let conf = tmp.path().join("ok.conf");
    std::fs::write(&conf, "# comment\noperator = linear\ngamma = 2.0\n").unwrap();
    let out_dir = tmp.path().join("o2");
    run_cli(&[
        "synth",
        "--config",
        conf.to_str().unwrap(),
        "--ldr-dir",
        ldr.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--operator",
        "sigmoid",
    ]);
    let resolved = read(&out_dir.join("config.resolved"));
    assert!(resolved.contains("operator = sigmoid"), "{resolved}");
    assert!(resolved.contains("gamma = 2"), "{resolved}");
    let tags = read(&out_dir.join("tags.tsv"));
    assert_eq!(tags, "a.hdr\tsigmoid\n");
}

#[test]
fn synth_rejects_collisions_and_merges_tags() {
    let tmp = tempfile::tempdir().unwrap();
    let ldr_a = tmp.path().join("la");
    let ldr_b = tmp.path().join("lb");
    std::fs::create_dir_all(&ldr_a).unwrap();
    std::fs::create_dir_all(&ldr_b).unwrap();
    tiny_ppm(&ldr_a.join("one.ppm"), 5);
    tiny_ppm(&ldr_b.join("two.ppm"), 6);
    let out_dir = tmp.path().join("out");

    run_cli(&[
        "synth",
        "--ldr-dir",
        ldr_a.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--operator",
        "linear",
    ]);
    // Disjoint stems extend the corpus and the tag file.
    run_cli(&[
        "synth",
        "--ldr-dir",
        ldr_b.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--operator",
        "expand_map",
    ]);
    let tags = read(&out_dir.join("tags.tsv"));
    assert_eq!(tags, "one.hdr\tlinear\ntwo.hdr\texpand_map\n");

    // Re-synthesizing an existing stem is a collision (exit 2).
    let out = cli(&[
        "synth",
        "--ldr-dir",
        ldr_a.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--operator",
        "sigmoid",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("collision"), "{}", stderr_of(&out));
}

#[test]
fn fuse_reports_bad_stacks_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    tiny_ppm(&tmp.path().join("f0.ppm"), 9);
    // 8x8 frame mismatched against the 4x4 one.
    let big: Vec<u8> = (0..8 * 8 * 3).map(|i| (i % 251) as u8).collect();
    std::fs::write(
        tmp.path().join("f1.ppm"),
        encode_ppm(&LdrImage::new(8, 8, big).unwrap()),
    )
    .unwrap();
    let stacks = tmp.path().join("stacks.tsv");
    std::fs::write(&stacks, "broken\t0.5:f0.ppm\t2:f1.ppm\n").unwrap();
    let out = cli(&[
        "fuse",
        "--stacks",
        stacks.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr_of(&out).contains("broken"),
        "error must name the stack: {}",
        stderr_of(&out)
    );
}

/// One corpus feeds the whole pipeline walk: build (twice, for determinism),
/// train (determinism + resume), eval (CNN and SVM), features, svm, report.
#[test]
fn pipeline_walk() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        scenes_per_class: 12,
        width: 128,
        height: 128,
        seed: 20,
    };
    let corpus = generate(tmp.path(), &spec);

    // --- build, twice, into different directories ---
    let build = |out: &Path| {
        run_cli(&[
            "build",
            "--mhdr-dir",
            corpus.mhdr_dir.to_str().unwrap(),
            "--ihdr-dir",
            corpus.ihdr_dir.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
            "--verify-images",
            "4",
            "--train-blocks",
            "24",
        ]);
    };
    let data_a = tmp.path().join("data_a");
    let data_b = tmp.path().join("data_b");
    build(&data_a);
    build(&data_b);
    for file in ["manifest.tsv", "train.blocks", "verify1.blocks", "verify2.blocks"] {
        assert_eq!(
            read_bytes(&data_a.join(file)),
            read_bytes(&data_b.join(file)),
            "build re-run must reproduce {file} byte-for-byte"
        );
    }
    let manifest = read(&data_a.join("manifest.tsv"));
    assert!(manifest.starts_with("hdrsource-manifest v1"), "{manifest}");

    // --- train determinism: same seed, same history ---
    let train = |out: &Path, epochs: &str, resume: bool| {
        let mut args = vec![
            "train",
            "--data",
            data_a.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--arch",
            "plain",
            "--seed",
            "11",
            "--epochs",
            epochs,
            "--batch",
            "8",
        ];
        if resume {
            args.push("--resume");
        }
        run_cli(&args);
    };
    let run_a = tmp.path().join("run_a");
    let run_b = tmp.path().join("run_b");
    train(&run_a, "2", false);
    train(&run_b, "2", false);
    assert_eq!(
        read(&run_a.join("history.csv")),
        read(&run_b.join("history.csv")),
        "same-seed training must reproduce the history byte-for-byte"
    );
    assert_eq!(
        read_bytes(&run_a.join("last.ckpt")),
        read_bytes(&run_b.join("last.ckpt")),
        "same-seed training must reproduce the checkpoint byte-for-byte"
    );
    for artifact in ["last.ckpt", "best.ckpt", "state.train", "history.csv", "config.resolved"] {
        assert!(run_a.join(artifact).exists(), "missing {artifact}");
    }

    // Starting a fresh run into an occupied directory must fail loudly.
    let out = cli(&[
        "train",
        "--data",
        data_a.to_str().unwrap(),
        "--out",
        run_a.to_str().unwrap(),
        "--arch",
        "plain",
        "--seed",
        "11",
        "--epochs",
        "2",
        "--batch",
        "8",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // --- resume: 1 epoch + resumed second epoch == uninterrupted 2 epochs ---
    let run_c = tmp.path().join("run_c");
    train(&run_c, "1", false);
    train(&run_c, "2", true);
    assert_eq!(
        read(&run_a.join("history.csv")),
        read(&run_c.join("history.csv")),
        "a resumed run must replay the uninterrupted history"
    );
    assert_eq!(
        read_bytes(&run_a.join("last.ckpt")),
        read_bytes(&run_c.join("last.ckpt")),
        "a resumed run must land on identical weights"
    );

    // Wrong architecture on resume is a usage error.
    let out = cli(&[
        "train",
        "--data",
        data_a.to_str().unwrap(),
        "--out",
        run_c.to_str().unwrap(),
        "--arch",
        "residual",
        "--seed",
        "11",
        "--epochs",
        "3",
        "--batch",
        "8",
        "--resume",
    ]);
    assert_eq!(out.status.code(), Some(1));

    // --- eval: CNN on both verification splits, deterministically ---
    let eval = |model: &Path, split: &str, out: &Path| {
        run_cli(&[
            "eval",
            "--data",
            data_a.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--split",
            split,
            "--out",
            out.to_str().unwrap(),
        ]);
    };
    let eval_v1 = tmp.path().join("eval_v1");
    eval(&run_a.join("best.ckpt"), "verify1", &eval_v1);
    let report_v1 = read(&eval_v1.join("report-best-s7-verify1.csv"));
    assert!(
        report_v1.starts_with("class,block_count,block_accuracy,auc,image_count,mvs_accuracy"),
        "{report_v1}"
    );
    assert_eq!(report_v1.lines().count(), 4, "{report_v1}");
    assert!(eval_v1.join("roc-best-s7-verify1.csv").exists());
    assert!(eval_v1.join("roc-best-s7-verify1.svg").exists());
    let votes = read(&eval_v1.join("votes-best-s7-verify1.csv"));
    assert_eq!(
        votes.lines().count(),
        9,
        "8 verification images + header: {votes}"
    );

    let eval_v1_again = tmp.path().join("eval_v1_again");
    eval(&run_a.join("best.ckpt"), "verify1", &eval_v1_again);
    assert_eq!(
        report_v1,
        read(&eval_v1_again.join("report-best-s7-verify1.csv")),
        "eval re-run must reproduce the report byte-for-byte"
    );

    let eval_v2 = tmp.path().join("eval_v2");
    eval(&run_a.join("last.ckpt"), "verify2", &eval_v2);
    let report_v2 = read(&eval_v2.join("report-last-s7-verify2.csv"));
    assert!(report_v2.starts_with("blocks,accuracy\n"), "{report_v2}");
    assert_eq!(report_v2.lines().count(), 2, "{report_v2}");

    let out = cli(&[
        "eval",
        "--data",
        data_a.to_str().unwrap(),
        "--model",
        run_a.join("best.ckpt").to_str().unwrap(),
        "--split",
        "verify3",
        "--out",
        tmp.path().join("eval_bad").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "unknown split is a usage error");

    // --- features + svm + eval with the SVM model ---
    let feat_dir = tmp.path().join("feats");
    for split in ["train", "verify1"] {
        run_cli(&[
            "features",
            "--data",
            data_a.to_str().unwrap(),
            "--out",
            feat_dir.to_str().unwrap(),
            "--split",
            split,
            "--kind",
            "spam",
        ]);
    }
    assert!(feat_dir.join("spam-train.feat").exists());
    let svm_dir = tmp.path().join("svm");
    run_cli(&[
        "svm",
        "--features",
        feat_dir.join("spam-train.feat").to_str().unwrap(),
        "--out",
        svm_dir.to_str().unwrap(),
        "--seed",
        "13",
    ]);
    let svm_csv = read(&svm_dir.join("svm.csv"));
    assert!(svm_csv.starts_with("kind,dims,examples,chosen_c\nspam,686,24,"), "{svm_csv}");
    let eval_svm = tmp.path().join("eval_svm");
    eval(&svm_dir.join("svm.model"), "verify1", &eval_svm);
    assert!(eval_svm.join("report-svm-s7-verify1.csv").exists());

    // --- report merges eval outputs ---
    let cmp_dir = tmp.path().join("cmp");
    run_cli(&[
        "report",
        "--out",
        cmp_dir.to_str().unwrap(),
        eval_v1.to_str().unwrap(),
        eval_svm.to_str().unwrap(),
    ]);
    let cmp = read(&cmp_dir.join("comparison.csv"));
    assert!(cmp.starts_with("run,class,"), "{cmp}");
    assert_eq!(
        cmp.lines().count(),
        7,
        "header + 3 rows per merged verify1 report: {cmp}"
    );
    assert!(cmp.contains("eval_v1/best-s7-verify1"), "{cmp}");
    assert!(cmp.contains("eval_svm/svm-s7-verify1"), "{cmp}");
}

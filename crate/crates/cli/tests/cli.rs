use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use landscape_cli::runner::thresholds_from_manifest;
use landscape_cli::{
    compare_baseline, describe, parse_rows, run_experiment, summarize, write_outputs, CliError,
    Experiment,
};
use sha2::{Digest, Sha256};

const SMALL: &str = r#"
name = "small"

[dataset]
generator = "xor"

[network]
widths = [2]
activation = "tanh"

[model]
augmentation = "skip_exp"
lambdas = [0.1]

[seeds]
count = 2

[optimizer]
max_iters = 300
init_scale = 1.0
"#;

fn exp(text: &str) -> Experiment {
    Experiment::from_str_in(text, Path::new(".")).unwrap()
}

fn config_error(text: &str) -> (String, String) {
    match Experiment::from_str_in(text, Path::new(".")) {
        Err(CliError::Config { path, message }) => (path, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_landscape-lab"))
}

#[test]
fn zero_seeds_is_rejected() {
    let (path, msg) = config_error(&SMALL.replace("count = 2", "count = 0"));
    assert_eq!(path, "seeds.count");
    assert!(msg.contains("seed count must be ≥ 1"), "{msg}");
}

#[test]
fn invalid_activation_names_the_field() {
    let (path, msg) = config_error(&SMALL.replace("\"tanh\"", "\"swish\""));
    assert_eq!(path, "network.activation");
    assert!(msg.contains("swish"), "{msg}");
}

#[test]
fn unknown_and_mistyped_fields_name_the_field() {
    let (path, _) = config_error(&SMALL.replace("[seeds]", "[seeds]\nbogus = 1"));
    assert!(path.starts_with("seeds"), "{path}");
    let (path, _) = config_error(&SMALL.replace("widths = [2]", "widths = [\"two\"]"));
    assert!(path.starts_with("network.widths"), "{path}");
    let (path, _) = config_error(&SMALL.replace("lambdas = [0.1]", "lambdas = [0.1, 0.0]"));
    assert_eq!(path, "model.lambdas[1]");
    let (path, _) = config_error(&SMALL.replace("generator = \"xor\"", "generator = \"xor\"\nn = 4"));
    assert_eq!(path, "dataset.n");
}

#[test]
fn one_row_per_seed() {
    let e = exp(SMALL);
    let report = run_experiment(&e);
    assert_eq!(report.rows.len(), 2);
    assert!(report.failures.is_empty());
    assert_eq!(report.rows[0].seed, 0);
    assert_eq!(report.rows[1].seed, 1);
}

#[test]
fn files_round_trip_and_aggregates_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let e = exp(&SMALL.replace("lambdas = [0.1]", "lambdas = [0.01, 0.1]").replace("count = 2", "count = 3"));
    let report = run_experiment(&e);
    write_outputs(&e, &report, dir.path()).unwrap();

    let rows_text = fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    let rows = parse_rows(&rows_text).unwrap();
    assert_eq!(rows, report.rows);
    let order: Vec<(usize, u64)> = rows.iter().map(|r| (r.lambda_index, r.seed)).collect();
    assert_eq!(order, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]);

    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    let th = thresholds_from_manifest(&manifest).unwrap();
    assert_eq!(th, e.thresholds);
    for r in &rows {
        assert_eq!(r.recompute_verdict(&th), r.verdict, "row {}", r.run_id);
    }

    // Independent re-aggregation of the row file.
    let mut by_cell: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for line in rows_text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let cell = by_cell.entry(f[2].parse().unwrap()).or_default();
        cell.0 += 1;
        if f[17] == "certified-global" {
            cell.1 += 1;
        }
        if f[15].parse::<f64>().unwrap() > 0.0 {
            cell.2 += 1;
        }
    }
    let cells = summarize(&rows, &th);
    assert_eq!(cells.len(), 2);
    for (i, c) in cells.iter().enumerate() {
        let (n, cg, te) = by_cell[&i];
        assert_eq!(c.runs, n);
        assert_eq!(c.fraction(c.certified_global), cg as f64 / n as f64);
        assert_eq!(c.fraction(c.train_error_positive), te as f64 / n as f64);
    }

    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("frac_certified_global"));
    for c in &cells {
        assert!(summary.contains(&format!("{:.16e}", c.fraction(c.certified_global))));
    }

    let dataset = fs::read(dir.path().join("dataset.csv")).unwrap();
    let hash: String = Sha256::digest(&dataset).iter().map(|b| format!("{b:02x}")).collect();
    assert!(manifest.contains(&format!("dataset_sha256 = {hash}")));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let e = exp(SMALL);
    write_outputs(&e, &run_experiment(&e), a.path()).unwrap();
    write_outputs(&e, &run_experiment(&e), b.path()).unwrap();
    for f in ["rows.csv", "summary.txt", "dataset.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn thread_count_does_not_change_rows() {
    let e = exp(SMALL);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| run_experiment(&e));
    let b = three.install(|| run_experiment(&e));
    assert_eq!(a.rows, b.rows);
}

#[test]
fn degenerate_comparison_gives_identical_arms() {
    let text = format!("{SMALL}\n[compare]\nbaseline = \"skip_exp\"\n");
    let e = exp(&text);
    let report = compare_baseline(&e).unwrap();
    let (base, treat) = report.rows.split_at(2);
    assert_eq!(base.len(), treat.len());
    for (x, y) in base.iter().zip(treat) {
        assert_eq!(x.seed, y.seed);
        assert_eq!(x.loss.to_bits(), y.loss.to_bits());
        assert_eq!(x.grad_norm.to_bits(), y.grad_norm.to_bits());
        assert_eq!(x.verdict, y.verdict);
        assert_ne!(x.arm, y.arm);
    }
}

#[test]
fn comparison_arms_have_equal_row_counts() {
    let text = format!("{SMALL}\n[compare]\n").replace("lambdas = [0.1]", "lambdas = [0.01, 0.1]");
    let e = exp(&text);
    let report = compare_baseline(&e).unwrap();
    let base = report.rows.iter().filter(|r| r.arm == "baseline:none").count();
    let treat = report.rows.iter().filter(|r| r.arm == "treatment:skip_exp").count();
    assert_eq!(base, 4);
    assert_eq!(treat, 4);
    assert!(report.rows.iter().filter(|r| r.arm == "baseline:none").all(|r| r.inactivity.is_none()));
}

#[test]
fn describe_counts_runs() {
    let text = format!("{SMALL}\n[compare]\n")
        .replace("lambdas = [0.1]", "lambdas = [0.01, 0.1]")
        .replace("count = 2", "count = 3");
    let plan = describe(&exp(&text));
    assert!(plan.contains("12 runs planned"), "{plan}");
    assert!(describe(&exp(SMALL)).contains("2 runs planned"));
}

#[test]
fn relu_rows_mark_curvature_as_skipped() {
    let e = exp(&SMALL.replace("\"tanh\"", "\"relu\"").replace("skip_exp", "none").replace("lambdas = [0.1]\n", ""));
    let report = run_experiment(&e);
    for r in &report.rows {
        assert!(r.nonsmooth && r.min_hessian_eig.is_none() && r.probe_pass.is_some());
    }
    let text = landscape_cli::rows_to_csv(&report.rows);
    assert!(text.contains("nonsmooth-skipped"));
}

#[test]
fn binary_describe_leaves_output_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = bin().arg("describe").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("2 runs planned"));
    assert!(!out.exists());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SMALL.replace("\"tanh\"", "\"swish\"")).unwrap();
    let o = bin().arg("run").arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("network.activation"));

    let missing = bin().arg("run").arg(dir.path().join("nope.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));

    let no_compare = dir.path().join("plain.toml");
    fs::write(&no_compare, SMALL).unwrap();
    let o = bin().arg("compare").arg(&no_compare).output().unwrap();
    assert_eq!(o.status.code(), Some(1));

    let out = dir.path().join("out");
    let o = bin()
        .args(["run", no_compare.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(["--threads", "2", "--seed-offset", "5"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_rows(&fs::read_to_string(out.join("rows.csv")).unwrap()).unwrap();
    let seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![5, 6]);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config.seeds.offset = 5"));
    assert!(manifest.contains("runtime_failures = 0"));
}

#[test]
fn dataset_files_load_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let ds = landscape_core::datasets::gen_xor();
    landscape_core::datasets::save(&ds, &dir.path().join("xor.csv")).unwrap();
    let text = SMALL.replace("generator = \"xor\"", "generator = \"file\"\npath = \"xor.csv\"");
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, text).unwrap();
    let e = Experiment::load(&cfg).unwrap();
    assert_eq!(e.dataset.features(), ds.features());
    assert_eq!(e.dataset.labels(), ds.labels());
    assert_eq!(run_experiment(&e).rows.len(), 2);
}

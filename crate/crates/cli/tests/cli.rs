//! End-to-end checks of the `hyperwalk` binary: exit codes, output files,
//! determinism and the report schema.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hyperwalk"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(&fs::read_to_string(repo_file("schemas/report.schema.json")).unwrap()).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

fn assert_valid(v: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path)).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("duality", "[experiment]\nseeds = 3\n"),
        ("duality", "[graph]\nkind = \"torus\"\nradius = 2\n"),
        (
            "reversal",
            "[graph]\nkind = \"general\"\nvertices = 2\nedges = [[0, 1], [1, 0], [0, 0]]\n[weights]\nalpha = [1.0, 2.0, 1.0]\n",
        ),
        ("green-moment", "[graph]\nkind = \"box\"\nd = 3\n[experiment]\ns_values = [1.5]\nn_environments = 4\n"),
        ("describe", "[graph]\nkind = \"general\"\nvertices = 3\nedges = [[0, 1], [1, 0]]\n"),
        ("phi", "[weights]\nalpha = [1.0, 1.0]\nbeta = [2.0]\nz = [[1.0, -1.0]]\n"),
        ("invariant-measure", "[graph]\nd = 2\n"),
    ];
    for (i, (cmd, body)) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("c{i}.toml"), body);
        let o = run(&[cmd, "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{cmd} with {body:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&run(&["duality", "--config", "/nonexistent/x.toml"])), 2);
    assert_eq!(code(&run(&["duality", "--format", "csv"])), 2);
}

#[test]
fn failed_acceptance_exits_with_one() {
    let o = run(&[
        "invariant-measure",
        "--config",
        repo_file("configs/invariant_measure_weak.toml").to_str().unwrap(),
        "--replicas",
        "20",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL divergence_probe_p=1"));
}

#[test]
fn describe_reports_counts_and_kappa() {
    let o = run(&["describe"]);
    assert_eq!(code(&o), 0);
    let d: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(d["edges"], 384);
    assert_eq!(d["vertices"], 64);
    assert_eq!(d["kappa"], 10.0);
    assert_eq!(d["kappa_tilde"], 1.0);
    assert_valid(&validator(), &d);
}

#[test]
fn json_is_byte_identical_and_timestamp_is_separate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.toml", "[experiment]\nseed = 9\nn_environments = 200\nn_walks = 200\n");
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let o = run(&[
            "trap-times",
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
        let sidecar: Value = serde_json::from_str(&fs::read_to_string(out.join("trap-times.timestamp.json")).unwrap()).unwrap();
        assert!(sidecar["created_unix_seconds"].as_u64().unwrap() > 0);
        outputs.push(fs::read(out.join("trap-times.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(!text.contains("created_unix_seconds"));
    assert!(!text.contains(dir.path().to_str().unwrap()), "output path leaked into the report");
}

#[test]
fn seed_flag_changes_the_report() {
    let a = run(&["duality", "--seed", "1", "--tol", "1e-8"]);
    let b = run(&["duality", "--seed", "2", "--tol", "1e-8"]);
    assert_eq!((code(&a), code(&b)), (0, 0));
    assert_ne!(a.stdout, b.stdout);
    let r: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(r["seed"], 1);
    assert_eq!(r["provenance"]["seed"], 1);
}

#[test]
fn csv_files_have_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "invariant-measure",
        "--replicas",
        "5",
        "--format",
        "both",
        "--out",
        out.to_str().unwrap(),
    ]);
    // five replicas are too few for the statistical flags; only the files matter
    assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
    let mut csvs: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    assert!(!csvs.is_empty());
    for p in &csvs {
        let text = fs::read_to_string(p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("env_index,seed_stream,value"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 5);
        for (i, row) in rows.iter().enumerate() {
            let cols: Vec<&str> = row.split(',').collect();
            assert_eq!(cols.len(), 3);
            assert_eq!(cols[0].parse::<usize>().unwrap(), i);
            cols[1].parse::<u64>().unwrap();
            cols[2].parse::<f64>().unwrap();
        }
    }
    assert!(out.join("invariant-measure.json").exists());
}

#[test]
fn every_output_validates_against_the_schema() {
    let v = validator();
    let dir = tempfile::tempdir().unwrap();
    let phi = repo_file("configs/phi.toml");
    let two = repo_file("configs/two_vertex.toml");
    let small = write_config(
        dir.path(),
        "small.toml",
        "[graph]\nd = 3\n[experiment]\nseed = 2\nn_environments = 10\nn_values = [2, 3]\nn_walks = 50\nn_hitting_envs = 5\n",
    );
    let reversal = write_config(dir.path(), "rev.toml", "[graph]\nd = 2\nn = 2\n[experiment]\nn_environments = 200\nn_hitting_envs = 5\n");
    let green = write_config(dir.path(), "green.toml", "[graph]\nkind = \"box\"\n[experiment]\nn_values = [2, 4]\nn_environments = 5\n");
    let cases: Vec<Vec<&str>> = vec![
        vec!["describe"],
        vec!["describe", "--config", two.to_str().unwrap()],
        vec!["phi", "--config", phi.to_str().unwrap()],
        vec!["sample-env", "--replicas", "2", "--config", two.to_str().unwrap()],
        vec!["duality", "--seed", "3"],
        vec!["reversal", "--config", reversal.to_str().unwrap()],
        vec!["green-moment", "--config", green.to_str().unwrap()],
        vec!["invariant-measure", "--config", small.to_str().unwrap()],
        vec!["trap-times", "--config", small.to_str().unwrap()],
        vec!["flow-build"],
    ];
    for args in cases {
        let o = run(&args);
        assert!(code(&o) <= 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let doc: Value = serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        assert_valid(&v, &doc);
        assert_eq!(doc["schema_version"], "1.0.0");
    }
}

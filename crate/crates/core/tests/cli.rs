//! The `outage` binary end to end: outputs, exit codes and determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples/data")
        .join(name)
}

fn outage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_outage"))
        .args(args)
        .env("OUTAGE_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `(branch, probability)` rows of a marginal CSV.
fn marginals(csv: &str) -> Vec<(String, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn infer_writes_marginals_and_locations() {
    let dir = tempfile::tempdir().unwrap();
    let o = outage(&[
        "infer",
        "--topology",
        p(&data("three_branch.feeder")),
        "--evidence",
        p(&data("three_branch.evidence")),
        "--iterations",
        "2000",
        "--seed",
        "3",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let branches = fs::read_to_string(dir.path().join("branches.csv")).unwrap();
    let rows = marginals(&branches);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|(_, p)| (0.0..=1.0).contains(p)));
    assert_eq!(
        marginals(&fs::read_to_string(dir.path().join("customers.csv")).unwrap()).len(),
        7
    );
    let locations = fs::read_to_string(dir.path().join("locations.txt")).unwrap();
    assert_eq!(locations.trim(), "lat_a");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "infer");
    assert_eq!(manifest["seeds"]["seed"], 3);
}

#[test]
fn sampler_agrees_with_exact_enumeration() {
    let run = |extra: &[&str]| {
        let mut args = vec!["infer", "--topology", "T", "--evidence", "E", "--seed", "5"];
        let t = data("three_branch.feeder");
        let e = data("three_branch.evidence");
        args[2] = p(&t);
        args[4] = p(&e);
        let args: Vec<String> = args.iter().chain(extra).map(|s| s.to_string()).collect();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = outage(&refs);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        marginals(&String::from_utf8(o.stdout).unwrap())
    };
    let exact = run(&["--exact"]);
    let gibbs = run(&["--iterations", "20000", "--chains", "4"]);
    for ((id, a), (id2, b)) in exact.iter().zip(&gibbs) {
        assert_eq!(id, id2);
        assert!((a - b).abs() < 0.02, "{id}: exact {a}, sampled {b}");
    }
}

#[test]
fn input_errors_exit_two() {
    let t = data("three_branch.feeder");
    let e = data("three_branch.evidence");
    // too many unknowns for the configured enumeration limit
    let o = outage(&[
        "infer",
        "--topology",
        p(&t),
        "--evidence",
        p(&e),
        "--exact",
        "--exact-limit",
        "5",
    ]);
    assert_eq!(code(&o), 2);

    let o = outage(&[
        "infer",
        "--topology",
        "/nonexistent.feeder",
        "--evidence",
        p(&e),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent.feeder"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.evidence");
    fs::write(&bad, "meter nobody 1\n").unwrap();
    let o = outage(&["infer", "--topology", p(&t), "--evidence", p(&bad)]);
    assert_eq!(code(&o), 2);

    let o = outage(&[
        "infer",
        "--topology",
        p(&t),
        "--evidence",
        p(&e),
        "--scan",
        "sideways",
    ]);
    assert_eq!(code(&o), 2);
    let o = outage(&["calibrate", "--generate", "5", "--sweep", "400,200"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn impossible_evidence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    // no customer faults, no spurious last gasps, no way for a branch to fail
    let params = dir.path().join("strict.params");
    fs::write(&params, "pi2 fixed=0\npi5 fixed=0\nalpha_tree 0\n").unwrap();
    let ev = dir.path().join("gasp.evidence");
    fs::write(&ev, "meter b1 1\n").unwrap();
    let t = data("three_branch.feeder");
    for extra in [&[][..], &["--exact"][..]] {
        let mut args = vec![
            "infer",
            "--topology",
            p(&t),
            "--evidence",
            p(&ev),
            "--params",
            p(&params),
        ];
        args.extend_from_slice(extra);
        assert_eq!(code(&outage(&args)), 3);
    }
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn simulate(out: &Path) -> Output {
    outage(&[
        "simulate",
        "--generate",
        "17",
        "--n-scenarios",
        "4",
        "--n-outages",
        "1,2",
        "--iterations",
        "300",
        "--seed",
        "9",
        "--out",
        p(out),
    ])
}

#[test]
fn simulate_is_reproducible_and_scoreable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(a.path())), 0);
    assert_eq!(code(&simulate(b.path())), 0);

    let files = files_under(a.path());
    assert_eq!(files, files_under(b.path()));
    let timing_free: Vec<&PathBuf> = files
        .iter()
        .filter(|f| {
            !matches!(
                f.file_name().unwrap().to_str(),
                Some("manifest.json" | "runtime.csv")
            )
        })
        .collect();
    // 3 observabilities x 2 outage counts x 4 scenarios x 3 files, plus
    // metrics.csv and the topology
    assert_eq!(timing_free.len(), 3 * 2 * 4 * 3 + 2);
    for f in timing_free {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{} differs between identical runs",
            f.display()
        );
    }
    let metrics = fs::read_to_string(a.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 6);
    let runtime = fs::read_to_string(a.path().join("runtime.csv")).unwrap();
    assert_eq!(runtime.lines().count(), 1 + 6);

    // a scenario set scored against its own truth
    let cell = a.path().join("scenarios/synthetic-17/obs0.50_outages1");
    let o = outage(&["evaluate", "--predictions", p(&cell), "--truth", p(&cell)]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "4");

    // the truth scored against itself is perfect
    let perfect = tempfile::tempdir().unwrap();
    for s in ["s0000", "s0001"] {
        let d = perfect.path().join(s);
        fs::create_dir_all(&d).unwrap();
        let truth = fs::read_to_string(cell.join(s).join("truth.txt")).unwrap();
        fs::write(d.join("truth.txt"), &truth).unwrap();
        fs::write(d.join("prediction.txt"), truth.replace("truth ", "state ")).unwrap();
    }
    let o = outage(&[
        "evaluate",
        "--predictions",
        p(perfect.path()),
        "--truth",
        p(perfect.path()),
    ]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "1.000000");
    assert_eq!(row[5], "1.000000");

    // a missing truth file is named in the error
    fs::remove_file(perfect.path().join("s0001/truth.txt")).unwrap();
    let o = outage(&[
        "evaluate",
        "--predictions",
        p(perfect.path()),
        "--truth",
        p(perfect.path()),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("truth.txt"));

    // differing scenario sets are rejected
    let o = outage(&[
        "evaluate",
        "--predictions",
        p(perfect.path()),
        "--truth",
        p(&cell),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn calibrate_accepts_first_point_for_certain_networks() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("certain.params");
    fs::write(&params, "pi2 fixed=0\npi3 0\npi5 fixed=0\nalpha_tree 0\n").unwrap();
    let quiet = dir.path().join("quiet.evidence");
    fs::write(&quiet, "# no reports, calm weather\n").unwrap();
    let out = dir.path().join("cal");
    let o = outage(&[
        "calibrate",
        "--topology",
        p(&data("three_branch.feeder")),
        "--evidence",
        p(&quiet),
        "--params",
        p(&params),
        "--sweep",
        "100,200",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let chosen = fs::read_to_string(out.join("chosen.csv")).unwrap();
    assert_eq!(
        chosen.lines().nth(1).unwrap().split(',').nth(1),
        Some("100")
    );
    let rhat = fs::read_to_string(out.join("rhat.csv")).unwrap();
    // header plus 2 sweep points x 10 unknowns
    assert_eq!(rhat.lines().count(), 1 + 2 * 10);
}

use std::path::Path;
use std::process::{Command, Output};

fn evostore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evostore"))
        .args(args)
        .output()
        .expect("spawn evostore")
}

fn run_to(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--rows", "1000000", "--props", "7", "--seed", "5", "--out"];
    let out = out.to_str().unwrap();
    args.push(out);
    args.extend_from_slice(extra);
    evostore(&args)
}

#[test]
fn run_writes_one_row_per_candidate_per_generation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let res = run_to(&out, &["--generations", "12", "--pop-size", "6", "--window", "42"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 12 * 6);
    assert_eq!(
        lines[0],
        "generation,candidate_id,rank,genome,mean_cost,query_count,materialization_cost,best_flag"
    );
    let mut reader = csv::ReaderBuilder::new().from_path(&out).unwrap();
    let mut best_per_generation = std::collections::BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[5], "7", "42 queries over 6 candidates");
        if &rec[7] == "1" {
            assert_eq!(&rec[2], "A");
            *best_per_generation.entry(rec[0].to_owned()).or_insert(0) += 1;
        }
    }
    assert_eq!(best_per_generation.len(), 12);
    assert!(best_per_generation.values().all(|&n| n == 1));
}

#[test]
fn identical_flags_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let flags = ["--p-crossover", "0.5", "--generations", "50"];
    assert!(run_to(&a, &flags).status.success());
    assert!(run_to(&b, &flags).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.csv");
    let res = evostore(&[
        "run", "--rows", "1000000", "--props", "7", "--seed", "6", "--p-crossover", "0.5",
        "--generations", "50", "--out", c.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn config_errors_exit_2_and_name_the_flag() {
    for (args, flag) in [
        (vec!["run", "--pop-size", "0"], "--pop-size"),
        (vec!["run", "--elim-frac", "1.0"], "--elim-frac"),
        (vec!["run", "--window", "41"], "--window"),
        (vec!["run", "--p-crossover", "2"], "--p-crossover"),
        (vec!["gen-data", "--rows", "0", "--out", "unused.csv"], "--rows"),
    ] {
        let res = evostore(&args);
        assert_eq!(res.status.code(), Some(2), "{args:?}");
        let stderr = String::from_utf8_lossy(&res.stderr);
        assert!(stderr.contains(flag), "{args:?}: {stderr}");
    }
}

#[test]
fn bad_workload_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let wl = dir.path().join("bad.wl");
    std::fs::write(&wl, "phase p queries=10\ntemplate props=0 sel=1.5\n").unwrap();
    let res = evostore(&["run", "--workload", wl.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

#[test]
fn oversized_dataset_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("big.csv");
    let res = evostore(&[
        "gen-data", "--rows", "1000000", "--props", "7", "--memory-budget-bytes", "1000",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("budget"));
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let res = evostore(&[
            "gen-data", "--rows", "1000", "--props", "7", "--seed", "9", "--out", out.to_str().unwrap(),
        ]);
        assert!(res.status.success());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1000);
    for line in text.lines() {
        let values: Vec<i64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(values.len(), 7);
        assert!(values.iter().all(|&v| (0..1i64 << 32).contains(&v)));
    }
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn measured_run_on_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let out = dir.path().join("run.csv");
    assert!(evostore(&[
        "gen-data", "--rows", "5000", "--props", "4", "--seed", "1", "--out", data.to_str().unwrap(),
    ])
    .status
    .success());
    let res = evostore(&[
        "run", "--fitness", "measured", "--props", "4", "--rows", "5000", "--generations", "5",
        "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 5 * 4);

    let res = evostore(&[
        "run", "--fitness", "measured", "--props", "5", "--data", data.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2), "property count mismatch");
}

#[test]
fn oracle_reports_counts_and_ties() {
    let dir = tempfile::tempdir().unwrap();
    let ranked = dir.path().join("ranked.csv");
    let res = evostore(&["oracle", "--props", "7", "--phase", "halves", "--out", ranked.to_str().unwrap()]);
    assert!(res.status.success());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("evaluated 877 layouts"), "{stdout}");
    // Optimal layouts are exactly the refinements of 0,1,2,3|4,5,6: B(4) * B(3).
    assert!(stdout.contains("cost 28000000"), "{stdout}");
    assert!(stdout.contains("ties 75\n"), "{stdout}");
    assert!(stdout.contains("  0,1,2,3|4,5,6\n"), "{stdout}");
    assert!(!stdout.contains("  0,1,2,3,4,5,6\n"), "{stdout}");
    let text = std::fs::read_to_string(&ranked).unwrap();
    assert_eq!(text.lines().count(), 878);
    assert_eq!(text.lines().next(), Some("rank,layout,cost,optimal"));

    let res = evostore(&["oracle", "--props", "3"]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("evaluated 5 layouts"));
    // Phase `all` reads every property: every layout costs the same.
    assert!(String::from_utf8_lossy(&res.stdout).contains("ties 5"));

    assert_eq!(evostore(&["oracle", "--props", "11"]).status.code(), Some(2));
    assert_eq!(evostore(&["oracle", "--phase", "9"]).status.code(), Some(2));
    assert_eq!(evostore(&["oracle", "--phase", "nope"]).status.code(), Some(2));
}

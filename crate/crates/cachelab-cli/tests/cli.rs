use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cachelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cachelab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn trace_generation_is_byte_identical_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = cachelab(&["generate-trace", "--n", "200", "--length", "3000", "--seed", "9", "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(a.with_extension("json")).unwrap(),
        fs::read(b.with_extension("json")).unwrap()
    );

    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("# cachelab "));
    assert!(text.contains("# seed: 9\n"));
    assert!(text.contains("# config_sha256: "));

    let o = cachelab(&["simulate", "--policy", "lfu", "--cache", "20", "--trace", p(&a)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["hits"].as_u64().unwrap() + v["result"]["misses"].as_u64().unwrap(), 3000);
    assert_eq!(v["provenance"]["command"], "simulate");
}

#[test]
fn different_seeds_change_the_hash_and_output() {
    let run = |seed: &str| cachelab(&["generate-trace", "--n", "50", "--length", "100", "--seed", seed]).stdout;
    let (a, b) = (run("1"), run("2"));
    assert_ne!(a, b);
    let header = |x: &[u8]| String::from_utf8_lossy(x).lines().nth(2).unwrap().to_string();
    assert_ne!(header(&a), header(&b));
}

#[test]
fn outputs_need_force_to_be_replaced() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let args = ["gridlaws", "--tau", "0.8", "--regime", "fixedK", "--sizes", "16,64,256", "--out", p(&out)];
    assert_eq!(code(&cachelab(&args)), 0);
    let o = cachelab(&args);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&cachelab(&forced)), 0);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.with_extension("json")).unwrap()).unwrap();
    assert!(summary["result"]["slope"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    // Missing seed for a stochastic command.
    assert_eq!(code(&cachelab(&["generate-trace"])), 1);
    // Unknown subcommand and malformed values.
    assert_eq!(code(&cachelab(&["no-such-command"])), 1);
    assert_eq!(code(&cachelab(&["che", "--tau", "x", "--n", "10", "--gamma", "0.1"])), 1);
    // Library validation failure.
    assert_eq!(code(&cachelab(&["gridlaws", "--tau", "0.8", "--regime", "k-first", "--sizes", "16,64"])), 1);
    // Output directory does not exist.
    let o = cachelab(&["che", "--tau", "0.8", "--n", "100", "--gamma", "0.1", "--out", "/nonexistent-dir/x.json"]);
    assert_eq!(code(&o), 2);
    // A far too short trace cannot match Che's steady state.
    let o = cachelab(&[
        "repro", "fig-che", "--n", "1000", "--length", "300", "--seed", "1", "--check",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
    assert_eq!(code(&cachelab(&["--help"])), 0);
}

#[test]
fn repetitions_do_not_depend_on_jobs() {
    let run = |jobs: &str| {
        let o = cachelab(&[
            "repro", "mle-unlabeled", "--n", "2000", "--length", "20000", "--reps", "3", "--seed", "4", "--jobs", jobs,
        ]);
        assert_eq!(code(&o), 0);
        o.stdout
    };
    let one = run("1");
    assert_eq!(one, run("3"));
    let rows = String::from_utf8(one).unwrap();
    assert_eq!(rows.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn che_matches_library() {
    let o = cachelab(&["che", "--tau", "0.8", "--n", "10000", "--gamma", "0.1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let pop = cachelab::popularity::PowerLaw::new(0.8, 10_000).unwrap().to_popularity();
    let h = cachelab::eviction::lru_hit_prob_che(&pop, 1.0, 1000).unwrap();
    assert_eq!(v["result"]["hit_prob"].as_f64().unwrap(), h);
    assert_eq!(v["result"]["cache"], 1000);
}

#[test]
fn fit_zipf_from_counts_and_oga_table() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let rows: String = (1..=100).map(|i| format!("{i},{}\n", 100_000 / i)).collect();
    fs::write(&counts, format!("content_id,count\n{rows}")).unwrap();
    let o = cachelab(&["fit-zipf", "--counts", p(&counts), "--mode", "labeled"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["result"]["fit"]["tau_mle"].as_f64().unwrap() - 1.0).abs() < 0.01);

    let trace = dir.path().join("t.csv");
    fs::write(&trace, "time,content_id\n1,1\n2,2\n3,1\n4,3\n5,1\n").unwrap();
    let weights = dir.path().join("w.csv");
    fs::write(&weights, "content_id,weight\n2,3\n").unwrap();
    let o = cachelab(&["oga", "--trace", p(&trace), "--cache", "1", "--eta", "0.5", "--weights", p(&weights)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "slot,u_policy,u_hindsight_cum,regret");
    assert_eq!(body.len(), 6);
}

#[test]
fn femto_reads_network_json() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    fs::write(
        &net,
        r#"{"users":[1,2],"caches":[{"id":0,"capacity":0},{"id":7,"capacity":1}],
            "edges":[[1,0,1.0],[2,0,1.0],[1,7,0.1],[2,7,0.2]],
            "demand":[[1,1,0.9],[2,2,0.5],[2,1,0.1]]}"#,
    )
    .unwrap();
    let o = cachelab(&["femto", "--network", p(&net), "--exact"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["placement"]["7"], serde_json::json!([1]));
    assert_eq!(v["result"]["ratio"], 1.0);
}

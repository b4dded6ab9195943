use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reclab"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

const EXACT: &str = r#"
experiment = "exact-evolve"
seed = 11

[model]
k = 2
n = 3
marginals = { kind = "per-site", sites = [[0.3, 0.7], [0.6, 0.4], [0.5, 0.5]] }

[init]
kind = "comonotonic"

[run]
t_max = 6
"#;

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn header(csv: &str) -> Vec<String> {
    csv.lines().find(|l| !l.starts_with('#')).unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn exact_evolve_rows_respect_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exact.toml", EXACT);
    let out = dir.path().join("out");
    let o = run(&["exact-evolve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("exact-evolve.csv")).unwrap();
    assert!(csv.starts_with("# reclab "));
    assert!(csv.lines().nth(1).unwrap().starts_with("# config: {"));
    let head = header(&csv);
    let tv = head.iter().position(|h| h == "tv_to_pi").unwrap();
    let bound = head.iter().position(|h| h == "upper_bound").unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 7);
    for r in rows {
        let (a, b): (f64, f64) = (r[tv].parse().unwrap(), r[bound].parse().unwrap());
        assert!(a <= b + 1e-12, "tv {a} above bound {b}");
    }
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("exact-evolve.json")).unwrap()).unwrap();
    assert!(json.get("config").is_some());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mc.toml",
        r#"
experiment = "mc-evolve"
seed = 3

[model]
k = 3
n = 40
marginals = { kind = "random", delta = 0.1, seed = 9 }

[init]
kind = "basket"
b = 8

[run]
ts = [0, 2, 4]
samples = 3000
"#,
    );
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let o = run(&["mc-evolve", "--config", cfg.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((std::fs::read(out.join("mc-evolve.csv")).unwrap(), std::fs::read(out.join("mc-evolve.json")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_flag_changes_monte_carlo_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "frag.toml",
        r#"
experiment = "fragmentation"
seed = 1

[model]
k = 2
n = 2
marginals = { kind = "homogeneous", p = [0.5, 0.5] }

[run]
t_max = 6
samples = 2000
n_values = [4]
"#,
    );
    let read = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = run(&["fragmentation", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        std::fs::read(out.join("fragmentation.csv")).unwrap()
    };
    assert_ne!(read("1", "a"), read("2", "b"));
}

#[test]
fn validate_accepts_a_well_formed_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ok.toml", EXACT);
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "ok");
}

#[test]
fn marginal_below_declared_delta_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        r#"
experiment = "exact-evolve"

[model]
k = 2
n = 2
delta = 0.01
marginals = { kind = "homogeneous", p = [0.005, 0.995] }
"#,
    );
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("model."));
    let o = run(&["exact-evolve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oversized_exact_evolution_is_a_capacity_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "big.toml",
        r#"
experiment = "exact-evolve"

[model]
k = 3
n = 40
marginals = { kind = "homogeneous", p = [0.2, 0.3, 0.5] }
"#,
    );
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("capacity"));
    let o = run(&["exact-evolve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "typo.toml", "experiment = \"profile\"\nsede = 3\n");
    let o = run(&["profile", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn profile_table_ends_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "profile.toml",
        r#"
experiment = "profile"

[model]
k = 2
n = 1
marginals = { kind = "homogeneous", p = [0.5, 0.5] }

[run]
ts = [3, 4, 5, 6, 7]
s_values = [1.0]
"#,
    );
    let o = run(&["profile", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let gap = header(&csv).iter().position(|h| h == "gap").unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 5);
    let last: f64 = rows.last().unwrap()[gap].parse().unwrap();
    assert!(last <= 0.03, "final gap {last}");
}

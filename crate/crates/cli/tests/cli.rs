use mimo_harq_cli::{parse_spec, run_experiment, write_outputs, Backend, Manifest};
use std::path::Path;
use std::process::{Command, Output};

const SMALL_MC: &str = r#"
name = "small"
kind = "mtd_vs_S"
backends = ["monte_carlo"]

[base_params]
lambda_density = 1e-4
block_length = 2

[sim]
trials = 40
fading_draws_per_realization = 20
seed = 17

[sweep]
variable = "streams"
values = [2, 4]
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mimo-harq"));
    c.env_remove("MIMO_HARQ_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn analytic_rcc_sweep_has_two_rows_per_block_length() {
    let spec = parse_spec("backends = [\"analytic\"]\n", None).unwrap();
    let rows = run_experiment(&spec, false);
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.error.is_none() && r.ci_halfwidth.is_none() && r.seed.is_none()));
    let at_one: Vec<f64> = rows.iter().filter(|r| r.sweep_value == 1.0).map(|r| r.value.unwrap()).collect();
    assert_eq!(at_one.len(), 2);
    assert_eq!(at_one[0], at_one[1]);
}

#[test]
fn csv_is_identical_across_worker_counts_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL_MC);
    let mut csvs = Vec::new();
    for (workers, out) in [("1", "a"), ("3", "b")] {
        let out = dir.path().join(out);
        let o = run(&["--workers", workers, "run", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out.join("small.csv")).unwrap());
    }
    let manifest = dir.path().join("a/small.manifest.json");
    let out = dir.path().join("c");
    let o = run(&["run", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    csvs.push(std::fs::read(out.join("small.csv")).unwrap());
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);

    let text = String::from_utf8(csvs[0].clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,sweep_value,backend,metric,value,ci_halfwidth,seed,wall_time_s,error"
    );
    // 2 sweep values x (delay + censored fraction) x 2 schemes
    assert_eq!(lines.count(), 8);
}

#[test]
fn plot_files_match_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = parse_spec(SMALL_MC, None).unwrap();
    let rows = run_experiment(&spec, false);
    write_outputs(&spec, &rows, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("small.mtd_rr.monte_carlo.dat")).unwrap();
    assert!(text.starts_with("# metric: mtd_rr\n"));
    let points: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    let expect: Vec<Vec<f64>> = rows
        .iter()
        .filter(|r| r.metric == "mtd_rr" && r.backend == Backend::MonteCarlo)
        .map(|r| vec![r.sweep_value, r.value.unwrap(), r.ci_halfwidth.unwrap()])
        .collect();
    assert_eq!(points, expect);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[base_params]\nstreams = 20\n");
    let o = run(&["validate", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("streams"));

    let unknown = write(dir.path(), "unknown.toml", "[sweep]\nvariable = \"alpha\"\nvalues = [1]\n");
    let o = run(&["validate", &unknown]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("recognized: lambda_density"));

    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["validate", missing.to_str().unwrap()]).status.code(), Some(3));

    // every analytic delay diverges when every transmitter is always on
    let failing = write(
        dir.path(),
        "failing.toml",
        "kind = \"mtd_vs_S\"\nbackends = [\"analytic\"]\n[base_params]\nactivity = 1.0\n[sweep]\nvariable = \"streams\"\nvalues = [1]\n",
    );
    let out = dir.path().join("out");
    let o = run(&["run", &failing, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("mtd_vs_S.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| !l.ends_with(',')));

    assert_eq!(run(&["reproduce-figure", "12"]).status.code(), Some(1));
}

#[test]
fn seed_comes_from_config_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.toml", "backends = [\"analytic\"]\n");
    let o = bin().args(["validate", &cfg]).env("MIMO_HARQ_SEED", "99").output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("seed = 99"));
    let cfg = write(dir.path(), "seeded.toml", "[sim]\nseed = 5\n");
    let o = bin().args(["validate", &cfg]).env("MIMO_HARQ_SEED", "99").output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("seed = 5"));
}

#[test]
fn presets_print_as_loadable_configs() {
    let o = run(&["reproduce-figure", "6", "--print-config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let spec = parse_spec(&text, None).unwrap();
    assert_eq!(spec.name, "fig6");
    assert_eq!(spec.sweep.variable, "speed");
    let m: Manifest = Manifest::new(&spec);
    assert_eq!(m.seed, spec.sim.seed);
}

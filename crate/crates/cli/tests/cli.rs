use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netmig_cli::ingest::ingest;
use netmig_cli::RunConfig;
use netmig_core::grid::age_share;
use netmig_core::masi::{oracle_standardized_omr, standardize_omr};
use netmig_core::Masi;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synth12")
}

fn netmig(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netmig"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Run and return the output directory printed on stdout.
fn netmig_ok(out: &Path, args: &[&str]) -> PathBuf {
    let o = netmig(out, args);
    assert!(
        o.status.success(),
        "netmig {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    PathBuf::from(String::from_utf8(o.stdout).unwrap().trim())
}

/// The bundled fixture with a small sampler and ensemble, written next to
/// the data so relative paths still resolve.
fn small_config(dir: &Path, data: &Path, extra: &str) -> PathBuf {
    let mut text = std::fs::read_to_string(data.join("config.toml")).unwrap();
    text = text
        .lines()
        .take_while(|l| !l.starts_with("[forecast]"))
        .map(|l| match l.split_once(" = \"") {
            Some((k, f)) => format!("{k} = {:?}\n", data.join(f.trim_end_matches('"'))),
            None => format!("{l}\n"),
        })
        .collect();
    text.push_str(
        "\n[mcmc]\nchains = 2\nburn_in = 200\niterations = 100\n\n\
         [forecast]\nhorizon = 3\ntrajectories = 40\n\n\
         [backtest]\nmax_horizon = 2\ntrajectories = 40\n",
    );
    text.push_str(extra);
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn bundled_fixture_loads() {
    let config = RunConfig::load(&fixture().join("config.toml"))
        .and_then(|c| c.finalize(None, None))
        .unwrap();
    let ingested = ingest(&config.data, &[], config.model.min_population).unwrap();
    assert_eq!(ingested.world.n_countries(), 12);
    assert!(ingested.world.imr.is_some());
    assert!(ingested.warnings.is_empty(), "{:?}", ingested.warnings);
}

#[test]
fn identical_runs_share_a_directory_and_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), &fixture(), "");
    let cfg = cfg.to_str().unwrap();
    let a = netmig_ok(&tmp.path().join("a"), &["--config", cfg, "forecast"]);
    let b = netmig_ok(&tmp.path().join("b"), &["--config", cfg, "--jobs", "3", "forecast"]);
    assert_eq!(a.file_name(), b.file_name());
    let ma: serde_json::Value = serde_json::from_str(&read(&a.join("manifest.json"))).unwrap();
    let mb: serde_json::Value = serde_json::from_str(&read(&b.join("manifest.json"))).unwrap();
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    let c = netmig_ok(&tmp.path().join("a"), &["--config", cfg, "--seed", "2", "forecast"]);
    assert_ne!(a, c);
}

#[test]
fn zero_migration_world_has_zero_net_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = netmig_ok(
        tmp.path(),
        &["--seed", "4", "synth", "--countries", "5", "--age-groups", "6", "--no-migration"],
    );
    let text = read(&dir.join("nmr.csv"));
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let value: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(value, 0.0, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 5 * 14);
}

#[test]
fn flat_identical_world_forecasts_agree_across_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = netmig_ok(
        tmp.path(),
        &["--seed", "3", "synth", "--countries", "8", "--flat-schedule", "--identical-pyramids"],
    );
    let cfg = small_config(tmp.path(), &data, "");
    let cfg = cfg.to_str().unwrap();
    let summary = |mode| {
        let dir = netmig_ok(tmp.path(), &["--config", cfg, "--mode", mode, "forecast"]);
        read(&dir.join("summary.csv"))
    };
    let (s, a) = (summary("standardized"), summary("agnostic"));
    assert_eq!(s.lines().count(), a.lines().count());
    for (ls, la) in s.lines().zip(a.lines()).skip(1) {
        let (fs, fa): (Vec<&str>, Vec<&str>) = (ls.split(',').collect(), la.split(',').collect());
        assert_eq!(fs[..3], fa[..3]);
        for (x, y) in fs[3..].iter().zip(&fa[3..]) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0), "{ls} vs {la}");
        }
    }
}

#[test]
fn backtest_table_has_one_row_per_method_and_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), &fixture(), "");
    let dir = netmig_ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "backtest"]);
    let text = read(&dir.join("backtest.csv"));
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "horizon,method,n_cells,mae,lmae,mase,coverage95,halfwidth95,halfwidth80"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 3);
    for r in &rows {
        assert_eq!(r.len(), 9);
        let mae: f64 = r[3].parse().unwrap();
        assert!(mae >= 0.0);
        // Persistence has no intervals.
        assert_eq!(r[1] == "persistence", r[6].is_empty());
    }
    assert!(dir.join("backtest_by_country.csv").exists());
    assert!(dir.join("backtest_cells.csv").exists());
}

#[test]
fn report_reproduces_the_forecast_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), &fixture(), "");
    let forecast = netmig_ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "forecast"]);
    let report = netmig_ok(tmp.path(), &["report", "--from", forecast.to_str().unwrap()]);
    assert_eq!(read(&report.join("report.csv")), read(&forecast.join("summary.csv")));
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), &fixture(), "");
    let dir = netmig_ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "fit"]);
    let manifest = dir.join("manifest.json");
    netmig_ok(&tmp.path().join("again"), &["replay", manifest.to_str().unwrap()]);

    let mut m: serde_json::Value = serde_json::from_str(&read(&manifest)).unwrap();
    m["outputs"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    let forged = tmp.path().join("forged.json");
    std::fs::write(&forged, serde_json::to_vec(&m).unwrap()).unwrap();
    let o = netmig(&tmp.path().join("third"), &["replay", forged.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replay differs"));
}

#[test]
fn ingested_age_flows_satisfy_the_standardization_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = netmig_ok(tmp.path(), &["--seed", "5", "synth", "--countries", "6", "--age-flows"]);
    let config = RunConfig::load(&dir.join("config.toml"))
        .and_then(|c| c.finalize(None, None))
        .unwrap();
    let world = ingest(&config.data, &[], 1e5).unwrap().world;
    let at_risk = world.at_risk().unwrap();
    let flows = world.age_flows.as_ref().unwrap();
    let reference = at_risk.times().len() - 1;
    let masi = Masi::compute(&at_risk, &world.schedule, reference).unwrap();
    let n_a = at_risk.ages().len();
    let mut checked = 0;
    for i in 0..world.n_countries() {
        for ft in 0..flows.outflow.times().len() {
            let t = at_risk.times().index_of(flows.outflow.times().year(ft)).unwrap();
            let cells = flows.outflow.cells(i, ft);
            let age_omr: Vec<f64> = (0..n_a)
                .map(|a| 1000.0 * (cells[2 * a] + cells[2 * a + 1]) / (at_risk.age_total(i, t, a) * 5.0))
                .collect();
            let pi = age_share(&at_risk, i, t).unwrap();
            let omr: f64 = age_omr.iter().zip(&pi).map(|(r, p)| r * p).sum();
            if omr <= 0.0 {
                continue;
            }
            let got = standardize_omr(omr, masi.country(i, t), masi.country_reference(i)).unwrap();
            let want = oracle_standardized_omr(&age_omr, &pi, &age_share(&at_risk, i, reference).unwrap()).unwrap();
            assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");

    // Validation: missing config, synth without a seed, bad CSV.
    assert_eq!(netmig(&out, &["forecast"]).status.code(), Some(2));
    assert_eq!(netmig(&out, &["synth"]).status.code(), Some(2));

    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    for entry in std::fs::read_dir(fixture()).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, data.join(p.file_name().unwrap())).unwrap();
    }
    let nmr = read(&data.join("nmr.csv"));
    let mut lines: Vec<String> = nmr.lines().map(String::from).collect();
    lines[3] = lines[3].replacen(",per1000_annual", "x,per1000_annual", 1);
    std::fs::write(data.join("nmr.csv"), lines.join("\n") + "\n").unwrap();
    let cfg = data.join("config.toml");
    let o = netmig(&out, &["--config", cfg.to_str().unwrap(), "decompose"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("nmr.csv") && msg.contains(":4"), "{msg}");

    // I/O: the output root is a regular file.
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let o = netmig(&blocker, &["--seed", "1", "synth", "--countries", "3", "--age-groups", "4"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

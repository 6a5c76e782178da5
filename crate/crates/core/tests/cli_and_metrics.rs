mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::small_config;
use fedsched::cli;
use fedsched::config::write_config_str;
use fedsched::schedule::Mode;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedsched"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn output_schema_is_fixed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(Mode::Vanilla, vec![0, 1, 2], 3);
    cli::run(&cfg, tmp.path(), |_| {}).unwrap();
    let rounds = String::from_utf8(read(tmp.path(), "rounds.csv")).unwrap();
    let clients = String::from_utf8(read(tmp.path(), "clients.csv")).unwrap();
    let mut lines = rounds.lines();
    assert_eq!(
        lines.next(),
        Some("round,mean_loss,eval_acc,flops,params_up,params_down")
    );
    assert_eq!(lines.count(), 3);
    assert!(clients.starts_with("client_id,n_train,n_test,accuracy\n"));
    assert_eq!(clients.lines().count(), 1 + cfg.n_clients);

    let summary: serde_json::Value =
        serde_json::from_slice(&read(tmp.path(), "summary.json")).unwrap();
    let listed: Vec<f64> = summary["accuracies_ascending"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let mut from_csv: Vec<f64> = clients
        .lines()
        .skip(1)
        .filter_map(|l| {
            l.split(',')
                .nth(3)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().unwrap())
        })
        .collect();
    from_csv.sort_by(f64::total_cmp);
    assert_eq!(listed, from_csv);
    assert!(listed.iter().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = small_config(Mode::Anti, vec![0, 1, 2], 4);
    cli::run(&cfg, a.path(), |_| {}).unwrap();
    cfg.parallel = true;
    cli::run(&cfg, b.path(), |_| {}).unwrap();
    for name in ["rounds.csv", "clients.csv", "summary.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn cost_subcommand_prints_table4_totals() {
    let out = bin().arg("cost").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for total in [
        "873039000000",
        "865344000000",
        "314912000000",
        "838880000000",
    ] {
        assert_eq!(text.matches(total).count(), 2, "{total} in table and csv");
    }
    assert!(text.contains("method,flops,flops_billions,rounds,params_up,params_down"));
    assert!(text.contains("Vanilla,314912000000,314.912,300,"));
}

#[test]
fn run_subcommand_honours_env_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(
        &config,
        write_config_str(&small_config(Mode::FedBabu, vec![0, 1, 2], 2)).unwrap(),
    )
    .unwrap();
    let out_dir = tmp.path().join("metrics");
    let out = bin()
        .args(["run", config.to_str().unwrap()])
        .env(cli::OUT_DIR_ENV, &out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["rounds.csv", "clients.csv", "summary.json"] {
        assert!(out_dir.join(name).is_file(), "{name}");
    }
}

#[test]
fn invalid_config_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "dataset = \"synthetic\"\njoin_ratio = 0\n").unwrap();
    let out_dir = tmp.path().join("never");
    let out = bin()
        .args([
            "run",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("join_ratio") && err.contains("line 2"),
        "{err}"
    );
    assert!(!out_dir.exists());

    let missing = tmp.path().join("missing.toml");
    let out = bin()
        .args(["run", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn missing_dataset_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("mnist.toml");
    fs::write(&config, "mnist_images = \"/nonexistent/images\"\n").unwrap();
    let out_dir = tmp.path().join("never");
    let out = bin()
        .args([
            "run",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out_dir.exists());
}

#[test]
fn partition_subcommand_emits_histogram() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("p.toml");
    fs::write(
        &config,
        "n_clients = 10\ndataset = \"synthetic\"\nsynthetic_per_class = 30\n",
    )
    .unwrap();
    let out = bin()
        .args(["partition", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<usize>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert_eq!(r.len(), 13);
        assert_eq!(r[1] + r[2], r[3..].iter().sum::<usize>());
    }
    assert_eq!(rows.iter().map(|r| r[1] + r[2]).sum::<usize>(), 300);
}

#[test]
fn gradcheck_subcommand_reports_pass() {
    let out = bin()
        .args(["gradcheck", "--seed", "3", "--samples", "40"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(
        text.contains("max relative error") && text.ends_with("PASS\n"),
        "{text}"
    );
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = bin().arg("train").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let desk = fedsched::config::parse_config(dir.join("desk_mnist.toml")).unwrap();
    assert_eq!(
        (desk.n_clients, desk.total_rounds, desk.clients_per_round()),
        (20, 60, 2)
    );
    assert_eq!(desk.plan.unfreeze_rounds, [0, 20, 40]);
    assert_eq!(desk.max_examples, Some(8000));
    let smoke = fedsched::config::parse_config(dir.join("synthetic_smoke.toml")).unwrap();
    assert_eq!(smoke.plan.mode, Mode::Anti);
}

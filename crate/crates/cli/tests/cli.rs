use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use iagflow_cli::{ExperimentKind, RunConfig};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_iagflow"));
    cmd.env_remove("IAGFLOW_OUT");
    cmd
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(sub: &str, config: &Path, out: &Path, workers: usize) -> i32 {
    bin()
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

const SMALL_RATE: &str = r#"
seed = 9

[rate]
levels = [16, 32, 64]
reference_steps = 512
samples = 40
slope_band = [-1.5, -0.35]
"#;

#[test]
fn checked_in_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let kind = match name.as_str() {
            n if n.starts_with("ag-") => ExperimentKind::AgVerify,
            n if n.starts_with("iag-weak") => ExperimentKind::IagWeak,
            "iag-pathwise" => ExperimentKind::IagPathwise,
            "iag-duality" => ExperimentKind::IagDuality,
            "vdp-rate" => ExperimentKind::VdpRate,
            "mgf-check" => ExperimentKind::MgfCheck,
            "expmoment-check" => ExperimentKind::ExpmomentCheck,
            "flowmoment-check" => ExperimentKind::FlowmomentCheck,
            other => panic!("unexpected config {other}"),
        };
        RunConfig::load(&path).unwrap().validate(kind).unwrap();
        count += 1;
    }
    assert_eq!(count, 10);
}

#[test]
fn passing_run_writes_both_files() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_RATE);
    let out = tmp.path().join("out");
    assert_eq!(run("vdp-rate", &config, &out, 1), 0);
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "N,rms,se,samples,diverged");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("16,"));
    assert!(!csv.contains('\r'));
    let fields: Vec<&str> = lines[1].split(',').collect();
    // 17 significant digits: one before the point, sixteen after.
    let mantissa = fields[1].split('e').next().unwrap();
    assert_eq!(mantissa.split('.').nth(1).unwrap().len(), 16);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["experiment"], "vdp-rate");
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["run"]["workers"], 1);
    assert_eq!(report["pass"], true);
    assert_eq!(report["exit_code"], 0);
    assert!(report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["criterion"].is_string()));
    assert!(report["results"]["levels"][0]["se"].is_number());
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &SMALL_RATE.replace("[-1.5, -0.35]", "[5.0, 6.0]"));
    let out = tmp.path().join("out");
    assert_eq!(run("vdp-rate", &config, &out, 1), 1);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        (
            "vdp-rate",
            SMALL_RATE.replace("reference_steps = 512", "reference_steps = 500"),
        ),
        (
            "vdp-rate",
            SMALL_RATE.replace("reference_steps = 512", "reference_steps = 256"),
        ),
        ("vdp-rate", SMALL_RATE.replace("seed = 9", "")),
        (
            "vdp-rate",
            SMALL_RATE.replace("samples = 40", "samples = 40\nsurprise = 1"),
        ),
        ("vdp-rate", "seed = 1\n".to_string()),
        (
            "mgf-check",
            "seed = 1\n[mgf]\ncases = 2\nsamples = 10\nmax_exponent = 1.0\n".to_string(),
        ),
        (
            "expmoment-check",
            "seed = 1\n[vdp]\nbeta = 3.0\n[expmoment]\nsteps = 16\nsamples = 10\n".to_string(),
        ),
        (
            "iag-weak",
            "seed = 1\n[iag]\nmodel = \"constant\"\nsamples = 200\nfine_steps = 16\nouter_steps = 5\n".to_string(),
        ),
    ];
    for (sub, text) in cases {
        let config = write_config(tmp.path(), &text);
        assert_eq!(run(sub, &config, &out, 1), 2, "{sub}: {text}");
    }
    let missing = tmp.path().join("missing.toml");
    assert_eq!(run("vdp-rate", &missing, &out, 1), 2);
    let config = write_config(tmp.path(), SMALL_RATE);
    assert_eq!(run("vdp-rate", &config, &out, 0), 2);
}

#[test]
fn excessive_divergence_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "seed = 1\n[vdp]\nxi = [100.0, 100.0]\n[flowmoment]\np = 2.0\nsteps = 64\nsamples = 10\n";
    let config = write_config(tmp.path(), text);
    let out = tmp.path().join("out");
    assert_eq!(run("flowmoment-check", &config, &out, 1), 3);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["exit_code"], 3);
    assert!(report["diverged"].as_u64().unwrap() > 0);
}

#[test]
fn output_is_identical_across_runs_and_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), SMALL_RATE);
    let mut tables = Vec::new();
    for (i, workers) in [1, 1, 3].into_iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        assert_eq!(run("vdp-rate", &config, &out, workers), 0);
        tables.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0], tables[2]);
}

#[test]
fn environment_overrides_configured_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let configured = tmp.path().join("configured");
    let from_env = tmp.path().join("from_env");
    let text = format!("output_dir = {:?}\n{SMALL_RATE}", configured.to_str().unwrap());
    let config = write_config(tmp.path(), &text);

    let status = bin()
        .args(["vdp-rate", "--config"])
        .arg(&config)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    assert!(configured.join("results.csv").exists());

    let status = bin()
        .env("IAGFLOW_OUT", &from_env)
        .args(["vdp-rate", "--config"])
        .arg(&config)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    assert!(from_env.join("report.json").exists());
}

use std::path::Path;
use std::process::Command;

use unilab::app::{checkpoint_name, execute_run, sha256_file, FINAL_STATE};
use unilab::checkpoint::checkpoint_read;
use unilab::output::{fmt12, timeseries_csv};
use unilab::parse_config_str;

const ISOLATION: &str = "protocol = isolation\nn_env = 2\nt_final = 1.0\nrecord_stride = 5\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unilab"))
}

fn write_cfg(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn validate_prints_dimension_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "");
    let out = bin().args(["validate"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("dim = 2 × 2^8 × 128 = 65536"), "{text}");
    assert!(text.contains("MiB"));
}

#[test]
fn exit_codes_from_binary() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_cfg(dir.path(), "b_well = -1\n");
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a, b > 0"));
    assert_eq!(bin().arg("nonsense").output().unwrap().status.code(), Some(1));
    let breakdown = write_cfg(dir.path(), "protocol = isolation\nn_env = 1\nkrylov_dim = 2\ndt = 5\nt_final = 5\n");
    let out = bin().arg("run").arg(&breakdown).arg("--output-dir").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_emits_files_listed_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), ISOLATION);
    let out_dir = dir.path().join("out");
    let out = bin().arg("run").arg(&cfg).arg("--output-dir").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    let names: Vec<&str> = files.iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["timeseries.csv", "distribution.csv", "timeseries.svg", "distribution.svg"]);
    for f in files {
        let path = out_dir.join(f["name"].as_str().unwrap());
        assert_eq!(sha256_file(&path).unwrap(), f["sha256"].as_str().unwrap());
    }
    assert_eq!(manifest["config"]["protocol"], "isolation");
    assert!(manifest["code_version"].as_str().unwrap().contains("unilab-core"));
}

#[test]
fn no_svg_flag_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), ISOLATION);
    let out_dir = dir.path().join("out");
    let status = bin()
        .arg("run")
        .arg(&cfg)
        .args(["--no-svg", "--seed", "42", "--output-dir"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(!out_dir.join("timeseries.svg").exists());
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 42"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = "protocol = superposition\nn_env = 3\nt_final = 1.0\nrecord_stride = 10\n";
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let mut cfg = parse_config_str(text).unwrap();
        cfg.output_dir = dir.path().join(tag);
        execute_run(&cfg, None).unwrap();
        outputs.push(cfg.output_dir);
    }
    for name in ["timeseries.csv", "distribution.csv", "timeseries.svg", "distribution.svg"] {
        let a = std::fs::read(outputs[0].join(name)).unwrap();
        let b = std::fs::read(outputs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn csv_round_trip_at_twelve_digits() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config_str(ISOLATION).unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    cfg.emit_svg = false;
    let out = execute_run(&cfg, None).unwrap();
    let text = std::fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert_eq!(text, timeseries_csv(&out.record));
    assert!(!text.contains('\r'));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), out.record.len());
    for (row, i) in rows.iter().zip(0..) {
        let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        let expect = [
            out.record.times[i],
            out.record.qubit_purity_series[i],
            out.record.observer_purity_series[i],
            out.record.mean_x_series[i],
        ];
        for (v, e) in vals.iter().zip(expect) {
            assert_eq!(*v, fmt12(e).parse::<f64>().unwrap());
            assert!((v - e).abs() <= 1e-11 * e.abs().max(1e-300));
        }
    }
    let dist = std::fs::read_to_string(dir.path().join("distribution.csv")).unwrap();
    assert!(dist.starts_with("x,probability\n"));
    assert_eq!(dist.lines().count(), 1 + 128);
}

#[test]
fn single_snapshot_record_gives_two_line_csv() {
    let mut cfg = parse_config_str("protocol = isolation\nn_env = 1\nt_final = 0\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let out = execute_run(&cfg, None).unwrap();
    assert_eq!(timeseries_csv(&out.record).lines().count(), 2);
}

#[test]
fn resume_matches_uninterrupted_run_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let text = "protocol = full_model\nn_env = 3\nt_final = 1.0\nrecord_stride = 10\ncheckpoint_interval = 4\nemit_svg = false\n";
    let mut full = parse_config_str(text).unwrap();
    full.output_dir = dir.path().join("full");
    let uninterrupted = execute_run(&full, None).unwrap();
    let ckpt = full.output_dir.join(checkpoint_name(4));
    assert!(ckpt.exists());

    let mut resumed_cfg = full.clone();
    resumed_cfg.output_dir = dir.path().join("resumed");
    let resumed = execute_run(&resumed_cfg, Some(&ckpt)).unwrap();

    let a = std::fs::read(full.output_dir.join(FINAL_STATE)).unwrap();
    let b = std::fs::read(resumed_cfg.output_dir.join(FINAL_STATE)).unwrap();
    assert_eq!(a, b);
    for (x, y) in uninterrupted.final_state.amplitudes().iter().zip(resumed.final_state.amplitudes()) {
        assert_eq!(x.re.to_bits(), y.re.to_bits());
        assert_eq!(x.im.to_bits(), y.im.to_bits());
    }
    // The resumed series is the tail of the uninterrupted one.
    let offset = uninterrupted.record.len() - resumed.record.len();
    assert_eq!(&uninterrupted.record.mean_x_series[offset..], &resumed.record.mean_x_series[..]);

    let (state, meta) = checkpoint_read(&ckpt, Some(&full.protocol.layout().unwrap())).unwrap();
    assert_eq!(meta.snapshot_index, 4);
    assert!((meta.time - 0.4).abs() < 1e-12);
    assert!((state.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn resume_rejects_corrupt_or_mismatched_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let text = "protocol = isolation\nn_env = 2\nt_final = 1.0\nrecord_stride = 10\ncheckpoint_interval = 3\nemit_svg = false\n";
    let cfg_path = write_cfg(dir.path(), text);
    let out_dir = dir.path().join("out");
    assert!(bin().arg("run").arg(&cfg_path).arg("--output-dir").arg(&out_dir).status().unwrap().success());
    let ckpt = out_dir.join(checkpoint_name(3));
    let bytes = std::fs::read(&ckpt).unwrap();

    let truncated = dir.path().join("truncated.bin");
    std::fs::write(&truncated, &bytes[..bytes.len() - 7]).unwrap();
    let out = bin().arg("resume").arg(&truncated).arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt checkpoint"));

    let other = write_cfg(dir.path(), "protocol = isolation\nn_env = 3\nt_final = 1.0\nrecord_stride = 10\n");
    let out = bin().arg("resume").arg(&ckpt).arg(&other).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("do not match"));
}

#[test]
fn svg_paths_have_one_vertex_per_snapshot() {
    let mut cfg = parse_config_str(ISOLATION).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    let out = execute_run(&cfg, None).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("timeseries.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let paths: Vec<&str> = svg.split("<path d=\"").skip(1).collect();
    assert_eq!(paths.len(), 3);
    for p in paths {
        let d = &p[..p.find('"').unwrap()];
        assert_eq!(d.matches(['M', 'L']).count(), out.record.len());
    }
}

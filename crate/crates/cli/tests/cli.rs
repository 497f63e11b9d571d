use std::fs;
use std::path::Path;
use std::process::Command;

use linewidth_cli::{parse_entries, run, validate, RunConfig, Subcommand};

fn config(sub: Subcommand, text: &str) -> RunConfig {
    RunConfig::from_sources(sub, &parse_entries(text).unwrap(), &[]).unwrap()
}

#[test]
fn negative_time_names_t() {
    let c = config(Subcommand::Spectrum, "master_seed = 1\nT = -3.4\n");
    let v = validate(&c);
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].field, "T");
}

#[test]
fn odd_case_ii_total_cannot_split_evenly() {
    let c = config(Subcommand::Spectrum, "master_seed = 1\ncase = case2\nn_atoms = 21\nnu = 0\n");
    let v = validate(&c);
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].field, "nu");
}

#[test]
fn published_parameter_sets_are_valid() {
    let case_ii = "case = case2\nmu_sp = 2\nmu_s_prime_p_prime = 0.5\nn_atoms = 20\nnu = 0\nT = 0.36\nn_configs = 1000\nmaster_seed = 7\n";
    assert!(validate(&config(Subcommand::Spectrum, case_ii)).is_empty());
    let case_i = "mu_sp = 1.02\nmu_sp_prime = 0.98\nn_atoms = 10\nT = 3.4\nsigma = 500\nn_configs = 1000\nmaster_seed = 7\n";
    assert!(validate(&config(Subcommand::Convolve, case_i)).is_empty());
    let toy = "n_atoms = 256\nn_configs = 1000\nmaster_seed = 7\n";
    assert!(validate(&config(Subcommand::ToyDecay, toy)).is_empty());
}

#[test]
fn all_violations_are_reported() {
    let c = config(Subcommand::Motion, "T = 0\nn_configs = 0\nspeed = -1\ntol = 2\n");
    let fields: Vec<String> = validate(&c).into_iter().map(|v| v.field).collect();
    for f in ["master_seed", "n_configs", "T", "tol", "speed"] {
        assert!(fields.iter().any(|x| x == f), "{f} missing from {fields:?}");
    }
}

#[test]
fn ratio_scan_checks_every_ratio() {
    let parsed = RunConfig::from_sources(
        Subcommand::WidthVsNu,
        &parse_entries("master_seed = 1\nn_atoms = 14\nnu_values = 0, 0.1, 0.5\n").unwrap(),
        &[],
    )
    .unwrap();
    let v = validate(&parsed);
    // 0.1 needs 7.7 s atoms and 0.5 needs 10.5
    assert_eq!(v.iter().filter(|x| x.field == "nu_values").count(), 2, "{v:?}");
}

#[test]
fn parse_errors_are_collected() {
    let err = RunConfig::from_sources(
        Subcommand::Spectrum,
        &parse_entries("T = fast\nhist_bins = 3\nmaster_seed = 1\nmaster_seed = 2\n").unwrap(),
        &[],
    )
    .unwrap_err();
    let fields: Vec<&str> = err.iter().map(|v| v.field.as_str()).collect();
    assert_eq!(fields, ["T", "hist_bins", "master_seed"]);
    assert!(parse_entries("just words\n").is_err());
}

#[test]
fn overrides_win_and_echo_round_trips() {
    let file = parse_entries("master_seed = 1\nn_atoms = 6\nT = 2\n").unwrap();
    let overrides = vec![("n_atoms".to_string(), "8".to_string())];
    let c = RunConfig::from_sources(Subcommand::Spectrum, &file, &overrides).unwrap();
    assert_eq!(c.n_atoms(), 8);
    assert_eq!(c.t_final(), 2.0);
    let again = config(Subcommand::Spectrum, &c.to_text());
    assert_eq!(again.to_text(), c.to_text());
    assert_eq!(again.spectrum_request(8), c.spectrum_request(8));
}

fn read_artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn run_twice(sub: Subcommand, text: &str) -> Vec<(String, Vec<u8>)> {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let outputs: Vec<_> = dirs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut c = config(sub, text);
            c.output_dir = d.path().to_path_buf();
            // worker count must not change the data
            c.worker_count = i + 1;
            run(&c).unwrap();
            read_artifacts(d.path())
        })
        .collect();
    let strip = |files: &[(String, Vec<u8>)]| -> Vec<(String, Vec<u8>)> {
        files
            .iter()
            .map(|(n, b)| {
                let text = String::from_utf8_lossy(b);
                let kept: String = text.lines().filter(|l| !l.contains("worker_count") && !l.contains("output_dir")).collect();
                (n.clone(), kept.into_bytes())
            })
            .collect()
    };
    assert_eq!(strip(&outputs[0]), strip(&outputs[1]));
    outputs.into_iter().next().unwrap()
}

#[test]
fn spectrum_artifacts_are_reproducible() {
    let text = "master_seed = 11\nn_atoms = 4\nn_configs = 3\ngrid_min = -30\ngrid_max = 30\ngrid_points = 31\n";
    let files = run_twice(Subcommand::Spectrum, text);
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["config.txt", "plot.py", "spectrum.csv", "summary.json"]);
    let csv = String::from_utf8(files[2].1.clone()).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("# linewidth"));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "detuning,yield,std_error");
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 32);
}

#[test]
fn toy_and_pair_artifacts_are_reproducible() {
    run_twice(Subcommand::ToyDecay, "master_seed = 3\nn_atoms = 16\nn_configs = 4\nt_points = 11\nt_max = 1\n");
    run_twice(Subcommand::ToyBand, "master_seed = 3\nn_atoms = 16\nn_configs = 4\n");
    let files = run_twice(Subcommand::Pairdist, "master_seed = 3\nn_atoms = 32\nn_configs = 4\ndelta_points = 20\n");
    let csv = String::from_utf8(files.iter().find(|(n, _)| n == "pairdist.csv").unwrap().1.clone()).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "delta,density_iso,density_dip,cumulative_iso,cumulative_dip,empirical_cdf");
}

#[test]
fn binary_rejects_bad_config_with_field_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "# bad\nT = -1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_linewidth"))
        .args(["spectrum", "--config"])
        .arg(&path)
        .args(["--seed", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("T: must be positive"), "{stderr}");
}

#[test]
fn binary_check_prints_resolved_config() {
    let out = Command::new(env!("CARGO_BIN_EXE_linewidth"))
        .args(["width-vs-nu", "--check", "--seed", "9", "--set", "n_atoms=20"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("case = case2"));
    assert!(text.contains("T = 0.36"));
    assert!(text.contains("master_seed = 9"));
}

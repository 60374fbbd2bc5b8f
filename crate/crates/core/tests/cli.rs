mod common;

use std::fs;
use std::path::Path;

use common::{run, write_c0, write_sample};
use rfpca::cli::parse_csv;
use rfpca::{FunctionalSample, Grid};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_documents_exit_codes() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for code in ["0  success", "2  usage", "3  input", "4  malformed CSV", "5  invalid configuration", "6  numerical", "7  output"] {
        assert!(text.contains(code), "missing '{code}' in help");
    }
    let out = run(&["fit", "--help"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("Exit codes"));
}

#[test]
fn fit_emits_directions_and_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c0.csv");
    write_c0(&input, 100, 4);
    let out_dir = dir.path().join("fit");
    let out = run(&[
        "fit", "--input", s(&input), "--scale", "mscale", "--mode", "pen-scale", "--rho-a", "1.5",
        "--rho-alpha", "3", "--q", "3", "--output", s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let dirs = parse_csv(fs::File::open(out_dir.join("directions.csv")).unwrap()).unwrap();
    assert_eq!(dirs.len(), 3);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("fit.json")).unwrap()).unwrap();
    assert_eq!(json["lambda"].as_array().unwrap().len(), 3);
    assert_eq!(json["mode"], "pen-scale");
    assert_eq!(json["scale"], "mscale");
    assert!((json["param"].as_f64().unwrap() - 1.5e-6).abs() < 1e-18);
}

#[test]
fn directions_file_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c0.csv");
    let data = write_c0(&input, 40, 2);
    let out_dir = dir.path().join("fit");
    let out = run(&["fit", "--input", s(&input), "--scale", "sd", "--q", "2", "--output", s(&out_dir)]);
    assert!(out.status.success());

    let cfg = rfpca::PPConfig::new(
        rfpca::ScaleSpec::sd(),
        rfpca::Mode::Raw,
        2,
        rfpca::Centering::Mean,
    );
    // The binary reads the file, so fit the re-read sample in-process.
    let reread = parse_csv(fs::File::open(&input).unwrap()).unwrap();
    for (a, b) in reread.curves().iter().zip(data.curves()) {
        assert_eq!(a.values(), b.values());
    }
    let pc = rfpca::fit(&reread, &cfg).unwrap();
    let dirs = parse_csv(fs::File::open(out_dir.join("directions.csv")).unwrap()).unwrap();
    assert_eq!(dirs.len(), 2);
    for (a, b) in dirs.curves().iter().zip(&pc.directions) {
        assert_eq!(a.values(), b.values());
    }
    let (g, h) = (dirs.grid(), pc.grid);
    assert_eq!(g.len(), h.len());
    assert!((g.a() - h.a()).abs() < 1e-12 && (g.b() - h.b()).abs() < 1e-12);
}

#[test]
fn malformed_corpus_has_distinct_diagnostics() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/malformed");
    let cases = [
        ("ragged.csv", "row 2: expected 5 cells, found 4"),
        ("non_numeric.csv", "row 2, column 3: 'abc'"),
        ("uneven_grid.csv", "not equispaced"),
        ("empty.csv", "empty file"),
        ("text_header.csv", "header, column 1"),
        ("no_rows.csv", "no data rows"),
        ("short_header.csv", "at least 3 grid points"),
        ("infinite.csv", "row 1, column 2"),
        ("bad_quote.csv", "row 1"),
    ];
    let out_dir = tempfile::tempdir().unwrap();
    for (file, needle) in cases {
        let out = run(&["fit", "--input", s(&corpus.join(file)), "--output", s(out_dir.path())]);
        assert_eq!(out.status.code(), Some(4), "{file}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains(needle), "{file}: {err}");
    }
}

#[test]
fn error_paths_map_to_documented_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c0.csv");
    write_c0(&input, 30, 1);
    let out = s(dir.path());

    assert_eq!(run(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["fit", "--scale", "huber"]).status.code(), Some(2));
    assert_eq!(run(&["fit", "--input", "/definitely/not/here.csv"]).status.code(), Some(3));

    let bad_toml = dir.path().join("bad.toml");
    fs::write(&bad_toml, "scale = 3\n").unwrap();
    assert_eq!(run(&["fit", "--config", s(&bad_toml), "--input", s(&input)]).status.code(), Some(5));
    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "colour = \"red\"\n").unwrap();
    assert_eq!(run(&["fit", "--config", s(&unknown)]).status.code(), Some(5));
    let other = dir.path().join("other.toml");
    fs::write(&other, "command = \"cv\"\n").unwrap();
    assert_eq!(run(&["fit", "--config", s(&other), "--input", s(&input)]).status.code(), Some(5));
    assert_eq!(run(&["fit", "--input", s(&input), "--output", out, "--q", "40"]).status.code(), Some(5));
    assert_eq!(run(&["cv", "--input", s(&input), "--output", out]).status.code(), Some(5));
    assert_eq!(run(&["fit", "--input", s(&input), "--output", out, "--threads", "0"]).status.code(), Some(5));

    // Identical curves leave nothing to fit after centering.
    let flat = dir.path().join("flat.csv");
    let g = Grid::new(0.0, 1.0, 5).unwrap();
    let rows = vec![vec![1.0, 2.0, 3.0, 2.0, 1.0]; 6];
    write_sample(&flat, &FunctionalSample::from_rows(g, rows).unwrap());
    assert_eq!(run(&["fit", "--input", s(&flat), "--output", out]).status.code(), Some(6));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let target = blocker.join("sub");
    assert_eq!(run(&["fit", "--input", s(&input), "--output", s(&target)]).status.code(), Some(7));
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c0.csv");
    write_c0(&input, 50, 8);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let flags = ["--input", s(&input), "--scale", "mad", "--mode", "pen-norm", "--tau-a", "0.5", "--q", "2"];

    let mut args = vec!["fit"];
    args.extend(flags);
    args.extend(["--output", s(&a)]);
    assert!(run(&args).status.success());

    let mut dump = vec!["fit", "--dump-config"];
    dump.extend(flags);
    dump.extend(["--output", s(&b)]);
    let out = run(&dump);
    assert!(out.status.success());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, &out.stdout).unwrap();
    assert!(run(&["fit", "--config", s(&cfg)]).status.success());

    for f in ["directions.csv", "fit.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c0.csv");
    write_c0(&input, 30, 3);
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, format!("input = {:?}\nq = 1\nscale = \"sd\"\n", s(&input))).unwrap();
    let out_dir = dir.path().join("o");
    assert!(run(&["fit", "--config", s(&cfg), "--q", "2", "--output", s(&out_dir)]).status.success());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("fit.json")).unwrap()).unwrap();
    assert_eq!(json["q"], 2);
    assert_eq!(json["scale"], "sd");
    assert_eq!(json["centering"], "mean");
}

#[test]
fn cv_reports_selection_table() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c0.csv");
    write_c0(&input, 40, 5);
    let out_dir = dir.path().join("cv");
    let out = run(&[
        "cv", "--input", s(&input), "--mode", "pen-scale", "--kfold", "4", "--ell", "1",
        "--grid-a", "0.05,0.1,0.25,0.5,0.75,1,1.5,2", "--grid-alpha", "3", "--output", s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("selected = "));
    let table = fs::read_to_string(out_dir.join("cv.csv")).unwrap();
    assert_eq!(table.lines().count(), 9);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("cv.json")).unwrap()).unwrap();
    assert_eq!(json["scheme"], "4-fold");
    assert_eq!(json["criterion_scale"], "mscale");
    assert_eq!(json["centering"], "smedian");
    let selected = json["selected"].as_f64().unwrap();
    assert!(json["table"].as_array().unwrap().iter().any(|r| r["param"].as_f64() == Some(selected)));
}

#[test]
fn simulate_and_scale_check_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = run(&["simulate", "--model", "C2", "--nr", "3", "--n", "30", "--seed", "7", "--output", s(&sim)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(sim.join("summary.csv")).unwrap();
    assert!(csv.starts_with("model,estimator,scale,mode,param,j,mean_Dj,NR,failures"));
    // Three scales, two penalized modes, three components.
    assert_eq!(csv.lines().count(), 1 + 18);

    let sc = dir.path().join("sc");
    let out = run(&["scale-check", "--n", "500", "--seed", "2", "--output", s(&sc)]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(sc.join("scale.json")).unwrap()).unwrap();
    assert_eq!(json["n"], 500);
    assert!(json["mscale"]["converged"].as_bool().unwrap());
}

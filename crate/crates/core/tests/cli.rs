use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

const SEMICIRCLE: &str = r#"{"model":{"base_dim":1,"ambient_dim":1,"X":{"dim":1,"entries":[[0,0]]},"expectation":"partial_trace"},
"eta":{"kind":"scaled_identity","n":1,"scale":1}}"#;

const BERNOULLI_POW2: &str = r#"{"model":{"base_dim":1,"ambient_dim":2,"X":{"dim":2,"entries":[[-1,0],[0,0],[0,0],[1,0]]},"expectation":"partial_trace"},
"variant":{"power":{"kind":"scaled_identity","n":1,"scale":2}},"solver":{"damping":0.5}}"#;

const BERNOULLI_SEMI: &str = r#"{"model":{"base_dim":1,"ambient_dim":2,"X":{"dim":2,"entries":[[-1,0],[0,0],[0,0],[1,0]]},"expectation":"partial_trace"},
"eta":{"kind":"scaled_identity","n":1,"scale":1},"solver":{"damping":0.5}}"#;

const ENSEMBLE: &str = r#"{"kind":"deterministic_plus_gue","deterministic":{"measure":[[-1,0.5],[1,0.5]]},"t":1,"matrix_size":120,"samples":3,"seed":2024}"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        f.write("semi.json", SEMICIRCLE);
        f.write("bern2.json", BERNOULLI_POW2);
        f.write("bsemi.json", BERNOULLI_SEMI);
        f.write("ens.json", ENSEMBLE);
        f.write("b.json", "[0, 2]");
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    /// Runs the binary inside the fixture directory so recorded paths are relative.
    fn run(&self, args: &str) -> (i32, String, String) {
        let out = Command::new(env!("CARGO_BIN_EXE_opfree"))
            .args(args.split_whitespace())
            .current_dir(self.dir.path())
            .output()
            .unwrap();
        (
            out.status.code().unwrap_or(-1),
            String::from_utf8_lossy(&out.stdout).into_owned(),
            String::from_utf8_lossy(&out.stderr).into_owned(),
        )
    }
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_semicircle_fixture() {
    let f = Fixture::new();
    let (code, _, err) = f.run("solve --problem semi.json --point b.json --out w.json");
    assert_eq!(code, 0, "{err}");
    let w = json(&f.path("w.json"));
    let z = &w["omega"]["entries"][0];
    assert!(z[0].as_f64().unwrap().abs() < 1e-10);
    assert!((z[1].as_f64().unwrap() - (1.0 + 2f64.sqrt())).abs() < 1e-10);
    assert_eq!(w["converged"], true);
    assert!(w["residual_h"].as_f64().unwrap() <= 1e-10);
    assert_eq!(w["provenance"]["rng"], "chacha20");
    assert!(w["provenance"]["inputs"]["semi.json"].as_str().unwrap().len() == 64);
}

#[test]
fn density_contract() {
    let f = Fixture::new();
    let (code, _, err) = f.run("density --problem bern2.json --xmin -2 --xmax 2 --steps 401 --eps 1e-2,1e-3 --out d.csv --plot");
    assert_eq!(code, 0, "{err}");
    let csv = f.read("d.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("u,density,method"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 401);
    let mid: Vec<&str> = rows[200].split(',').collect();
    assert_eq!(mid[2], "richardson");
    let d0: f64 = mid[1].parse().unwrap();
    assert!((d0 - 1.0 / std::f64::consts::PI / 2.0).abs() < 1e-4, "{d0}");
    assert!(f.path("d.dat").exists());
    assert!(f.path("d.raw.csv").exists());
    let prov = json(&f.path("d.provenance.json"));
    assert_eq!(prov["provenance"]["command"], "density");
}

#[test]
fn power_and_transforms() {
    let f = Fixture::new();
    let (code, _, err) = f.run("power --problem bern2.json --point b.json --out p.json");
    assert_eq!(code, 0, "{err}");
    let g = json(&f.path("p.json"))["g"]["entries"][0][1].as_f64().unwrap();
    assert!((g + 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-10);

    f.write("model0.json", r#"{"base_dim":1,"ambient_dim":1,"X":{"dim":1,"entries":[[0,0]]},"expectation":"partial_trace"}"#);
    f.write("beta.json", r#"{"kind":"scaled_identity","n":1,"scale":1}"#);
    let (code, out, err) = f.run("convolve --model model0.json --beta beta.json --point b.json");
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let im = v["value"]["entries"][0][1].as_f64().unwrap();
    assert!((im + (2f64.sqrt() - 1.0)).abs() < 1e-10);

    f.write("bmodel.json", r#"{"base_dim":1,"ambient_dim":2,"X":{"dim":2,"entries":[[-1,0],[0,0],[0,0],[1,0]]},"expectation":"partial_trace"}"#);
    f.write("g.json", "[0, -0.1]");
    let (code, out, err) = f.run("rtransform --model bmodel.json --g g.json");
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let r = v["value"]["entries"][0][1].as_f64().unwrap();
    let want = (0.96f64.sqrt() - 1.0) / 0.2;
    assert!((r - want).abs() < 1e-8, "{r} vs {want}");
}

#[test]
fn diagnose_axioms_and_probe() {
    let f = Fixture::new();
    f.write("b2.json", "[0.3, 1.5]");
    f.write("q.json", "[0.5, 0]");
    f.write("u.json", "[0.2, 0]");
    let (code, _, err) = f.run("diagnose --problem semi.json --b1 b.json --b2 b2.json --q q.json --u u.json --out diag.json");
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("delta_omega"));
    let d = json(&f.path("diag.json"));
    assert_eq!(d["delta_omega"]["pass"], true);
    assert_eq!(d["dvg"]["pass"], true);

    f.write("t.json", r#"{"dim":2,"entries":[[1,0],[2,0],[0,0],[1,0]]}"#);
    let (code, _, err) = f.run("axioms --problem semi.json --a b.json --b b2.json --t t.json --out ax.json");
    assert_eq!(code, 0, "{err}");
    let ax = json(&f.path("ax.json"));
    assert!(ax["omega"]["similarity"].as_f64().unwrap() < 1e-10);

    f.write("alpha.json", "[3, 0]");
    f.write("one.json", "[1, 0]");
    let (code, _, err) = f.run("jc-probe --problem semi.json --alpha alpha.json --v one.json --u one.json --ys 1e-1,1e-2,1e-3,1e-4,1e-5,1e-6 --out jc.json");
    assert_eq!(code, 0, "{err}");
    assert_eq!(json(&f.path("jc.json"))["status"], "pass");
}

#[test]
fn validate_rmt_thresholds() {
    let f = Fixture::new();
    let (code, _, err) = f.run("density --problem bsemi.json --xmin -4 --xmax 4 --steps 401 --eps 1e-2,5e-3 --out pred.csv");
    assert_eq!(code, 0, "{err}");
    let (code, out, err) = f.run("validate-rmt --ensemble ens.json --against pred.csv --threshold 0.2 --out ks.json");
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("KS "));
    let ks = json(&f.path("ks.json"))["ks"].as_f64().unwrap();
    assert!(ks < 0.2);
    let (code, _, _) = f.run("validate-rmt --ensemble ens.json --against pred.csv --threshold 0");
    assert_eq!(code, 2);
}

#[test]
fn byte_identical_reruns() {
    let f = Fixture::new();
    for (cmd, out) in [
        ("solve --problem semi.json --point b.json --out r.json", "r.json"),
        ("density --problem bern2.json --xmin -1 --xmax 1 --steps 41 --eps 1e-2,1e-3 --out r.csv", "r.csv"),
        ("density --problem bsemi.json --xmin -4 --xmax 4 --steps 201 --eps 1e-2,5e-3 --out pred.csv", "pred.csv"),
        ("validate-rmt --ensemble ens.json --against pred.csv --threshold 1 --out k.json", "k.json"),
    ] {
        assert_eq!(f.run(cmd).0, 0, "{cmd}");
        let first = fs::read(f.path(out)).unwrap();
        assert_eq!(f.run(cmd).0, 0, "{cmd}");
        assert_eq!(first, fs::read(f.path(out)).unwrap(), "{cmd}");
    }
}

#[test]
fn exit_codes_for_corrupted_inputs() {
    let f = Fixture::new();
    let cases: Vec<(&str, &str, &str, i32)> = vec![
        ("bad.json", "{\"model\": ", "solve --problem bad.json --point b.json", 1),
        (
            "nonherm.json",
            r#"{"model":{"base_dim":1,"ambient_dim":2,"X":{"dim":2,"entries":[[0,0],[1,0],[0,0],[0,0]]},"expectation":"partial_trace"},"eta":{"kind":"scaled_identity","n":1,"scale":1}}"#,
            "solve --problem nonherm.json --point b.json",
            1,
        ),
        (
            "extra.json",
            r#"{"model":{"base_dim":1,"ambient_dim":1,"X":{"dim":1,"entries":[[0,0]]},"expectation":"partial_trace"},"eta":{"kind":"scaled_identity","n":1,"scale":1},"colour":1}"#,
            "solve --problem extra.json --point b.json",
            1,
        ),
        (
            "negcp.json",
            r#"{"model":{"base_dim":1,"ambient_dim":1,"X":{"dim":1,"entries":[[0,0]]},"expectation":"partial_trace"},"eta":{"kind":"scaled_identity","n":1,"scale":-1}}"#,
            "solve --problem negcp.json --point b.json",
            1,
        ),
        ("lower.json", "[0, -1]", "solve --problem semi.json --point lower.json", 1),
        ("wrongdim.json", r#"{"dim":2,"entries":[[0,1],[0,0],[0,0]]}"#, "solve --problem semi.json --point wrongdim.json", 1),
        ("nan.json", "[0, NaN]", "solve --problem semi.json --point nan.json", 1),
        ("empty.csv", "u,density\n", "validate-rmt --ensemble ens.json --against empty.csv", 1),
        (
            "narrow.csv",
            "u,density,method\n-1,0.3,none\n0,0.3,none\n1,0.3,none\n",
            "validate-rmt --ensemble ens.json --against narrow.csv",
            1,
        ),
        (
            "tiny.json",
            r#"{"kind":"deterministic_plus_gue","deterministic":{"measure":[[0,1]]},"t":1,"matrix_size":1,"samples":1,"seed":0}"#,
            "validate-rmt --ensemble tiny.json --against narrow.csv",
            1,
        ),
    ];
    for (name, text, cmd, want) in cases {
        f.write(name, text);
        let (code, _, err) = f.run(cmd);
        assert_eq!(code, want, "{cmd}: {err}");
    }
    assert_eq!(f.run("solve --problem semi.json --point b.json --max-iter 2").0, 2);
    assert_eq!(f.run("power --problem semi.json --point b.json").0, 1);
    assert_eq!(f.run("solve --problem semi.json --point b.json --frobnicate").0, 1);
    assert_eq!(f.run("solve --problem semi.json").0, 1);
    assert_eq!(f.run("density --problem bern2.json --xmin 1 --xmax -1 --steps 5 --eps 1e-2 --out x.csv").0, 1);
    assert_eq!(f.run("density --problem bern2.json --xmin -1 --xmax 1 --steps 5 --eps 1e-3,1e-2 --out x.csv").0, 1);
    assert_eq!(f.run("solve --problem semi.json --point b.json --damping 1").0, 1);
    assert_eq!(f.run("nonsense").0, 1);
    let (code, out, _) = f.run("--help");
    assert_eq!(code, 0);
    assert!(out.contains("validate-rmt"));
    let (code, _, _) = f.run("density --problem bern2.json --xmin -0.5 --xmax 0.5 --steps 3 --eps 1e-2,1e-3 --out nc.csv --damping 0 --max-iter 3");
    assert_eq!(code, 2);
    assert!(f.read("nc.csv").contains("failed"));
}

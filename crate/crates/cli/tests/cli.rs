use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn myelin(dir: &Path, ini: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.ini");
    fs::write(&cfg, ini).unwrap();
    Command::new(env!("CARGO_BIN_EXE_myelin"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let k = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap_or(f64::NAN)).collect()
}

const HEAT: &str = "\
[membrane]
model = passive
beta = 0
[cable]
a_eff = 1
lambda_bar = 0
nx = 100
t_final = 0.01
dt = 1e-3
initial_v = sin(pi*x)
decay_mode = 1
";

#[test]
fn cable_run_writes_hashed_csv() {
    let d = tempfile::tempdir().unwrap();
    let o = myelin(d.path(), HEAT, &["cable"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path(), "cable.csv");
    assert!(csv.starts_with("t,x,v,"));
    let last = csv.lines().last().unwrap();
    let hash = last.strip_prefix("# config_hash=").unwrap();
    assert_eq!(hash.len(), 64);
    assert!(read(d.path(), "cable_summary.txt").ends_with(&format!("# config_hash={hash}\n")));
}

#[test]
fn bad_configs_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let cases = [
        HEAT.replace("dt = 1e-3", "dt = -1"),
        HEAT.replace("nx = 100", "nx = 100\nbogus = 1"),
        "[membrane]\nmodel = nonsense\n".to_string(),
        "[geometry]\n[mesh]\nh = 0.1\n".to_string(),
        "[geometry]\n[membrane]\nmodel = passive\n[microscale]\n[sweep]\nepsilon =\n".to_string(),
    ];
    for (ini, cmd) in cases.iter().zip(["cable", "cable", "cable", "cell", "verify"]) {
        let o = myelin(d.path(), ini, &[cmd]);
        assert_eq!(o.status.code(), Some(2), "{ini}\n{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = Command::new(env!("CARGO_BIN_EXE_myelin")).arg("cell").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_myelin")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bare_cell_effective_conductivity() {
    let d = tempfile::tempdir().unwrap();
    let o = myelin(d.path(), "[geometry]\npreset = bare\n[mesh]\nh = 0.05\n", &["cell"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = column(&read(d.path(), "cell.csv"), "a_eff");
    assert_eq!(a.len(), 1);
    assert!((a[0] - 3.0 / (16.0 * std::f64::consts::PI)).abs() < 1e-4, "{a:?}");
}

#[test]
fn refinement_reports_an_order() {
    let d = tempfile::tempdir().unwrap();
    let o = myelin(d.path(), "[geometry]\n[mesh]\nh = 0.05\nrefine = 3\n", &["cell"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path(), "cell.csv");
    let h = column(&csv, "h");
    assert_eq!(h, vec![0.05, 0.025, 0.0125]);
    let p = column(&csv, "observed_order");
    assert!(p[..2].iter().all(|x| x.is_nan()));
    assert!(p[2] > 1.5 && p[2] < 2.5, "{p:?}");
}

#[test]
fn mesh_dump_is_consistent() {
    let d = tempfile::tempdir().unwrap();
    let o = myelin(d.path(), "[geometry]\n[mesh]\nh = 0.05\n", &["mesh-dump"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let nv = column(&read(d.path(), "mesh_vertices.csv"), "index").len();
    let tris = read(d.path(), "mesh_triangles.csv");
    for k in ["v0", "v1", "v2"] {
        assert!(column(&tris, k).iter().all(|&v| v >= 0.0 && (v as usize) < nv));
    }
}

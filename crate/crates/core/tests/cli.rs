use std::fs;
use std::path::{Path, PathBuf};

use aplevy::analytic::{ApClass, ApModel};
use aplevy::cli::run;
use aplevy::levy::{JumpDist, SubordinatorSpec};
use serde_json::Value;
use tempfile::TempDir;

fn cp_exp(rate: f64) -> SubordinatorSpec {
    SubordinatorSpec::compound_poisson(rate, JumpDist::Exponential { mean: 1.0 }).unwrap()
}

fn write_model(dir: &TempDir, name: &str, classes: Vec<(f64, SubordinatorSpec)>) -> PathBuf {
    let model = ApModel::new(classes.into_iter().map(|(b, input)| ApClass { b, input }).collect()).unwrap();
    let path = dir.path().join(name);
    fs::write(&path, model.to_json()).unwrap();
    path
}

fn m1(dir: &TempDir) -> PathBuf {
    write_model(dir, "m1.json", vec![(2.0, cp_exp(0.3)), (1.0, cp_exp(0.3))])
}

fn aplevy(args: &[&str]) -> i32 {
    let mut full = vec!["aplevy"];
    full.extend_from_slice(args);
    run(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn analytic_report_for_m1() {
    let dir = TempDir::new().unwrap();
    let model = m1(&dir);
    let out = dir.path().join("a.json");
    assert_eq!(aplevy(&["analytic", "--model", s(&model), "--alpha-grid", "0,0.5,1", "--out", s(&out)]), 0);
    let v = read_json(&out);
    let row0 = &v["table"][0];
    for key in ["w0_lst", "wn_lst", "w_customer_lst", "joint_lst_diagonal"] {
        assert!((row0[key].as_f64().unwrap() - 1.0).abs() < 1e-15, "{key}");
    }
    let means = &v["summary"]["mean_waits"];
    assert!((means["mean_w0"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!((means["mean_ye"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((means["mean_wn_particle"].as_f64().unwrap() - 2.5 / 0.85).abs() < 1e-10);
    assert!((means["mean_w_customer"].as_f64().unwrap() - 1.5 / 0.85).abs() < 1e-10);
    assert_eq!(v["k_class"], "finite");

    let csv = dir.path().join("a.csv");
    assert_eq!(aplevy(&["analytic", "--model", s(&model), "--format", "csv", "--out", s(&csv)]), 0);
    let text = fs::read_to_string(csv).unwrap();
    assert!(text.starts_with(&format!("# model_hash={}", v["model_hash"].as_str().unwrap())));
}

#[test]
fn schema_error_names_the_offending_path() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    let mut json: Value = serde_json::from_str(&fs::read_to_string(m1(&dir)).unwrap()).unwrap();
    json["classes"][1]["bogus"] = Value::from(3);
    fs::write(&path, json.to_string()).unwrap();
    assert_eq!(aplevy(&["analytic", "--model", s(&path)]), 2);
    let err = aplevy::cli::parse_model(&fs::read_to_string(&path).unwrap()).unwrap_err();
    assert!(err.to_string().contains("classes[1]"), "{err}");

    json["classes"][1].as_object_mut().unwrap().remove("bogus");
    json["classes"][0]["b"] = Value::from("fast");
    let err = aplevy::cli::parse_model(&json.to_string()).unwrap_err();
    assert!(err.to_string().contains("classes[0].b"), "{err}");
}

#[test]
fn unstable_model_is_rejected() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "hot.json", vec![(2.0, cp_exp(0.6)), (1.0, cp_exp(0.5))]);
    assert_eq!(aplevy(&["analytic", "--model", s(&model)]), 2);
    assert_eq!(aplevy(&["simulate", "--model", s(&model), "--reps", "1000"]), 2);
    let out = dir.path().join("cmp.json");
    assert_eq!(aplevy(&["compare", "--model", s(&model), "--out", s(&out)]), 2);
    assert_eq!(read_json(&out)["status"], "NOT-RUN");
    // explicit override runs the event simulator anyway
    assert_eq!(
        aplevy(&["simulate", "--model", s(&model), "--reps", "20000", "--allow-unstable", "--out", s(&dir.path().join("u.json"))]),
        0
    );
}

#[test]
fn invert_mm1_workload() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "mm1.json", vec![(1.0, cp_exp(0.5))]);
    let out = dir.path().join("inv.json");
    let code = aplevy(&[
        "invert", "--model", s(&model), "--target", "w0", "--t-grid", "lin:0.5:8:16", "--quantiles", "0.9", "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let v = read_json(&out);
    for row in v["rows"].as_array().unwrap() {
        let t = row["t"].as_f64().unwrap();
        let exact = 1.0 - 0.5 * (-0.5 * t).exp();
        assert!((row["cdf"].as_f64().unwrap() - exact).abs() < 1e-6, "t = {t}");
        assert_eq!(row["flagged"], false);
    }
    let q = v["quantiles"][0][1].as_f64().unwrap();
    assert!((q - 2.0 * 5f64.ln()).abs() < 1e-6);
    // quantile inside the atom at zero
    assert_eq!(aplevy(&["invert", "--model", s(&model), "--target", "w0", "--quantiles", "0.3"]), 2);
    assert_eq!(aplevy(&["invert", "--model", s(&model), "--order", "7"]), 2);
}

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let model = m1(&dir);
    let sim = |tag: &str, mode: &str, seed: &str| {
        let samples = dir.path().join(format!("{tag}.csv"));
        let out = dir.path().join(format!("{tag}.json"));
        let code = aplevy(&[
            "simulate", "--model", s(&model), "--mode", mode, "--reps", "20000", "--seed", seed, "--samples",
            s(&samples), "--out", s(&out),
        ]);
        assert_eq!(code, 0);
        (fs::read(samples).unwrap(), fs::read(out).unwrap())
    };
    for mode in ["des", "fpt-exact", "fpt-grid"] {
        let a = sim(&format!("{mode}-a"), mode, "9");
        let b = sim(&format!("{mode}-b"), mode, "9");
        let c = sim(&format!("{mode}-c"), mode, "10");
        assert_eq!(a, b, "{mode}");
        assert_ne!(a.0, c.0, "{mode}");
    }
}

#[test]
fn compare_refuses_reports_for_different_models() {
    let dir = TempDir::new().unwrap();
    let m1 = m1(&dir);
    let other = write_model(&dir, "other.json", vec![(2.0, cp_exp(0.2)), (1.0, cp_exp(0.3))]);
    let analytic = dir.path().join("an.json");
    let sim = dir.path().join("sim.json");
    assert_eq!(aplevy(&["analytic", "--model", s(&m1), "--alpha-grid", "0.5,1,2", "--out", s(&analytic)]), 0);
    assert_eq!(
        aplevy(&["simulate", "--model", s(&other), "--mode", "fpt-exact", "--reps", "2000", "--alpha-grid", "0.5,1,2", "--out", s(&sim)]),
        0
    );
    let out = dir.path().join("cmp.json");
    assert_eq!(aplevy(&["compare", "--analytic", s(&analytic), "--simulation", s(&sim), "--out", s(&out)]), 2);
    assert_eq!(read_json(&out)["status"], "REFUSED");
}

#[test]
fn compare_pipeline_passes_on_m1() {
    let dir = TempDir::new().unwrap();
    let model = m1(&dir);
    let out = dir.path().join("cmp.json");
    let code = aplevy(&["compare", "--model", s(&model), "--jobs", "300000", "--reps", "50000", "--out", s(&out)]);
    let v = read_json(&out);
    assert_eq!(code, 0, "{v:#}");
    assert_eq!(v["status"], "PASS");
    assert!(!v["rows"].as_array().unwrap().is_empty());
}

#[test]
fn inversion_matches_simulated_particle_waits() {
    use aplevy::des::{self, DesConfig};
    use aplevy::inversion::{self, ModelTransform, WaitKind};
    use rand::SeedableRng;

    let model = ApModel::new(vec![ApClass { b: 2.0, input: cp_exp(0.3) }, ApClass { b: 1.0, input: cp_exp(0.3) }]).unwrap();
    let run = des::run_des(&model, &DesConfig { num_jobs: 600_000, warmup: None, seed: 3, allow_unstable: false }).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let particles = des::particle_wait_samples(&run, &mut rng);
    let transform = ModelTransform::new(&model, WaitKind::Particle).unwrap();

    let cdf = inversion::invert_cdf(&transform, 2.0, inversion::DEFAULT_ORDER).unwrap();
    let empirical = des::particle_cdf(&particles, 2.0);
    assert!((cdf - empirical.value).abs() < 4.0 * empirical.std_error + 1e-3, "{cdf} vs {empirical:?}");

    let q = inversion::quantile(&transform, 0.9, inversion::DEFAULT_ORDER).unwrap();
    let q_sim = des::particle_quantile(&particles, 0.9);
    assert!((q - q_sim).abs() / q < 0.02, "{q} vs {q_sim}");
}

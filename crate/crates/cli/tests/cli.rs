use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn matcap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matcap"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn fmc_outputs_and_headers() {
    let d = tempfile::tempdir().unwrap();
    let o = matcap(&["fmc", "--n", "3", "--trials", "2", "--kmax", "20", "--out", "r"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = d.path().join("r");
    assert_eq!(header(&r.join("fmc.csv")), "trial,i,J_i,cumulative");
    assert_eq!(header(&r.join("fmc_vector.csv")), "trial,i,J_i,cumulative");
    let rows = fs::read_to_string(r.join("fmc.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 21);
    let svg = fs::read_to_string(r.join("fmc.svg")).unwrap();
    assert!(svg.contains(r#"version="1.1""#));
}

#[test]
fn scalar_preset_first_value() {
    let d = tempfile::tempdir().unwrap();
    let o = matcap(&["fmc", "--n", "1", "--trials", "1", "--kmax", "3"], d.path());
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(d.path().join("fmc.csv")).unwrap();
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let j0: f64 = first[2].parse().unwrap();
    assert!((j0 - 0.5625).abs() < 1e-12);
}

#[test]
fn sweep_and_memory_headers() {
    let d = tempfile::tempdir().unwrap();
    let o = matcap(&["capacity-sweep", "--n-list", "2,3", "--trials", "3", "--general"], d.path());
    assert_eq!(code(&o), 0);
    assert_eq!(
        header(&d.path().join("capacity_sweep.csv")),
        "N,trial,J_tot,J_tot_rel,bound,satisfied"
    );
    let o = matcap(&["mem-fmc", "--n", "2", "--trials", "2", "--kmax", "10"], d.path());
    assert_eq!(code(&o), 0);
    assert_eq!(
        header(&d.path().join("mem_fmc.csv")),
        "trial,k,J_prime_k,cumulative,J_tot_base,ratio"
    );
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&matcap(&["fmc", "--n", "0"], d.path())), 2);
    assert_eq!(code(&matcap(&["fmc", "--n", "3", "--radius", "1.0"], d.path())), 3);
    assert_eq!(code(&matcap(&["mem-fmc", "--n", "2", "--m-max", "0"], d.path())), 2);
    assert_eq!(code(&matcap(&["train", "--task", "sorting"], d.path())), 2);

    fs::write(d.path().join("bad.cfg"), "learning_rate = 1\n").unwrap();
    assert_eq!(code(&matcap(&["train", "--config", "bad.cfg"], d.path())), 2);

    fs::write(d.path().join("strict.cfg"), "single_tolerance = 1e-300\n").unwrap();
    assert_eq!(code(&matcap(&["gradcheck", "--config", "strict.cfg"], d.path())), 4);
    assert_eq!(code(&matcap(&["gradcheck"], d.path())), 0);
}

#[test]
fn divergence_exits_three_with_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("div.cfg"), "size = tiny\nlr = 1e300\nbatch_size = 2\nlen_max = 3\n").unwrap();
    let o = matcap(&["train", "--config", "div.cfg", "--iterations", "20", "--quiet", "--out", "run"], d.path());
    assert_eq!(code(&o), 3);
    assert!(d.path().join("run/checkpoint.json").exists());
}

#[test]
fn train_then_eval() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("t.cfg"), "size = tiny\nbatch_size = 2\nlen_max = 4\ncheckpoint_every = 3\n").unwrap();
    let o = matcap(&["train", "--config", "t.cfg", "--iterations", "6", "--quiet", "--out", "run"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = d.path().join("run");
    assert_eq!(header(&run.join("learning_curve.csv")), "iteration,sequences,bce,bit_error");
    assert_eq!(header(&run.join("diagnostics.csv")), "step,phase,head,slot,weight");
    assert!(run.join("checkpoint_00000003.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("final_report.json")).unwrap()).unwrap();
    assert_eq!(report["iterations"], 6);
    assert_eq!(report["sequences"], 12);

    let o = matcap(
        &["eval", "--checkpoint", "run/checkpoint.json", "--sweep", "l=1..3", "--samples", "4", "--out", "ev"],
        d.path(),
    );
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(d.path().join("ev/eval.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "sweep_value,mean_bce,bit_error");
    assert_eq!(text.lines().count(), 4);

    let o = matcap(&["eval", "--checkpoint", "run/checkpoint.json", "--sweep", "n=1..3"], d.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn thread_cap_does_not_change_output() {
    let d = tempfile::tempdir().unwrap();
    let args = ["capacity-sweep", "--n-list", "3,5", "--trials", "4"];
    let one = Command::new(env!("CARGO_BIN_EXE_matcap"))
        .args(args)
        .args(["--out", "a"])
        .env("MATCAP_THREADS", "1")
        .current_dir(d.path())
        .output()
        .unwrap();
    assert_eq!(code(&one), 0);
    let many = matcap(&[&args[..], &["--out", "b"]].concat(), d.path());
    assert_eq!(code(&many), 0);
    assert_eq!(
        fs::read(d.path().join("a/capacity_sweep.csv")).unwrap(),
        fs::read(d.path().join("b/capacity_sweep.csv")).unwrap()
    );
}

#[test]
fn resume_matches_straight_run() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("t.cfg"), "size = tiny\nbatch_size = 2\nlen_max = 4\n").unwrap();
    let train = |its: &str, out: &str| {
        matcap(&["train", "--config", "t.cfg", "--iterations", its, "--quiet", "--out", out], d.path())
    };
    assert_eq!(code(&train("6", "first")), 0);
    assert_eq!(code(&train("10", "straight")), 0);
    let o = matcap(
        &["train", "--resume", "first/checkpoint.json", "--iterations", "10", "--quiet", "--out", "resumed"],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let read = |p: &str| fs::read(d.path().join(p)).unwrap();
    assert_eq!(read("resumed/checkpoint.json"), read("straight/checkpoint.json"));
    let straight = String::from_utf8(read("straight/learning_curve.csv")).unwrap();
    let resumed = String::from_utf8(read("resumed/learning_curve.csv")).unwrap();
    let tail: Vec<&str> = straight.lines().skip(7).collect();
    assert_eq!(resumed.lines().skip(1).collect::<Vec<_>>(), tail);

    let o = matcap(&["train", "--resume", "first/checkpoint.json", "--seed", "3"], d.path());
    assert_eq!(code(&o), 2);
}

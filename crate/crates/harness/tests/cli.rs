use std::path::Path;
use std::process::{Command, Output};

fn stgcn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stgcn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn graph_prints_three_subsets() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&stgcn(&["graph", "chain3"], dir.path()));
    assert_eq!(text.matches("# mask").count(), 3);
    assert_eq!(text.matches("# normalized").count(), 3);
    assert!(text.starts_with("# joints 3 cog 1"));
}

#[test]
fn gen_train_forward_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&stgcn(
        &["gen", "--topology", "chain5", "--classes", "2", "--per-class", "4", "--frames", "6", "--out", "data.sksq"],
        d,
    ));
    std::fs::write(
        d.join("run.cfg"),
        "topology = chain5\ndata = data.sksq\nchannels = 4\nstrides = 1\nkernel_size = 3\n\
         learning_rate = 0.01\nepochs = 3\nbatch_size = 4\n",
    )
    .unwrap();
    for name in ["a", "b"] {
        ok(&stgcn(
            &["train", "--config", "run.cfg", "--seed", "7", "--checkpoint", &format!("{name}.skpt"), "--history", &format!("{name}.csv")],
            d,
        ));
    }
    assert_eq!(std::fs::read(d.join("a.skpt")).unwrap(), std::fs::read(d.join("b.skpt")).unwrap());
    let csv = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let probs = ok(&stgcn(&["forward", "--checkpoint", "a.skpt", "--data", "data.sksq"], d));
    assert_eq!(probs.lines().count(), 8);
    for line in probs.lines() {
        let total: f64 = line.split(' ').map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    let report = ok(&stgcn(&["eval", "--checkpoint", "a.skpt", "--data", "data.sksq"], d));
    assert!(report.contains("top1"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = stgcn(&["graph", "no-such-skeleton"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown topology"));
    std::fs::write(dir.path().join("bad.cfg"), "epochs = lots\n").unwrap();
    let out = stgcn(&["train", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

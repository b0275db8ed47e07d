use std::fs;
use std::path::Path;

use mgam::cli::run;

fn mgam(args: &[&str]) -> i32 {
    run(std::iter::once("mgam").chain(args.iter().copied()))
}

fn small_data(dir: &Path) -> String {
    let data = dir.join("data");
    let d = data.to_str().unwrap().to_string();
    assert_eq!(
        mgam(&["gen-data", "--out", &d, "--n-users", "30", "--n-items", "60", "--n-groups", "10", "--seed", "5"]),
        0
    );
    d
}

const FAST: [&str; 8] = [
    "--set",
    "epochs=2",
    "--set",
    "embedding_dim=8",
    "--set",
    "num_subsets=2",
    "--set",
    "eval_negatives=20",
];

#[test]
fn train_eval_recommend_round() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    for f in ["user_item.tsv", "groups.tsv", "group_items.tsv", "meta.json"] {
        assert!(Path::new(&data).join(f).exists(), "{f}");
    }
    let ck = tmp.path().join("ck");
    let ck_s = ck.to_str().unwrap();
    let mut args = vec!["train", "--data", &data, "--out", ck_s];
    args.extend(FAST);
    assert_eq!(mgam(&args), 0);
    for f in ["manifest.json", "params.bin", "adam.bin", "config.resolved"] {
        assert!(ck.join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(ck.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with("epoch,mean_loss,triplet_mean,point_mean,wall_seconds"));

    assert_eq!(mgam(&["eval", "--data", &data, "--ckpt", ck_s, "--ks", "5,10"]), 0);
    let metrics = fs::read_to_string(ck.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "model,K,HR,NDCG,n_groups,seed");
    assert!(lines[1].starts_with("full,5,") && lines[2].starts_with("full,10,"));
    assert!(ck.join("metrics_detail.csv").exists());

    assert_eq!(mgam(&["recommend", "--data", &data, "--ckpt", ck_s, "--group-id", "3", "--k", "4", "--explain"]), 0);
    assert_eq!(mgam(&["recommend", "--data", &data, "--ckpt", ck_s, "--group-id", "nope"]), 2);

    // A checkpoint trained with another dimension cannot be evaluated as this one.
    assert_eq!(mgam(&["eval", "--data", &data, "--ckpt", ck_s, "--set", "embedding_dim=4"]), 1);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    let out = tmp.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(mgam(&["frobnicate"]), 2);
    assert_eq!(mgam(&["train", "--data", &data, "--out", out, "--set", "lr=0.1"]), 2);
    assert_eq!(
        mgam(&["ablate", "--data", &data, "--out", out, "--disable", "subpe", "--disable", "gpe", "--disable", "suppe"]),
        2
    );
    assert_eq!(mgam(&["ablate", "--data", &data, "--out", out, "--disable", "everything"]), 2);
    assert_eq!(mgam(&["--help"]), 0);
}

#[test]
fn runtime_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let out = tmp.path().join("o");
    assert_eq!(
        mgam(&["train", "--data", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        1
    );
}

#[test]
fn dumps_and_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    assert_eq!(mgam(&["dump-graph", "--data", &data]), 0);
    assert_eq!(mgam(&["dump-subsets", "--data", &data, "--set", "num_subsets=2"]), 0);
    let out = tmp.path().join("base");
    let mut args = vec!["baseline", "--data", &data, "--out", out.to_str().unwrap()];
    args.extend(FAST);
    assert_eq!(mgam(&args), 0);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    for label in ["MF-AVG", "MF-LM", "MF-MS"] {
        assert_eq!(metrics.lines().filter(|l| l.starts_with(label)).count(), 2, "{label}");
    }
}

#[test]
fn config_file_and_override_precedence_is_persisted() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path());
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "num_subsets = 5\nepochs = 1\nembedding_dim = 8\n").unwrap();
    let out = tmp.path().join("ck");
    assert_eq!(
        mgam(&[
            "train",
            "--data",
            &data,
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "num_subsets=3",
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("num_subsets = 3\n"));
    assert!(resolved.contains("epochs = 1\n"));
    assert!(resolved.contains("learning_rate = 0.001\n"));
}

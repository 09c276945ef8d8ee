use std::process::{Command, Output};

fn hvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hvi")).args(args).output().expect("binary runs")
}

#[test]
fn bounds_check_is_deterministic_without_timing() {
    let a = hvi(&["bounds-check", "--seed", "3", "--no-timing"]);
    let b = hvi(&["bounds-check", "--seed", "3", "--no-timing"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("experiment,seed,step,K,M,estimator,metric,value,ci_low,ci_high,wall_ms\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small study\ninstances = 3\nseed = 1\n").unwrap();
    let out = dir.path().join("out.csv");
    let r = hvi(&[
        "jackknife-study",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().skip(1).all(|l| l.starts_with("jackknife-study,2,")));
    assert!(text.contains(",3,5,1,upper,mean_abs_bias,"));
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(hvi(&["no-such-experiment"]).status.code(), Some(2));
    assert_eq!(hvi(&["bounds-check", "--set", "bogus=1"]).status.code(), Some(2));
    assert_eq!(hvi(&["toy-laplace", "--estimator", "nope"]).status.code(), Some(2));
    let r = hvi(&["vae-train", "--set", "data=/nonexistent", "--set", "subset_size=5"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().to_str().unwrap();
    let r = hvi(&["vae-train", "--set", &format!("data={data}")]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("train-images-idx3-ubyte"));

    // magic, count 4, 28 x 28, then only 10 pixels
    let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 28, 0, 0, 0, 28];
    bytes.extend([0u8; 10]);
    std::fs::write(dir.path().join("train-images-idx3-ubyte"), &bytes).unwrap();
    let r = hvi(&["vae-train", "--set", &format!("data={data}"), "--set", "subset_size=10"]);
    assert_eq!(r.status.code(), Some(3));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("byte 26"), "{err}");
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qrnn_cli::checkpoint::Checkpoint;
use qrnn_cli::metrics::{read_metrics, HEADER};

fn qrnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrnn")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &[&str] =
    &["copy-train", "--model", "qlstm", "--hidden", "3", "--seq-len", "3", "--blank-len", "2", "--batch", "4"];

fn small_run(extra: &[&str]) -> Output {
    let args: Vec<&str> = SMALL.iter().chain(extra).copied().collect();
    qrnn(&args)
}

#[test]
fn single_epoch_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("m.csv");
    let o = small_run(&["--epochs", "1", "--metrics", p(&metrics)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,"));
    let loss = lines[1].split(',').nth(1).unwrap();
    assert!(loss.chars().filter(|c| c.is_ascii_digit()).count() >= 12, "{loss}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let m = dir.path().join(format!("m{k}.csv"));
        let c = dir.path().join(format!("c{k}.ckpt"));
        for model in ["qlstm", "lstm"] {
            let o = qrnn(&[
                "copy-train",
                "--model",
                model,
                "--hidden",
                "3",
                "--seq-len",
                "3",
                "--blank-len",
                "2",
                "--epochs",
                "8",
                "--seed",
                "5",
                "--metrics",
                p(&m),
                "--checkpoint",
                p(&c),
            ]);
            assert_eq!(code(&o), 0);
            files.push((fs::read(&m).unwrap(), fs::read(&c).unwrap()));
        }
    }
    assert_eq!(files[0], files[2]);
    assert_eq!(files[1], files[3]);
    assert_ne!(files[0].0, files[1].0);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let (m_full, c_full) = (dir.path().join("full.csv"), dir.path().join("full.ckpt"));
    let (m_part, c_part) = (dir.path().join("part.csv"), dir.path().join("part.ckpt"));
    assert_eq!(
        code(&small_run(&["--epochs", "9", "--seed", "3", "--metrics", p(&m_full), "--checkpoint", p(&c_full)])),
        0
    );
    assert_eq!(
        code(&small_run(&["--epochs", "4", "--seed", "3", "--metrics", p(&m_part), "--checkpoint", p(&c_part)])),
        0
    );
    let o = qrnn(&[
        "copy-train",
        "--resume",
        p(&c_part),
        "--epochs",
        "9",
        "--metrics",
        p(&m_part),
        "--checkpoint",
        p(&c_part),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&m_full).unwrap(), fs::read(&m_part).unwrap());
    assert_eq!(fs::read(&c_full).unwrap(), fs::read(&c_part).unwrap());
}

#[test]
fn checkpoint_describes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c.ckpt");
    assert_eq!(code(&small_run(&["--epochs", "2", "--seed", "7", "--checkpoint", p(&c)])), 0);
    let bytes = fs::read(&c).unwrap();
    assert_eq!(&bytes[..8], b"QRNNCKP1");
    let ckpt = Checkpoint::load(&c).unwrap();
    let h = &ckpt.header;
    assert_eq!((h.architecture.as_str(), h.hidden, h.epoch, h.seed), ("qlstm", 3, 2, 7));
    assert_eq!((h.layout.as_str(), h.endianness.as_str(), h.scalar.as_str()), ("split", "little", "f64"));
    assert!(h.tensors.iter().any(|t| t.name == "cell.w_f" && t.quaternion && t.shape == vec![4, 3, 3]));
    assert!(h.tensors.iter().any(|t| t.name == "adam.v.head.bias" && !t.quaternion));
    let mut again = Vec::new();
    ckpt.write_to(&mut again).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn multiple_seeds_get_separate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    let o = small_run(&["--epochs", "3", "--seeds", "1,2", "--metrics", p(&m)]);
    assert_eq!(code(&o), 0);
    let one = read_metrics(fs::read(dir.path().join("m.seed1.csv")).unwrap().as_slice()).unwrap();
    let two = read_metrics(fs::read(dir.path().join("m.seed2.csv")).unwrap().as_slice()).unwrap();
    assert_eq!((one.len(), two.len()), (3, 3));
    assert_ne!(one, two);
    let single = dir.path().join("s.csv");
    assert_eq!(code(&small_run(&["--epochs", "3", "--seed", "2", "--metrics", p(&single)])), 0);
    assert_eq!(fs::read(&single).unwrap(), fs::read(dir.path().join("m.seed2.csv")).unwrap());
}

#[test]
fn divergence_exits_3() {
    let o = small_run(&["--epochs", "5", "--lr", "1e308"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&qrnn(&["copy-train", "--hidden", "3", "--blank-len", "2"])), 2);
    assert_eq!(code(&qrnn(&["copy-train", "--model", "gru", "--hidden", "3", "--blank-len", "2"])), 2);
    assert_eq!(code(&small_run(&["--seq-len", "0"])), 2);
    assert_eq!(code(&small_run(&["--lr", "-1"])), 2);
    assert_eq!(code(&small_run(&["--seed", "1", "--seeds", "2,3"])), 2);
    assert_eq!(code(&qrnn(&["params", "--arch", "linear:2048"])), 2);
    assert_eq!(code(&qrnn(&["bogus"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ckpt");
    assert_eq!(code(&qrnn(&["copy-train", "--resume", p(&missing)])), 2);
}

#[test]
fn grad_check_exit_codes() {
    let q = qrnn(&["grad-check", "--model", "qlstm", "--hidden", "2", "--timesteps", "3"]);
    assert_eq!(code(&q), 0, "{}", String::from_utf8_lossy(&q.stdout));
    assert!(String::from_utf8_lossy(&q.stdout).contains("cell.r_o"));
    assert_eq!(code(&qrnn(&["grad-check", "--model", "lstm", "--hidden", "4", "--timesteps", "3"])), 0);
    assert_eq!(code(&qrnn(&["grad-check", "--model", "qlstm", "--hidden", "2", "--tolerance", "0"])), 1);
}

#[test]
fn params_report() {
    let o = qrnn(&["params", "--arch", "linear:1x2048", "--arch", "qlinear:1x512q", "--compare"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("4194304"));
    assert!(text.contains("1048576"));
    assert!(text.contains("ratio 4.000000"));
    let o = qrnn(&["params", "--arch", "copy-qlstm:1x20q", "--arch", "copy-lstm:1x40"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("8409") && text.contains("8529"), "{text}");
}

#[test]
fn pack_features_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("e.csv");
    let row = vec!["2.5"; 40].join(",");
    fs::write(&input, format!("{row}\n").repeat(5)).unwrap();
    let csv = dir.path().join("f.csv");
    assert_eq!(code(&qrnn(&["pack-features", "--in", p(&input), "--out", p(&csv)])), 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    for line in text.lines() {
        let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 160);
        assert!(vals[..40].iter().all(|&v| v == 2.5));
        assert!(vals[40..].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn feature_csv_bin_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("e.csv");
    let rows: Vec<String> = (0..7)
        .map(|t| (0..5).map(|f| format!("{}", ((t * 5 + f) as f64 * 0.731).sin() * 3.0)).collect::<Vec<_>>().join(","))
        .collect();
    fs::write(&input, rows.join("\n")).unwrap();
    let (csv, bin, back) = (dir.path().join("a.csv"), dir.path().join("a.bin"), dir.path().join("b.csv"));
    assert_eq!(code(&qrnn(&["pack-features", "--in", p(&input), "--out", p(&csv)])), 0);
    assert_eq!(code(&qrnn(&["pack-features", "--in", p(&input), "--out", p(&bin), "--format", "bin"])), 0);
    assert_eq!(&fs::read(&bin).unwrap()[..8], b"QRNNFEA1");
    assert_eq!(code(&qrnn(&["features-to-csv", "--in", p(&bin), "--out", p(&back)])), 0);
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&back).unwrap());
}

#[test]
fn ragged_energy_csv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("e.csv");
    fs::write(&input, "1,2,3\n4,5\n").unwrap();
    let o = qrnn(&["pack-features", "--in", p(&input), "--out", p(&dir.path().join("o.csv"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ragged"));
}

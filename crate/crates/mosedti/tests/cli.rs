use std::path::Path;
use std::process::{Command, Output};

const FAST: [&str; 6] = ["--set", "synergy.epochs=8,4,4,4", "--set", "embed.epochs=10", "--set", "eval.availability=both"];

fn mosedti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mosedti"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mosedti(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn file_round_trip_through_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-synth", "--out", s(&data)]);

    let stats = ok(&["kg", "stats", "--data-dir", s(&data)]);
    let filtered = stats.lines().find(|l| l.starts_with("filtered")).unwrap();
    assert!(filtered.contains("leakage_removed=40"), "{stats}");

    let emb = dir.path().join("emb.bin");
    ok(&["pretrain-kg", "--data-dir", s(&data), "--epochs", "10", "--dim", "16", "--out", s(&emb)]);

    let model = dir.path().join("model.bin");
    let log = dir.path().join("log.csv");
    let mut args = vec!["train", "--data-dir", s(&data), "--embeddings", s(&emb), "--shots", "10", "--seed", "2"];
    args.extend(["--out", s(&model), "--log", s(&log), "--set", "embed.dim=16"]);
    args.extend(FAST);
    let trained = ok(&args);
    assert_eq!(trained.lines().count(), 3);
    assert!(std::fs::read_to_string(&log).unwrap().contains("epoch,S4,3,"));

    // Evaluation rebuilds the split and reproduces the training report.
    let evaluated = ok(&["evaluate", "--model", s(&model), "--data-dir", s(&data), "--shots", "10", "--seed", "2"]);
    assert_eq!(evaluated, trained);

    let pairs = dir.path().join("pairs.tsv");
    std::fs::write(&pairs, "D001\tT001\nD002\tT005\n").unwrap();
    let both = ok(&["predict", "--model", s(&model), "--data-dir", s(&data), "--pairs", s(&pairs)]);
    let intr = ok(&["predict", "--model", s(&model), "--data-dir", s(&data), "--pairs", s(&pairs), "--only-intrinsic"]);
    let rows: Vec<Vec<&str>> = both.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    let irows: Vec<Vec<&str>> = intr.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 2);
    for (b, i) in rows.iter().zip(&irows) {
        let (p, pe, pi): (f64, f64, f64) = (b[2].parse().unwrap(), b[4].parse().unwrap(), b[5].parse().unwrap());
        assert!(p >= pe.min(pi) - 1e-6 && p <= pe.max(pi) + 1e-6);
        assert_eq!(i[2], b[5]);
        assert_eq!(i[4], "NA");
    }
}

#[test]
fn mismatched_embeddings_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["gen-synth", "--out", s(&a)]);
    ok(&["gen-synth", "--out", s(&b), "--set", "synth.entities=300"]);
    let emb = dir.path().join("emb.bin");
    ok(&["pretrain-kg", "--data-dir", s(&b), "--epochs", "2", "--out", s(&emb)]);
    let out = mosedti(&["train", "--data-dir", s(&a), "--embeddings", s(&emb), "--out", s(&dir.path().join("m.bin"))]);
    assert!(!out.status.success());
}

#[test]
fn bad_inputs_fail_with_locations() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "# comment\nsynergy.gamma_a = 4\nsynergy.nonsense = 1\n").unwrap();
    let out = mosedti(&["gen-synth", "--out", s(dir.path()), "--config", s(&conf)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let out = mosedti(&["parse-smiles", "CCO", "C("]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("CCO\tatoms=3\tbonds=2"));
    assert!(text.contains("C(\terror UnmatchedBranch: unmatched branch parenthesis at byte 2"), "{text}");

    let data = dir.path().join("data");
    ok(&["gen-synth", "--out", s(&data)]);
    std::fs::write(data.join("drugs.txt"), "D001\nNOT_IN_GRAPH\n").unwrap();
    let out = mosedti(&["kg", "stats", "--data-dir", s(&data)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOT_IN_GRAPH"));
}

#[test]
fn gradcheck_command_reports_every_module() {
    let out = ok(&["gradcheck", "--configurations", "2"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}

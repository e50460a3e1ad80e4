use std::fs;
use std::path::{Path, PathBuf};

use gloctm::cli::main_with;
use gloctm::commands::{cmd_augment, cmd_eval, cmd_synth, cmd_topics, cmd_train, OutputLock};
use gloctm::config::{Overrides, RunConfig};
use gloctm::Error;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn football_config(dir: &Path, k: usize) -> RunConfig {
    write(dir, "l1.txt", "football\nfootball goal\nfootball goal cat\n");
    write(dir, "l2.txt", "futbol\nfutbol gol\nfutbol gol gato\n");
    write(dir, "l1.vec", "football 1 0\ngoal 0.9 0.3\ncat 0 1\n");
    write(dir, "l2.vec", "futbol 1 0.05\ngol 0.8 0.4\ngato 0 1\n");
    let toml = format!(
        "[paths]\ncorpus1 = \"l1.txt\"\ncorpus2 = \"l2.txt\"\nembeddings1 = \"l1.vec\"\nembeddings2 = \"l2.vec\"\nout = \"out\"\n\
         [preprocess]\nmin_df = 1\n[model.neighbors]\nk_intra = {k}\nk_cross = {k}\n"
    );
    let p = write(dir, "run.toml", &toml);
    RunConfig::load(Some(&p), &Overrides::default()).unwrap()
}

#[test]
fn augment_fixture_matches_hand_example() {
    let d = tempfile::tempdir().unwrap();
    let config = football_config(d.path(), 1);
    let data = cmd_augment(&config).unwrap();
    assert_eq!(data.vocabs[0].tokens(), &["football", "goal", "cat"]);
    assert_eq!(data.globals[0].dense_row(0), vec![1, 1, 0, 1, 0, 0]);
    let trips = fs::read_to_string(d.path().join("out/augment/l1.triplets")).unwrap();
    assert_eq!(trips.lines().take(3).collect::<Vec<_>>(), vec!["0 0 1", "0 1 1", "0 3 1"]);
    let coverage = fs::read_to_string(d.path().join("out/augment/coverage.tsv")).unwrap();
    assert!(coverage.contains("L1\t3\t0\t1\t3"), "{coverage}");
}

#[test]
fn augment_without_neighbours_binarizes() {
    let d = tempfile::tempdir().unwrap();
    let config = football_config(d.path(), 0);
    let data = cmd_augment(&config).unwrap();
    for lang in 0..2 {
        for doc in 0..3 {
            let bow = data.bows[lang].dense_row(doc);
            let g = data.globals[lang].dense_row(doc);
            let own = if lang == 0 { &g[..3] } else { &g[3..] };
            let other = if lang == 0 { &g[3..] } else { &g[..3] };
            assert_eq!(own, bow.iter().map(|c| (*c > 0) as u32).collect::<Vec<_>>());
            assert!(other.iter().all(|c| *c == 0));
        }
    }
}

#[test]
fn missing_embedding_file_exits_two() {
    let d = tempfile::tempdir().unwrap();
    football_config(d.path(), 1);
    fs::remove_file(d.path().join("l2.vec")).unwrap();
    let cfg = d.path().join("run.toml");
    let code = main_with(["gloctm", "augment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn bad_flag_exits_two() {
    assert_eq!(main_with(["gloctm", "train", "--ablation", "nonsense"]), 2);
    assert_eq!(main_with(["gloctm", "train", "--set", "model.n_topics=0"]), 2);
}

#[test]
fn output_lock_is_exclusive() {
    let d = tempfile::tempdir().unwrap();
    let lock = OutputLock::acquire(d.path()).unwrap();
    assert!(matches!(OutputLock::acquire(d.path()), Err(Error::Locked(_))));
    drop(lock);
    OutputLock::acquire(d.path()).unwrap();
}

/// Small synthetic run directory produced by `synth`.
fn synthetic(dir: &Path, extra: &[&str]) -> RunConfig {
    let mut set: Vec<String> = [
        "synth.docs_per_lang=120",
        "synth.reference_docs=60",
        "synth.words_per_topic=10",
        "synth.n_topics=3",
        "train.epochs=3",
        "train.batch_size=64",
        "model.hidden_dim=8",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    set.extend(extra.iter().map(|s| s.to_string()));
    let o = Overrides { out: Some(dir.join("data")), set: set.clone(), ..Overrides::default() };
    let run = cmd_synth(&RunConfig::load(None, &o).unwrap()).unwrap();
    RunConfig::load(Some(&run), &Overrides { set, ..Overrides::default() }).unwrap()
}

#[test]
fn train_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let mut config = synthetic(d.path(), &[]);
    cmd_train(&config, false).unwrap();
    let first = d.path().join("data/run/seed-0");
    let (ra, ca) = (fs::read(first.join("report.jsonl")).unwrap(), fs::read(first.join("checkpoint.json")).unwrap());
    config.paths.out = Some(d.path().join("again"));
    cmd_train(&config, false).unwrap();
    let second = d.path().join("again/seed-0");
    assert_eq!(ra, fs::read(second.join("report.jsonl")).unwrap());
    assert_eq!(ca, fs::read(second.join("checkpoint.json")).unwrap());
    assert_eq!(fs::read(first.join("topics.tsv")).unwrap(), fs::read(second.join("topics.tsv")).unwrap());
}

#[test]
fn resume_continues_identically() {
    let d = tempfile::tempdir().unwrap();
    let mut config = synthetic(d.path(), &["train.epochs=4"]);
    config.paths.out = Some(d.path().join("straight"));
    let straight = cmd_train(&config, false).unwrap().remove(0).report;
    config.paths.out = Some(d.path().join("resumed"));
    config.train.epochs = 2;
    cmd_train(&config, false).unwrap();
    config.train.epochs = 4;
    let resumed = cmd_train(&config, true).unwrap().remove(0).report;
    assert_eq!(straight, resumed);
}

#[test]
fn several_seeds_write_aggregate() {
    let d = tempfile::tempdir().unwrap();
    let mut config = synthetic(d.path(), &[]);
    config.seeds = 3;
    let outcomes = cmd_train(&config, false).unwrap();
    assert_eq!(outcomes.iter().map(|o| o.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    let out = d.path().join("data/run");
    let agg = fs::read_to_string(out.join("aggregate.tsv")).unwrap();
    assert!(agg.starts_with("metric\tmean\tstd\tn"));
    assert!(agg.lines().any(|l| l.starts_with("final_loss\t") && l.ends_with("\t3")));
    assert!(agg.lines().any(|l| l.starts_with("alignment_accuracy\t")));
    for s in 0..3 {
        let lines = fs::read_to_string(out.join(format!("seed-{s}/report.jsonl"))).unwrap();
        assert_eq!(lines.lines().count(), 3);
        for l in lines.lines() {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert_eq!(v["seed"], s);
            assert!(v["loss"]["total"].as_f64().unwrap().is_finite());
        }
    }
}

#[test]
fn eval_tabulates_ablations() {
    let d = tempfile::tempdir().unwrap();
    let mut config = synthetic(d.path(), &[]);
    let mut checkpoints = Vec::new();
    for name in ["full", "no_kl"] {
        let mut c = config.clone();
        c.model = c.model.clone().with_ablation(gloctm_core::model::Ablation::parse(name).unwrap());
        c.paths.out = Some(d.path().join(name));
        cmd_train(&c, false).unwrap();
        checkpoints.push(d.path().join(format!("{name}/seed-0/checkpoint.json")));
    }
    config.paths.out = Some(d.path().join("eval"));
    let outcomes = cmd_eval(&config, &checkpoints).unwrap();
    for o in &outcomes {
        let m = &o.metrics;
        assert_eq!(m.tq, m.cnpmi.max(0.0) * m.tu);
    }
    let table = fs::read_to_string(d.path().join("eval/ablation.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert!(rows[0].starts_with("ablation\tn\tcnpmi\ttu\ttq"));
    assert!(rows[1].starts_with("full\t1\t"));
    assert!(rows[2].starts_with("no_kl\t1\t"));
    let metrics = fs::read_to_string(d.path().join("eval/eval/0-full-seed0/metrics.tsv")).unwrap();
    assert!(metrics.lines().any(|l| l.starts_with("tq\t")));
    assert!(d.path().join("eval/eval/0-full-seed0/plot_classification.tsv").exists());
}

#[test]
fn eval_without_reference_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let mut config = synthetic(d.path(), &[]);
    cmd_train(&config, false).unwrap();
    config.paths.reference1 = None;
    config.paths.reference2 = None;
    let err = cmd_eval(&config, &[d.path().join("data/run/seed-0/checkpoint.json")]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn topics_export() {
    let d = tempfile::tempdir().unwrap();
    let config = synthetic(d.path(), &[]);
    cmd_train(&config, false).unwrap();
    let ckpt = d.path().join("data/run/seed-0/checkpoint.json");
    let dest = d.path().join("t.tsv");
    let words = cmd_topics(&ckpt, 1, &dest).unwrap();
    assert_eq!(words.len(), config.model.n_topics);
    for line in fs::read_to_string(&dest).unwrap().lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[1].split(' ').count(), 1);
        assert!(cols[1].starts_with("e_") && cols[2].starts_with("f_"));
    }
    let fifteen = cmd_topics(&ckpt, 15, &dest).unwrap();
    assert!(fifteen.iter().all(|t| t[0].len() == 15 && t[1].len() == 15));
    assert!(cmd_topics(&ckpt, 31, &dest).is_err());
}

//! The five subcommands, callable as library functions.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gloctm_core::evaluation::{MetricReport, TopicSet};
use gloctm_core::model::{Ablation, ModelConfig};
use gloctm_core::pipeline::{evaluate, prepare, PreparedCorpus, RawLanguage};
use gloctm_core::synthgen::{generate, PlantedTruth};
use gloctm_core::training::{TrainReport, Trainer};
use gloctm_core::Language;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::report::{aggregate_lines, metric_pairs, write_metrics, write_topics, write_train_report};

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".gloctm.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.into())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes a synthetic corpus in the standard file formats plus a
/// `run.toml` pointing at them.
pub fn cmd_synth(config: &RunConfig) -> Result<PathBuf> {
    let out = config.paths.out_dir();
    let _lock = OutputLock::acquire(&out)?;
    let corpus = generate(&config.synth)?;
    for lang in Language::BOTH {
        let (l, n) = (lang.index(), lang.id());
        io::write_corpus(&out.join(format!("l{n}.txt")), &corpus.docs[l])?;
        io::write_labels(&out.join(format!("l{n}.labels")), &corpus.labels[l])?;
        io::write_word_vectors(&out.join(format!("l{n}.vec")), &corpus.word_embeddings[l])?;
        io::write_doc_embeddings(&out.join(format!("l{n}.docvec")), &corpus.doc_embeddings[l])?;
        io::write_corpus(&out.join(format!("ref{n}.txt")), &corpus.reference[l])?;
    }
    io::write_json(&out.join("truth.json"), &corpus.truth)?;
    let run = format!(
        "[paths]\n\
         corpus1 = \"l1.txt\"\ncorpus2 = \"l2.txt\"\n\
         labels1 = \"l1.labels\"\nlabels2 = \"l2.labels\"\n\
         embeddings1 = \"l1.vec\"\nembeddings2 = \"l2.vec\"\n\
         doc_embeddings1 = \"l1.docvec\"\ndoc_embeddings2 = \"l2.docvec\"\n\
         reference1 = \"ref1.txt\"\nreference2 = \"ref2.txt\"\n\
         truth = \"truth.json\"\nout = \"run\"\n\n\
         [model]\nn_topics = {}\n",
        config.synth.n_topics
    );
    let path = out.join("run.toml");
    io::write_lines(&path, [run.trim_end()])?;
    Ok(path)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("paths.{key} is required")))
}

struct RawInputs {
    docs: [Vec<Vec<String>>; 2],
    labels: [Option<Vec<usize>>; 2],
    words: [Vec<(String, Vec<f64>)>; 2],
    doc_embeddings: [Option<gloctm_core::linalg::Matrix>; 2],
    reference: Option<[Vec<Vec<String>>; 2]>,
}

fn read_language(config: &RunConfig, lang: Language) -> Result<(Vec<Vec<String>>, Option<Vec<usize>>, Vec<(String, Vec<f64>)>, Option<gloctm_core::linalg::Matrix>)> {
    let p = &config.paths;
    let (corpus, labels, words, docs, n) = match lang {
        Language::L1 => (&p.corpus1, &p.labels1, &p.embeddings1, &p.doc_embeddings1, 1),
        Language::L2 => (&p.corpus2, &p.labels2, &p.embeddings2, &p.doc_embeddings2, 2),
    };
    let corpus = required(corpus, &format!("corpus{n}"))?;
    let (docs_text, labels) = match labels {
        Some(l) => {
            let (d, l) = io::read_labeled_corpus(corpus, l)?;
            (d, Some(l))
        }
        None => (io::read_corpus(corpus)?, None),
    };
    let words = io::read_word_vectors(required(words, &format!("embeddings{n}"))?)?;
    let doc_embeddings = match docs {
        Some(path) => Some(io::read_doc_embeddings(path)?),
        None => None,
    };
    Ok((docs_text, labels, words, doc_embeddings))
}

fn read_inputs(config: &RunConfig) -> Result<RawInputs> {
    let (a, b) = rayon::join(|| read_language(config, Language::L1), || read_language(config, Language::L2));
    let (a, b) = (a?, b?);
    let reference = match (&config.paths.reference1, &config.paths.reference2) {
        (Some(r1), Some(r2)) => Some(io::read_reference(r1, r2)?),
        (None, None) => None,
        _ => return Err(Error::Config("paths.reference1 and paths.reference2 go together".into())),
    };
    Ok(RawInputs {
        docs: [a.0, b.0],
        labels: [a.1, b.1],
        words: [a.2, b.2],
        doc_embeddings: [a.3, b.3],
        reference,
    })
}

fn build(raw: &RawInputs, config: &RunConfig, model: &ModelConfig) -> Result<PreparedCorpus> {
    let langs = Language::BOTH.map(|l| {
        let i = l.index();
        RawLanguage {
            docs: &raw.docs[i],
            word_embeddings: &raw.words[i],
            doc_embeddings: raw.doc_embeddings[i].as_ref(),
            labels: raw.labels[i].as_deref(),
        }
    });
    let reference = raw.reference.as_ref().map(|[a, b]| [a.as_slice(), b.as_slice()]);
    Ok(prepare(langs, reference, &model.neighbors, &config.preprocess)?)
}

fn read_truth(config: &RunConfig) -> Result<Option<PlantedTruth>> {
    config.paths.truth.as_deref().map(io::read_json).transpose()
}

/// Writes the augmented rows as sparse triplets plus a coverage table.
pub fn cmd_augment(config: &RunConfig) -> Result<PreparedCorpus> {
    let out = config.paths.out_dir();
    let _lock = OutputLock::acquire(&out)?;
    let data = build(&read_inputs(config)?, config, &config.model)?;
    let dir = out.join("augment");
    let mut coverage = vec!["language\tvocab_size\tmissing\tcoverage\tdocuments".to_owned()];
    for lang in Language::BOTH {
        let l = lang.index();
        io::write_triplets(&dir.join(format!("l{}.triplets", lang.id())), &data.globals[l])?;
        let emb = &data.word_embeddings[l];
        let missing = emb.missing().iter().filter(|m| **m).count();
        coverage.push(format!("{lang}\t{}\t{missing}\t{}\t{}", emb.len(), emb.coverage(), data.bows[l].n_docs()));
    }
    io::write_lines(&dir.join("coverage.tsv"), coverage)?;
    Ok(data)
}

/// Result of training one seed.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub run_dir: PathBuf,
    pub report: TrainReport,
    pub metrics: Option<MetricReport>,
}

pub fn run_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn train_seed(config: &RunConfig, data: &PreparedCorpus, truth: Option<&PlantedTruth>, seed: u64, resume: bool) -> Result<TrainOutcome> {
    let dir = run_dir(&config.paths.out_dir(), seed);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let ckpt_path = dir.join("checkpoint.json");
    let vocabs = data.vocab_refs();
    let mut trainer = if resume {
        let c = Checkpoint::load(&ckpt_path)?;
        c.check_vocabularies(&ckpt_path, vocabs)?;
        let mut t = c.trainer;
        t.extend_epochs(config.train.epochs);
        t
    } else {
        let train = gloctm_core::training::TrainConfig { seed, ..config.train.clone() };
        Trainer::new(config.model.clone(), train, (vocabs[0].len(), vocabs[1].len()))?
    };
    let log_path = dir.join("train.log");
    let mut log = OpenOptions::new().create(true).append(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let started = Instant::now();
    let every = trainer.train_config().checkpoint_every;
    let vocab_pair = [data.vocabs[0].clone(), data.vocabs[1].clone()];
    let mut save_error = None;
    let trained = trainer.train(&data.training_data(), |t| {
        let e = t.report().epochs.last().expect("epoch recorded");
        let _ = writeln!(log, "epoch {} steps {} total {} elapsed_s {:.3}", e.epoch, e.steps, e.loss.total, started.elapsed().as_secs_f64());
        if every > 0 && t.epochs_done() % every == 0 {
            if let Err(err) = Checkpoint::new(t.clone(), vocab_pair.clone()).save(&ckpt_path) {
                save_error = Some(err);
                return Err(gloctm_core::Error::Internal("periodic checkpoint failed".into()));
            }
        }
        Ok(())
    });
    if let Some(err) = save_error {
        return Err(err);
    }
    trained?;
    let report = trainer.report().clone();
    let params = trainer.params().clone();
    Checkpoint::new(trainer, vocab_pair).save(&ckpt_path)?;
    write_train_report(&dir.join("report.jsonl"), &report)?;
    let topics = TopicSet::from_params(&params, config.eval.top_n)?;
    write_topics(&dir.join("topics.tsv"), &topics.words(vocabs))?;
    let metrics = match data.reference {
        Some(_) => {
            let m = evaluate(&params, data, &config.eval, truth)?;
            write_metrics(&dir, &m)?;
            Some(m)
        }
        None => None,
    };
    Ok(TrainOutcome { seed, run_dir: dir, report, metrics })
}

/// Trains every configured seed (in parallel) and writes per-seed
/// artifacts plus `aggregate.tsv`.
pub fn cmd_train(config: &RunConfig, resume: bool) -> Result<Vec<TrainOutcome>> {
    let out = config.paths.out_dir();
    let _lock = OutputLock::acquire(&out)?;
    let data = build(&read_inputs(config)?, config, &config.model)?;
    data.training_data().validate(&config.model)?;
    let truth = read_truth(config)?;
    let outcomes = config
        .seed_list()
        .into_par_iter()
        .map(|s| train_seed(config, &data, truth.as_ref(), s, resume))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<(String, f64)>> = outcomes
        .iter()
        .map(|o| {
            let mut r = vec![("final_loss".to_owned(), o.report.final_loss().map_or(f64::NAN, |l| l.total))];
            if let Some(m) = &o.metrics {
                r.extend(metric_pairs(m));
            }
            r
        })
        .collect();
    io::write_lines(&out.join("aggregate.tsv"), aggregate_lines(&rows))?;
    Ok(outcomes)
}

/// Evaluated checkpoint.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub checkpoint: PathBuf,
    pub ablation: Option<Ablation>,
    pub seed: u64,
    pub metrics: MetricReport,
}

/// Evaluates each checkpoint against the configured corpus and writes
/// per-checkpoint reports and an ablation table.
pub fn cmd_eval(config: &RunConfig, checkpoints: &[PathBuf]) -> Result<Vec<EvalOutcome>> {
    if checkpoints.is_empty() {
        return Err(Error::Config("eval needs at least one checkpoint".into()));
    }
    if config.paths.reference1.is_none() {
        return Err(Error::Config("eval needs paths.reference1 and paths.reference2 for CNPMI".into()));
    }
    let out = config.paths.out_dir();
    let _lock = OutputLock::acquire(&out)?;
    let raw = read_inputs(config)?;
    let truth = read_truth(config)?;
    let outcomes = checkpoints
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let c = Checkpoint::load(path)?;
            let data = build(&raw, config, c.model_config())?;
            c.check_vocabularies(path, data.vocab_refs())?;
            let metrics = evaluate(c.params(), &data, &config.eval, truth.as_ref())?;
            let ablation = c.model_config().ablation();
            let seed = c.trainer.report().seed;
            let name = ablation.map_or("custom", Ablation::name);
            write_metrics(&out.join("eval").join(format!("{i}-{name}-seed{seed}")), &metrics)?;
            Ok(EvalOutcome { checkpoint: path.clone(), ablation, seed, metrics })
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_lines(&out.join("ablation.tsv"), ablation_table(&outcomes))?;
    Ok(outcomes)
}

/// One row per ablation: `mean±std` of every metric over its checkpoints.
pub fn ablation_table(outcomes: &[EvalOutcome]) -> Vec<String> {
    let mut groups: Vec<(Option<Ablation>, Vec<Vec<(String, f64)>>)> = Vec::new();
    for o in outcomes {
        let pairs = metric_pairs(&o.metrics);
        match groups.iter_mut().find(|(a, _)| *a == o.ablation) {
            Some((_, v)) => v.push(pairs),
            None => groups.push((o.ablation, vec![pairs])),
        }
    }
    groups.sort_by_key(|(a, _)| a.map_or(usize::MAX, |a| Ablation::ALL.iter().position(|x| *x == a).unwrap_or(usize::MAX)));
    let keys: Vec<String> = groups.first().map(|g| g.1[0].iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
    let mut out = vec![format!("ablation\tn\t{}", keys.join("\t"))];
    for (ablation, runs) in &groups {
        let cells: Vec<String> = keys
            .iter()
            .map(|k| {
                let v: Vec<f64> = runs.iter().filter_map(|r| r.iter().find(|(x, _)| x == k).map(|p| p.1)).collect();
                format!("{:.4}±{:.4}", gloctm_core::evaluation::mean(&v), gloctm_core::evaluation::std_dev(&v))
            })
            .collect();
        out.push(format!("{}\t{}\t{}", ablation.map_or("custom", Ablation::name), runs.len(), cells.join("\t")));
    }
    out
}

/// Writes the top `top_n` words of every topic of a checkpoint.
pub fn cmd_topics(checkpoint: &Path, top_n: usize, dest: &Path) -> Result<Vec<[Vec<String>; 2]>> {
    let c = Checkpoint::load(checkpoint)?;
    let topics = TopicSet::from_params(c.params(), top_n)?;
    let words = topics.words([&c.vocabularies[0], &c.vocabularies[1]]);
    write_topics(dest, &words)?;
    Ok(words)
}

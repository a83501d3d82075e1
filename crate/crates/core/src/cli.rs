//! Command-line front end.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::RunConfig;
use crate::corpus::{read_corpus, write_corpus, Corpus};
use crate::embeddings::{load_embeddings, lookup_vocabulary, EmbeddingTable};
use crate::evaluator::{ablate, score, AblationSetup};
use crate::features::{
    distance_features, read_conll, word_features, word_hash_feature, DISTANCE_FEATURE_NAMES,
    WORD_FEATURE_NAMES,
};
use crate::network::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::network::{load_model, save_model, ModelFile};
use crate::predictor::predict_corpus;
use crate::synthetic::{planted_corpus, planted_network_config, PlantedConfig};
use crate::trainer::train;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Check(_) => EXIT_CHECK,
        }
    }
}

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "semunit",
    version,
    about = "Multiword expression and supersense tagger"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// key=value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta_start: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta_extend: Option<f64>,
    #[arg(long, global = true)]
    hash_dim: Option<usize>,
    /// unknown_only or all_words.
    #[arg(long, global = true)]
    hash_mode: Option<String>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    lemmatize: Option<String>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    distance_into_composer: Option<String>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    mean_vector: Option<String>,
    /// CoNLL dependency parses, one sentence per block.
    #[arg(long, global = true)]
    parses: Option<PathBuf>,
    /// word2vec embeddings (binary or text).
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// External evaluation script, run as `SCRIPT GOLD PRED` next to the built-in scorer.
    #[arg(long, global = true)]
    official_eval_script: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Train a model and write it to --model.
    Train {
        corpus: Option<PathBuf>,
        /// Write per-epoch losses as key=value lines.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Tag a corpus with a trained model.
    Predict {
        corpus: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predicted units against gold units.
    Eval {
        gold: PathBuf,
        pred: PathBuf,
        /// Also write the report as key=value lines.
        #[arg(long)]
        kv: Option<PathBuf>,
    },
    /// Train and score once per disabled feature family.
    Ablate {
        corpus: Option<PathBuf>,
        /// Held-out corpus to score on (defaults to the training corpus).
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        test_parses: Option<PathBuf>,
        /// Use the built-in planted corpus instead of files.
        #[arg(long)]
        synthetic: bool,
    },
    /// Compare analytic and finite-difference gradients on random tiny networks.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 8)]
        max_unit_dim: usize,
    },
    /// Dump per-token and per-pair feature vectors as tab-separated rows.
    Features { corpus: Option<PathBuf> },
    /// Write the planted synthetic corpus, parses and embeddings to a directory.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        sentences: usize,
    },
}

fn resolve_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    let usage = |e: crate::config::ConfigError| CliError::Usage(e.to_string());
    if let Some(path) = &g.config {
        cfg.apply_file(path).map_err(|e| match e {
            crate::config::ConfigError::Io { .. } => CliError::Data(e.to_string()),
            e => CliError::Usage(e.to_string()),
        })?;
    }
    let mut flags: Vec<(&str, String)> = Vec::new();
    let mut push = |k, v: Option<String>| {
        if let Some(v) = v {
            flags.push((k, v));
        }
    };
    push("seed", g.seed.map(|x| x.to_string()));
    push("epochs", g.epochs.map(|x| x.to_string()));
    push("lr", g.lr.map(|x| x.to_string()));
    push("theta_start", g.theta_start.map(|x| x.to_string()));
    push("theta_extend", g.theta_extend.map(|x| x.to_string()));
    push("hash_dim", g.hash_dim.map(|x| x.to_string()));
    push("hash_mode", g.hash_mode.clone());
    push("lemmatize", g.lemmatize.clone());
    push("distance_into_composer", g.distance_into_composer.clone());
    push("mean_vector", g.mean_vector.clone());
    push("parses", g.parses.as_ref().map(|p| p.display().to_string()));
    push(
        "embeddings",
        g.embeddings.as_ref().map(|p| p.display().to_string()),
    );
    push("model", g.model.as_ref().map(|p| p.display().to_string()));
    for (k, v) in flags {
        cfg.set(k, &v).map_err(usage)?;
    }
    for kv in &g.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v).map_err(usage)?;
    }
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| {
        CliError::Usage(format!(
            "missing {what} (pass it as an argument or set it in the config)"
        ))
    })
}

fn load_corpus(path: &Path, parses: Option<&Path>) -> Result<Corpus, CliError> {
    let file = File::open(path).map_err(data(path.display()))?;
    let mut corpus = read_corpus(BufReader::new(file)).map_err(data(path.display()))?;
    if let Some(pp) = parses {
        let file = File::open(pp).map_err(data(pp.display()))?;
        let trees = read_conll(BufReader::new(file)).map_err(data(pp.display()))?;
        corpus.attach_parses(trees).map_err(data(pp.display()))?;
    }
    Ok(corpus)
}

fn load_table(cfg: &RunConfig, corpora: &[&Corpus]) -> Result<EmbeddingTable, CliError> {
    let path = required(&cfg.embeddings, "embeddings (--embeddings)")?;
    let mut vocab = std::collections::HashSet::new();
    for c in corpora {
        vocab.extend(lookup_vocabulary(c, cfg.features.lemmatize));
    }
    load_embeddings(path, cfg.embedding_format, Some(&vocab)).map_err(data(path.display()))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(data(p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_train(
    cfg: &RunConfig,
    corpus: Option<PathBuf>,
    metrics: Option<PathBuf>,
) -> Result<(), CliError> {
    let corpus_path = corpus.or_else(|| cfg.corpus.clone());
    let corpus = load_corpus(
        required(&corpus_path, "training corpus")?,
        cfg.parses.as_deref(),
    )?;
    let model_path = required(&cfg.model, "model path (--model)")?;
    let table = load_table(cfg, &[&corpus])?;
    let outcome = train::<f32>(
        &corpus,
        &table,
        &cfg.network,
        &cfg.features,
        &cfg.train,
        |e| eprintln!("{e}"),
    )
    .map_err(data("training"))?;
    save_model(&outcome.model, model_path).map_err(data(model_path.display()))?;
    if let Some(m) = metrics {
        let mut out = String::new();
        for e in &outcome.history {
            out.push_str(&format!(
                "epoch.{0}.mwe_loss={1}\nepoch.{0}.sense_loss={2}\nepoch.{0}.positives={3}\nepoch.{0}.negatives={4}\n",
                e.epoch, e.mwe_loss, e.sense_loss, e.positives, e.negatives
            ));
        }
        fs::write(&m, out).map_err(data(m.display()))?;
    }
    Ok(())
}

fn cmd_predict(
    cfg: &RunConfig,
    corpus: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let model_path = required(&cfg.model, "model path (--model)")?;
    let model: ModelFile<f32> = load_model(model_path).map_err(data(model_path.display()))?;
    let corpus_path = corpus.or_else(|| cfg.corpus.clone());
    let corpus = load_corpus(
        required(&corpus_path, "corpus to tag")?,
        cfg.parses.as_deref(),
    )?;
    let mut run_cfg = cfg.clone();
    run_cfg.features.lemmatize = model.features.lemmatize;
    let table = load_table(&run_cfg, &[&corpus])?;
    if table.dim() != model.params.config.embedding_dim {
        return Err(CliError::Data(format!(
            "embeddings have dimension {}, model expects {}",
            table.dim(),
            model.params.config.embedding_dim
        )));
    }
    let pred = predict_corpus(&model, &corpus, &table, &cfg.decode).map_err(data("prediction"))?;
    let out = open_output(output.or_else(|| cfg.output.clone()).as_deref())?;
    write_corpus(&pred, out).map_err(data("writing prediction"))
}

fn cmd_eval(
    cfg_script: Option<&Path>,
    gold: &Path,
    pred: &Path,
    kv: Option<PathBuf>,
) -> Result<(), CliError> {
    let g = load_corpus(gold, None)?;
    let p = load_corpus(pred, None)?;
    let report = score(&g, &p).map_err(data("scoring"))?;
    print!("{}", report.table());
    if let Some(path) = kv {
        fs::write(&path, report.key_values()).map_err(data(path.display()))?;
    }
    if let Some(script) = cfg_script {
        let out = Command::new(script)
            .arg(gold)
            .arg(pred)
            .output()
            .map_err(data(script.display()))?;
        println!("\n--- {} ---", script.display());
        print!("{}", String::from_utf8_lossy(&out.stdout));
        if !out.status.success() {
            return Err(CliError::Data(format!(
                "{} exited with {}: {}",
                script.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        println!("--- built-in ---");
        print!("{}", report.key_values());
    }
    Ok(())
}

fn cmd_ablate(
    cfg: &RunConfig,
    corpus: Option<PathBuf>,
    test: Option<PathBuf>,
    test_parses: Option<PathBuf>,
    synthetic: bool,
) -> Result<(), CliError> {
    let (train_c, test_c, table, network) = if synthetic {
        let p = planted_corpus(&PlantedConfig {
            seed: cfg.train.seed,
            ..PlantedConfig::default()
        });
        (p.train, p.held_out, p.table, planted_network_config())
    } else {
        let corpus_path = corpus.or_else(|| cfg.corpus.clone());
        let train_c = load_corpus(
            required(&corpus_path, "training corpus")?,
            cfg.parses.as_deref(),
        )?;
        let test_c = match test.or_else(|| cfg.test_corpus.clone()) {
            Some(t) => load_corpus(
                &t,
                test_parses.or_else(|| cfg.test_parses.clone()).as_deref(),
            )?,
            None => train_c.clone(),
        };
        let table = load_table(cfg, &[&train_c, &test_c])?;
        (train_c, test_c, table, cfg.network.clone())
    };
    let setup = AblationSetup {
        train: &train_c,
        test: &test_c,
        table: &table,
        network: &network,
        features: &cfg.features,
        train_config: &cfg.train,
        decode: &cfg.decode,
    };
    let report = ablate(&setup).map_err(data("ablation"))?;
    print!("{}", report.table());
    Ok(())
}

fn cmd_gradcheck(trials: usize, max_unit_dim: usize, seed: u64) -> Result<(), CliError> {
    let report = run_gradcheck(&GradcheckConfig {
        trials,
        seed,
        max_unit_dim,
        ..GradcheckConfig::default()
    })
    .map_err(data("gradcheck"))?;
    let checked: usize = report.trials.iter().map(|t| t.checked).sum();
    println!(
        "trials={} entries={} max_rel_error={:.3e} tolerance={:.0e}",
        report.trials.len(),
        checked,
        report.max_rel_error(),
        report.tolerance
    );
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        let worst = report
            .trials
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
            .map(|t| t.worst.clone())
            .unwrap_or_default();
        Err(CliError::Check(format!(
            "gradient check failed; worst entry {worst}"
        )))
    }
}

fn cmd_features(cfg: &RunConfig, corpus: Option<PathBuf>) -> Result<(), CliError> {
    let corpus_path = corpus.or_else(|| cfg.corpus.clone());
    let corpus = load_corpus(required(&corpus_path, "corpus")?, cfg.parses.as_deref())?;
    let table = load_table(cfg, &[&corpus])?;
    let f = &cfg.features;
    let mut out = open_output(cfg.output.as_deref())?;
    let w = |e: io::Error| CliError::Data(format!("writing features: {e}"));
    writeln!(
        out,
        "#T\tsent_id\ti\tsurface\t{}\thash",
        WORD_FEATURE_NAMES.join("\t")
    )
    .map_err(w)?;
    writeln!(
        out,
        "#P\tsent_id\ti\tj\t{}",
        DISTANCE_FEATURE_NAMES.join("\t")
    )
    .map_err(w)?;
    for s in &corpus.sentences {
        for i in 1..=s.len() {
            let tok = s.token(i);
            let look = table.lookup(&tok.surface, &tok.lemma, f.lemmatize);
            let feats = word_features(s, i, &look);
            let hash = word_hash_feature(
                &tok.surface,
                look.found,
                f.hash_mode,
                f.hash_dim,
                f.hash_alpha_only,
            );
            let hash: String = hash
                .iter()
                .map(|&b| if b > 0.0 { '1' } else { '0' })
                .collect();
            let cols: Vec<String> = feats.iter().map(|x| x.to_string()).collect();
            writeln!(
                out,
                "T\t{}\t{i}\t{}\t{}\t{hash}",
                s.sent_id,
                tok.surface,
                cols.join("\t")
            )
            .map_err(w)?;
        }
        for i in 1..=s.len() {
            for j in i + 1..=(i + cfg.decode.lookahead).min(s.len()) {
                let d = distance_features(s, s.parse.as_ref(), i, j, f.gap_mode)
                    .map_err(data(&s.sent_id))?;
                let cols: Vec<String> = d.iter().map(|x| x.to_string()).collect();
                writeln!(out, "P\t{}\t{i}\t{j}\t{}", s.sent_id, cols.join("\t")).map_err(w)?;
            }
        }
    }
    out.flush().map_err(w)
}

fn cmd_synth(dir: &Path, sentences: usize, seed: u64) -> Result<(), CliError> {
    let p = planted_corpus(&PlantedConfig {
        train_sentences: sentences,
        held_out_sentences: sentences,
        seed,
        ..PlantedConfig::default()
    });
    fs::create_dir_all(dir).map_err(data(dir.display()))?;
    let io_err = data(dir.display());
    let write = |name: &str, body: String| fs::write(dir.join(name), body);
    let result = (|| -> io::Result<()> {
        for (name, c) in [("train", &p.train), ("test", &p.held_out)] {
            let text = crate::corpus::write_corpus_string(c).map_err(io::Error::other)?;
            write(&format!("{name}.dimsum"), text)?;
            write(&format!("{name}.conll"), conll_string(c))?;
        }
        write("embeddings.txt", embeddings_text(&p.table))
    })();
    result.map_err(io_err)
}

fn conll_string(c: &Corpus) -> String {
    let mut out = String::new();
    for s in &c.sentences {
        for (k, t) in s.tokens.iter().enumerate() {
            let head = s.parse.as_ref().map_or(0, |p| p.head(k + 1));
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t_\t{head}\tdep\t_\t_\n",
                k + 1,
                t.surface,
                t.lemma,
                t.pos,
                t.pos
            ));
        }
        out.push('\n');
    }
    out
}

fn embeddings_text(t: &EmbeddingTable) -> String {
    let mut rows: Vec<(usize, &str, &[f32])> = t.iter().map(|(w, v, r)| (r, w, v)).collect();
    rows.sort_by_key(|r| r.0);
    let mut out = format!("{} {}\n", rows.len(), t.dim());
    for (_, w, v) in rows {
        let cols: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        out.push_str(&format!("{w} {}\n", cols.join(" ")));
    }
    out
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Cmd::Train { corpus, metrics } => cmd_train(&cfg, corpus, metrics),
        Cmd::Predict { corpus, output } => cmd_predict(&cfg, corpus, output),
        Cmd::Eval { gold, pred, kv } => {
            cmd_eval(cli.global.official_eval_script.as_deref(), &gold, &pred, kv)
        }
        Cmd::Ablate {
            corpus,
            test,
            test_parses,
            synthetic,
        } => cmd_ablate(&cfg, corpus, test, test_parses, synthetic),
        Cmd::Gradcheck {
            trials,
            max_unit_dim,
        } => cmd_gradcheck(trials, max_unit_dim, cfg.train.seed),
        Cmd::Features { corpus } => cmd_features(&cfg, corpus),
        Cmd::Synth { dir, sentences } => cmd_synth(&dir, sentences, cfg.train.seed),
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_global_flags() {
        let cli = Cli::try_parse_from([
            "semunit",
            "--theta-start",
            "-0.3",
            "--lemmatize",
            "--mean-vector",
            "false",
            "gradcheck",
            "--trials",
            "3",
        ])
        .unwrap();
        let cfg = resolve_config(&cli.global).unwrap();
        assert_eq!(cfg.decode.theta_start, -0.3);
        assert!(cfg.features.lemmatize);
        assert!(!cfg.network.mean_vector_feature);
        assert!(matches!(cli.command, Cmd::Gradcheck { trials: 3, .. }));
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["semunit"]), EXIT_USAGE);
        assert_eq!(run(["semunit", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["semunit", "--set", "nope=1", "gradcheck"]), EXIT_USAGE);
        assert_eq!(run(["semunit", "train"]), EXIT_USAGE);
        assert_eq!(
            run(["semunit", "eval", "/nonexistent/a", "/nonexistent/b"]),
            EXIT_DATA
        );
    }
}

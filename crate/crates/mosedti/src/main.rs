use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use mosedti_core::config::RunConfig;
use mosedti_core::dataset::few_shot_split;
use mosedti_core::gradcheck::GradCheckConfig;
use mosedti_core::gradsuite::module_suite;
use mosedti_core::moe::{Availability, Catalog, Pair};
use mosedti_core::smiles::parse_smiles;
use mosedti_core::synth::SyntheticWorld;

use mosedti::pipeline::{self, DataPaths, Source};
use mosedti::{binfmt, io, report};

#[derive(Parser)]
#[command(name = "mosedti", version, about = "Few-shot drug-target interaction prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// `key = value` file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set synergy.epochs=50,20,20,20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(p) = &self.config {
            let text = io::read_text(p)?;
            c.apply(&text).with_context(|| format!("in {}", p.display()))?;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set {kv}: expected KEY=VALUE"))?;
            c.set(k.trim(), v.trim()).with_context(|| format!("--set {kv}"))?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Directory with the files written by `gen-synth`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    triples: Option<PathBuf>,
    #[arg(long)]
    drugs: Option<PathBuf>,
    #[arg(long)]
    targets: Option<PathBuf>,
    /// `drug id \t SMILES` per line.
    #[arg(long)]
    smiles: Option<PathBuf>,
    /// `target id \t sequence` per line, or FASTA.
    #[arg(long)]
    sequences: Option<PathBuf>,
    #[arg(long)]
    positives: Option<PathBuf>,
    #[arg(long)]
    negatives: Option<PathBuf>,
    /// Precomputed residue features (MOSERES1) replacing the learned table.
    #[arg(long)]
    residue_features: Option<PathBuf>,
    /// Use the built-in synthetic world.
    #[arg(long, conflicts_with = "data_dir")]
    synthetic: bool,
}

impl DataArgs {
    fn source(&self) -> Result<Source> {
        if self.synthetic {
            return Ok(Source::Synthetic);
        }
        let mut paths = match &self.data_dir {
            Some(d) => Some(DataPaths::from_dir(d)),
            None => None,
        };
        let explicit = [&self.triples, &self.drugs, &self.targets, &self.smiles, &self.sequences, &self.positives];
        if paths.is_none() {
            if explicit.iter().all(|p| p.is_none()) {
                info!("no data given; using the synthetic world");
                return Ok(Source::Synthetic);
            }
            let need = |p: &Option<PathBuf>, flag: &str| p.clone().with_context(|| format!("--{flag} is required without --data-dir"));
            paths = Some(DataPaths {
                triples: need(&self.triples, "triples")?,
                drugs: need(&self.drugs, "drugs")?,
                targets: need(&self.targets, "targets")?,
                smiles: need(&self.smiles, "smiles")?,
                sequences: need(&self.sequences, "sequences")?,
                positives: need(&self.positives, "positives")?,
                negatives: None,
                residue_features: None,
            });
        }
        let mut p = paths.expect("set above");
        macro_rules! over {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { p.$f = v.clone(); })*};
        }
        over!(triples, drugs, targets, smiles, sequences, positives);
        if self.negatives.is_some() {
            p.negatives = self.negatives.clone();
        }
        if self.residue_features.is_some() {
            p.residue_features = self.residue_features.clone();
        }
        Ok(Source::Files(p))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to a directory.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Knowledge-graph utilities.
    Kg {
        #[command(subcommand)]
        command: KgCommand,
    },
    /// Pretrain entity embeddings on the leakage-filtered graph.
    PretrainKg {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Parse SMILES strings and report atoms, bonds and warnings.
    ParseSmiles {
        smiles: Vec<String>,
        /// Read one SMILES per line (an optional leading id and tab is kept).
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long)]
        dump_graph: bool,
    },
    /// Train the full model on one few-shot split and save it.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Pretrained embeddings (MOSEEMB1); pretrained on the fly if absent.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Positives per target in the training split; defaults to the first eval.shots value.
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Test-split metrics CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score drug-target pairs with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// `drug id \t target id` per line.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, conflicts_with = "only_extrinsic")]
        only_intrinsic: bool,
        #[arg(long)]
        only_extrinsic: bool,
        /// Output TSV; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recreate a model's training split and report test metrics.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All variants over every eval.shots, eval.seeds and eval.availability.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Mean ± std per (dataset, shots, setting, variant).
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Worker threads; all cores if absent. Results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Finite-difference checks of every trainable module.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        configurations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum KgCommand {
    /// Entity, relation and triple counts before and after leakage removal.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth { out, cfg } => gen_synth(&out, &cfg.resolve()?),
        Command::Kg {
            command: KgCommand::Stats { data, cfg },
        } => kg_stats(&data, &cfg.resolve()?),
        Command::PretrainKg {
            data,
            method,
            dim,
            margin,
            lr,
            epochs,
            seed,
            out,
            cfg,
        } => {
            let mut c = cfg.resolve()?;
            let flags = [
                ("embed.method", method),
                ("embed.dim", dim.map(|v| v.to_string())),
                ("embed.margin", margin.map(|v| v.to_string())),
                ("embed.lr", lr.map(|v| v.to_string())),
                ("embed.epochs", epochs.map(|v| v.to_string())),
                ("embed.seed", seed.map(|v| v.to_string())),
            ];
            for (k, v) in flags {
                if let Some(v) = v {
                    c.set(k, &v)?;
                }
            }
            c.validate()?;
            pretrain_kg(&data, &c, &out)
        }
        Command::ParseSmiles { smiles, file, dump_graph } => parse_smiles_cmd(smiles, file.as_deref(), dump_graph),
        Command::Train {
            data,
            embeddings,
            seed,
            shots,
            out,
            log,
            metrics,
            cfg,
        } => {
            let c = cfg.resolve()?;
            let shots = shots.or(c.eval.shots.first().copied()).context("no shots given")?;
            let world = pipeline::world(&data.source()?, &c, seed, embeddings.as_deref())?;
            let (dataset, model, training) = pipeline::train(&world, &c, shots, seed)?;
            binfmt::save_bundle(&out, &c, &model)?;
            info!("model written to {}", out.display());
            if let Some(p) = log {
                report::write_training_log(&p, &c, &training)?;
            }
            let rows = pipeline::evaluate_model(&model, &dataset, &world.name, seed, &c.eval.availability);
            print_rows(&rows);
            if let Some(p) = metrics {
                report::write_metrics(&p, &c, &rows)?;
            }
            Ok(())
        }
        Command::Predict {
            model,
            data,
            pairs,
            only_intrinsic,
            only_extrinsic,
            out,
        } => {
            let mode = if only_intrinsic {
                Availability::IntrinsicOnly
            } else if only_extrinsic {
                Availability::ExtrinsicOnly
            } else {
                Availability::Both
            };
            predict(&model, &data, &pairs, mode, out.as_deref())
        }
        Command::Evaluate {
            model,
            data,
            seed,
            shots,
            out,
        } => evaluate(&model, &data, seed, shots, out.as_deref()),
        Command::Ablate {
            data,
            embeddings,
            out,
            summary,
            threads,
            cfg,
        } => {
            let c = cfg.resolve()?;
            let source = data.source()?;
            let work = || pipeline::ablate(&source, &c, embeddings.as_deref());
            let rows = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(work)?,
                None => work()?,
            };
            report::write_metrics(&out, &c, &rows)?;
            info!("{} rows written to {}", rows.len(), out.display());
            if let Some(p) = summary {
                let s = report::summarize(&rows);
                report::write_summary(&p, &c, &s)?;
            }
            Ok(())
        }
        Command::Gradcheck { configurations, seed } => gradcheck(configurations, seed),
    }
}

fn gen_synth(out: &Path, c: &RunConfig) -> Result<()> {
    let w = SyntheticWorld::generate(c.synth)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let files = [
        ("triples.tsv", w.triples_tsv()),
        ("drugs.txt", w.drug_list()),
        ("targets.txt", w.target_list()),
        ("smiles.tsv", w.smiles_tsv()),
        ("sequences.tsv", w.sequences_tsv()),
        ("positives.tsv", w.pairs_tsv(true)),
        ("negatives.tsv", w.pairs_tsv(false)),
        ("world.tsv", w.description_tsv()),
        ("config.txt", c.render()),
    ];
    for (name, text) in files {
        io::write_text(&out.join(name), &text)?;
    }
    info!(
        "{} drugs, {} targets, {} triples written to {}",
        w.drug_ids.len(),
        w.target_ids.len(),
        w.triples.len(),
        out.display()
    );
    Ok(())
}

fn load_graph(data: &DataArgs, c: &RunConfig) -> Result<mosedti_core::kgraph::KnowledgeGraph> {
    Ok(match data.source()? {
        Source::Synthetic => SyntheticWorld::generate(c.synth)?.knowledge_graph()?,
        Source::Files(p) => io::load_kg(&p.triples, &p.drugs, &p.targets, c.kg)?,
    })
}

fn kg_stats(data: &DataArgs, c: &RunConfig) -> Result<()> {
    let kg = load_graph(data, c)?;
    let filtered = kg.remove_dti_leakage();
    for (label, s) in [("loaded", kg.stats()), ("filtered", filtered.stats())] {
        println!(
            "{label}\tentities={}\trelations={}\ttriples={}\tdrugs={}\ttargets={}\tduplicates_dropped={}\tleakage_removed={}",
            s.entities, s.relations, s.triples, s.drugs, s.targets, s.duplicates_dropped, s.leakage_removed
        );
    }
    Ok(())
}

fn pretrain_kg(data: &DataArgs, c: &RunConfig, out: &Path) -> Result<()> {
    let kg = load_graph(data, c)?;
    let (filtered, emb, removed) = pipeline::embed_graph(&kg, c)?;
    info!(
        "{removed} leaking triples removed; trained {} entities on {} triples",
        emb.entity_ids.len(),
        filtered.triples().len()
    );
    if let Some(last) = emb.loss_trace.last() {
        info!("final epoch loss {last:.6}");
    }
    binfmt::save_embeddings(out, &emb)?;
    Ok(())
}

fn parse_smiles_cmd(mut inputs: Vec<String>, file: Option<&Path>, dump: bool) -> Result<()> {
    let mut labels: Vec<String> = inputs.clone();
    if let Some(p) = file {
        for line in io::read_text(p)?.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let smi = line.rsplit('\t').next().unwrap_or(line).trim().to_string();
            labels.push(line.split('\t').next().unwrap_or(line).to_string());
            inputs.push(smi);
        }
    }
    if inputs.is_empty() {
        bail!("no SMILES given");
    }
    let mut failed = 0;
    for (label, smi) in labels.iter().zip(&inputs) {
        match parse_smiles(smi) {
            Ok(g) => {
                println!("{label}\tatoms={}\tbonds={}", g.atom_count(), g.bond_count());
                for w in &g.warnings {
                    println!("{label}\twarning at byte {}: {}", w.offset, w.message);
                }
                if dump {
                    print!("{}", g.dump());
                }
            }
            Err(e) => {
                failed += 1;
                println!("{label}\terror {:?}: {e}", e.kind);
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} SMILES failed to parse", inputs.len());
    }
    Ok(())
}

/// Catalog for a saved model plus the labeled pairs of its data source.
fn model_catalog(data: &DataArgs, bundle: &binfmt::Bundle) -> Result<(Catalog, Vec<Pair>, Option<Vec<Pair>>)> {
    let c = &bundle.config;
    let ids = &bundle.model.entity_ids;
    let max_len = c.model.cnn.max_len;
    Ok(match data.source()? {
        Source::Synthetic => {
            let w = SyntheticWorld::generate(c.synth)?;
            (w.catalog(ids, max_len)?, w.positives(), Some(w.negatives()))
        }
        Source::Files(p) => {
            let cat = pipeline::file_catalog(&p, ids, max_len)?;
            let (pos, neg) = pipeline::file_labels(&p, &cat)?;
            (cat, pos, neg)
        }
    })
}

fn load_model(path: &Path, data: &DataArgs) -> Result<binfmt::Bundle> {
    let features = match &data.residue_features {
        Some(p) => Some(binfmt::load_residue_features(p)?),
        None => None,
    };
    let b = binfmt::load_bundle(path, features)?;
    if b.config.eval.vary_world && data.source().map(|s| matches!(s, Source::Synthetic)).unwrap_or(false) {
        warn!("the model was trained with eval.vary_world; the base synthetic world is used here");
    }
    Ok(b)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), |v| format!("{v:.6}"))
}

fn predict(model: &Path, data: &DataArgs, pairs: &Path, mode: Availability, out: Option<&Path>) -> Result<()> {
    let bundle = load_model(model, data)?;
    let cat = match data.source()? {
        Source::Synthetic => SyntheticWorld::generate(bundle.config.synth)?.catalog(&bundle.model.entity_ids, bundle.config.model.cnn.max_len)?,
        Source::Files(p) => pipeline::file_catalog(&p, &bundle.model.entity_ids, bundle.config.model.cnn.max_len)?,
    };
    let (resolved, _) = io::resolve_pairs(pairs, &cat, false)?;
    let preds = bundle.model.predict_mixed(&cat, &resolved, mode)?;
    let mut text = String::from("drug\ttarget\tp\tw\tp_ex\tp_in\n");
    let mut unusable = 0;
    for (pair, pred) in resolved.iter().zip(preds) {
        let d = cat.drugs.id(pair.drug);
        let t = cat.targets.id(pair.target);
        match pred {
            Ok(p) => text.push_str(&format!("{d}\t{t}\t{:.6}\t{:.6}\t{}\t{}\n", p.p, p.w, opt(p.p_ex), opt(p.p_in))),
            Err(e) => {
                unusable += 1;
                warn!("{d}\t{t}: {e}");
                text.push_str(&format!("{d}\t{t}\tNA\tNA\tNA\tNA\n"));
            }
        }
    }
    if unusable > 0 {
        warn!("{unusable} pairs have no usable perspective under {}", mode.name());
    }
    match out {
        Some(p) => io::write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn evaluate(model: &Path, data: &DataArgs, seed: u64, shots: Option<usize>, out: Option<&Path>) -> Result<()> {
    let bundle = load_model(model, data)?;
    let c = &bundle.config;
    let shots = shots.or(c.eval.shots.first().copied()).context("no shots given")?;
    let (cat, pos, neg) = model_catalog(data, &bundle)?;
    let dataset = few_shot_split(cat, &pos, neg.as_deref(), shots, seed)?;
    let rows = pipeline::evaluate_model(&bundle.model, &dataset, &c.eval.dataset, seed, &c.eval.availability);
    print_rows(&rows);
    if let Some(p) = out {
        report::write_metrics(p, c, &rows)?;
    }
    Ok(())
}

fn print_rows(rows: &[report::MetricsRow]) {
    for r in rows {
        println!(
            "{}\t{}\tACC={}\tAUC={}\tAUPR={}\t{}",
            r.variant.name(),
            r.availability.name(),
            report::fmt_metric(r.acc),
            report::fmt_metric(r.auc),
            report::fmt_metric(r.aupr),
            r.note
        );
    }
}

fn gradcheck(configurations: usize, seed: u64) -> Result<()> {
    let checks = module_suite(configurations, seed, &GradCheckConfig::default())?;
    let mut failed = false;
    for c in &checks {
        let r = &c.report;
        println!(
            "{}\t{}\tconfigurations={}\tchecked={}\tskipped_kinks={}\tfailures={}\tmax_rel_err={:.3e}",
            if r.passed() { "PASS" } else { "FAIL" },
            c.module,
            c.configurations,
            r.checked,
            r.skipped_kinks,
            r.failures,
            r.max_rel_err
        );
        failed |= !r.passed();
    }
    if failed {
        bail!("gradient check failed");
    }
    Ok(())
}

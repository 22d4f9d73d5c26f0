use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fec_cli::config::ExperimentConfig;
use fec_cli::experiment::{read_jsonl, run_stages, score_corrections, write_training_pairs, EvidenceRecord, Manifest, Stage, CORRECTIONS, EVIDENCE};
use fec_cli::report::{load_metrics, report};
use fec_core::corrector::{CorrectionResult, LabelFilter};
use fec_core::dataset::{load_corpus, load_dataset, write_corpus, write_records, Split};
use fec_core::maskers::MaskStrategy;
use fec_core::metrics::{correlation_report, score_instance, HumanScores, InstanceRow, MeanScores, MetricReport};
use fec_core::text::tokenize;
use fec_core::retrieval::{gold_passage_recall, index_documents, EvidenceMode, InvertedIndex, RetrieveParams, Retriever, DEFAULT_WINDOW};
use fec_core::synth::{synth_generate, LabelMix, ToyWorld};
use fec_eval::{create_batch, AggregateReport, BatchConfig, EvalService, SystemOutput, SystemOutputs};

#[derive(Parser)]
#[command(name = "fec", version, about = "Factual error correction: retrieval, masking, correction and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded toy-world dataset and corpus.
    Synth {
        #[arg(long, default_value_t = 120)]
        entities: usize,
        #[arg(long, default_value_t = 1000)]
        claims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        refutes: f64,
        #[arg(long, default_value_t = 0.0)]
        nei: f64,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Chunk a corpus into passages and build the BM25 index.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve evidence for every claim of a dataset.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        page_fanout: usize,
        #[arg(long, default_value_t = EvidenceMode::Retrieved)]
        evidence: EvidenceMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mask the evaluation split (writes masks, evidence and diagnostics).
    Mask {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write distant-supervision training pairs for the train split.
    GenTrain {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the configured train masker, else the test masker.
        #[arg(long)]
        masker: Option<MaskStrategy>,
        /// Include REFUTES claims as reconstruction targets.
        #[arg(long)]
        include_refutes: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mask and correct the evaluation split.
    Correct {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every stage, scoring included.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score corrections against references: either a corrections file with
    /// the dataset, or three line-aligned text files.
    Score {
        #[arg(long, requires = "corrections", conflicts_with_all = ["source", "output", "reference"])]
        dataset: Option<PathBuf>,
        #[arg(long)]
        corrections: Option<PathBuf>,
        #[arg(long, requires_all = ["output", "reference"])]
        source: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "system")]
        system: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlate metric means with human aggregate scores across systems.
    Correlate {
        /// Experiment directories or metrics.json files.
        #[arg(long, required = true, num_args = 1..)]
        metrics: Vec<PathBuf>,
        /// Aggregate report saved from the eval service.
        #[arg(long)]
        human: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a blind rating batch from experiment directories.
    Batch {
        #[arg(long, required = true, num_args = 1..)]
        run: Vec<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        raters: Vec<String>,
        #[arg(long, default_value_t = 200)]
        sample_per_system: usize,
        #[arg(long, default_value_t = 0.2)]
        double_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the evaluation API for a batch.
    ServeEval {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Compare experiment runs in one SARI table.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Print or check a configuration.
    Config {
        /// Print the effective configuration (defaults if no file is given).
        #[arg(long)]
        dump: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_or_write<T: serde::Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    match out {
        Some(p) => write_json_file(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    Ok(std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?.lines().map(str::to_string).collect())
}

fn score_lines(system: &str, src: &Path, out: &Path, reference: &Path) -> anyhow::Result<MetricReport> {
    let (s, o, r) = (read_lines(src)?, read_lines(out)?, read_lines(reference)?);
    if s.len() != o.len() || s.len() != r.len() {
        bail!("line counts differ: source {}, output {}, reference {}", s.len(), o.len(), r.len());
    }
    let mut rows = Vec::with_capacity(s.len());
    for (i, ((s, o), r)) in s.iter().zip(&o).zip(&r).enumerate() {
        let scores = score_instance(&tokenize(s).tokens, &tokenize(o).tokens, &tokenize(r).tokens).with_context(|| format!("line {}", i + 1))?;
        rows.push(InstanceRow { id: i as u64 + 1, scores });
    }
    Ok(MetricReport::new(system, rows))
}

fn stage(cfg: &ExperimentConfig, until: Stage) -> anyhow::Result<()> {
    match run_stages(cfg, until) {
        Ok(Some(s)) => {
            println!("{}: SARI final {:.4} over {} claims -> {}", s.manifest.system, s.metrics.mean.sari_final, s.diagnostics.evaluated, s.dir.display());
            Ok(())
        }
        Ok(None) => {
            println!("stages through {until} written to {}", cfg.output_path().display());
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { entities, claims, seed, refutes, nei, dataset, corpus } => {
            let world = ToyWorld::new(entities, seed)?;
            let (records, docs) = synth_generate(&world, claims, LabelMix { refutes, nei }, seed)?;
            write_records(BufWriter::new(File::create(&dataset)?), &records)?;
            write_corpus(BufWriter::new(File::create(&corpus)?), &docs)?;
            println!("{} claims over {} pages", records.len(), docs.len());
        }
        Command::Index { corpus, window, out } => {
            let docs = load_corpus(&corpus)?;
            let index = index_documents(&docs, window)?;
            index.save(BufWriter::new(File::create(&out)?))?;
            println!("{} passages from {} pages", index.passage_count(), index.pages.len());
        }
        Command::Retrieve { index, dataset, split, k, page_fanout, evidence, out } => {
            let index = InvertedIndex::load(BufReader::new(File::open(&index).with_context(|| format!("opening {}", index.display()))?))?;
            let records = load_dataset(&dataset, split)?;
            let retriever = Retriever::new(&index, RetrieveParams { k, page_fanout }, evidence);
            let mut w = BufWriter::new(File::create(&out)?);
            for r in &records {
                serde_json::to_writer(&mut w, &EvidenceRecord::new(r.id, &retriever.evidence_for(r)?))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            println!("gold passage in top {k}: {:.3}", gold_passage_recall(&records, &index, k)?);
        }
        Command::Mask { config } => stage(&ExperimentConfig::load(&config)?, Stage::Mask)?,
        Command::Correct { config } => stage(&ExperimentConfig::load(&config)?, Stage::Correct)?,
        Command::Run { config } => stage(&ExperimentConfig::load(&config)?, Stage::Score)?,
        Command::GenTrain { config, masker, include_refutes, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if include_refutes {
                cfg.training.labels = LabelFilter::SupportsAndRefutes;
            }
            let strategy = masker.or(cfg.masking.train_strategy).unwrap_or(cfg.masking.strategy);
            let out = out.unwrap_or_else(|| cfg.output_path().join(fec_cli::experiment::TRAIN_PAIRS));
            let s = write_training_pairs(&cfg, strategy, &out)?;
            println!("{} pairs ({} NOT_ENOUGH_INFO and {} filtered records skipped) -> {}", s.pairs, s.skipped_nei, s.skipped_label, out.display());
        }
        Command::Score { dataset, corrections, source, output, reference, system, out } => {
            let report = match (dataset, corrections, source, output, reference) {
                (Some(dataset), Some(corrections), ..) => {
                    let records = load_dataset(&dataset, None)?;
                    let corr: Vec<CorrectionResult> = read_jsonl(&corrections)?;
                    let ids: std::collections::BTreeSet<u64> = corr.iter().map(|c| c.id).collect();
                    let scored: Vec<_> = records.into_iter().filter(|r| ids.contains(&r.id)).collect();
                    if scored.len() != ids.len() {
                        bail!("{} corrections refer to ids missing from the dataset", ids.len() - scored.len());
                    }
                    score_corrections(&system, &scored, &corr)?
                }
                (_, _, Some(src), Some(outp), Some(refp)) => score_lines(&system, &src, &outp, &refp)?,
                _ => bail!("score needs --dataset with --corrections, or --source, --output and --reference"),
            };
            print_or_write(out.as_deref(), &report)?;
        }
        Command::Correlate { metrics, human, out } => {
            let mut means: Vec<(String, MeanScores)> = Vec::new();
            for m in &metrics {
                let report = if m.is_dir() {
                    load_metrics(m)?
                } else {
                    serde_json::from_str(&std::fs::read_to_string(m)?).with_context(|| format!("parsing {}", m.display()))?
                };
                means.push((report.system, report.mean));
            }
            let agg: AggregateReport = serde_json::from_str(&std::fs::read_to_string(&human)?).with_context(|| format!("parsing {}", human.display()))?;
            let human: Vec<(String, HumanScores)> = agg
                .systems
                .into_iter()
                .map(|s| (s.system_id, HumanScores { intelligible: s.intelligible, supported: s.supported, corrected: s.corrected }))
                .collect();
            let table = correlation_report(&means, &human)?;
            match out {
                Some(p) => write_json_file(&p, &table)?,
                None => print!("{}", table.render()),
            }
        }
        Command::Batch { run, dataset, raters, sample_per_system, double_ratio, seed, out } => {
            let records: BTreeMap<u64, _> = load_dataset(&dataset, None)?.into_iter().map(|r| (r.id, r)).collect();
            let mut systems = Vec::new();
            for dir in &run {
                let manifest = Manifest::load(dir)?;
                let evidence: BTreeMap<u64, EvidenceRecord> = read_jsonl::<EvidenceRecord>(&dir.join(EVIDENCE))?.into_iter().map(|e| (e.id, e)).collect();
                let mut outputs = Vec::new();
                for c in read_jsonl::<CorrectionResult>(&dir.join(CORRECTIONS))? {
                    let record = records.get(&c.id).with_context(|| format!("record {} not in {}", c.id, dataset.display()))?;
                    let ev = evidence.get(&c.id).map(|e| e.passages.iter().map(|p| p.text.clone()).collect()).unwrap_or_default();
                    outputs.push(SystemOutput { instance_id: c.id, claim: record.claim.clone(), evidence: ev, correction: c.correction });
                }
                systems.push(SystemOutputs { system_id: manifest.system, outputs });
            }
            let batch = create_batch(&systems, BatchConfig { sample_per_system, double_ratio, seed }, &raters)?;
            write_json_file(&out, &batch)?;
            println!("{} tasks, {} double-assigned", batch.tasks.len(), batch.double_count());
        }
        Command::ServeEval { batch, store, port, host } => {
            let batch = serde_json::from_str(&std::fs::read_to_string(&batch)?).with_context(|| format!("parsing {}", batch.display()))?;
            let service = EvalService::with_store(&store, batch)?;
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad host or port")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(fec_eval::http::serve(service, addr))?;
        }
        Command::Report { dirs, json } => {
            let table = report(&dirs)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.render());
            }
        }
        Command::Config { dump, config } => {
            let cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => {
                    let mut c = ExperimentConfig::default();
                    c.apply_env()?;
                    c
                }
            };
            if dump {
                print!("{}", cfg.to_toml());
            } else {
                cfg.validate()?;
                println!("config ok ({})", cfg.hash());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line frontend: segmentation, annotation, validation, statistics,
//! supervised warm-up, preference training, evaluation, and iterative
//! rounds.

mod judge;
mod overrides;

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use twodpo_core::annotation::{
    annotate_pair, AnnotateOptions, JudgeClient, JudgeConfig, MockJudge, TemplateSet,
};
use twodpo_core::dataset::{
    dataset_stats, parse_record_lenient, read_dataset, serialize_record, write_dataset,
    PreferencePair, Utterance,
};
use twodpo_core::policy::{checkpoint, sft::SftConfig, PolicyParams, PolicyShape, Vocab};
use twodpo_core::reward::segment_rewards;
use twodpo_core::segmenter::{segment_byte_ranges, segment_response};
use twodpo_core::synthetic::SyntheticScorer;
use twodpo_core::trainer::{self, evaluate::summarize, IterationRound};
use twodpo_core::AspectWeights;

use overrides::ConfigOverrides;

#[derive(Parser)]
#[command(name = "twodpo", about = "Segment-by-aspect preference optimization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split raw text (or unscored pair records) into scoring segments.
    Segment {
        /// Raw text file; the whole file is treated as one response.
        #[arg(long, conflicts_with = "records")]
        text: Option<PathBuf>,
        /// Unscored pair records (`id`, `history`, `chosen`, `rejected` raw
        /// texts), one JSON object per line.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Score unscored pairs with a judge and emit a dataset.
    Annotate {
        /// Unscored pair records, one JSON object per line.
        #[arg(long)]
        input: PathBuf,
        /// Output dataset path.
        #[arg(long)]
        output: PathBuf,
        /// Audit transcripts path (default: `<output>.transcripts.jsonl`).
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Use the deterministic offline judge with this seed.
        #[arg(long, conflicts_with_all = ["endpoint", "model"])]
        mock_seed: Option<u64>,
        /// Chat-completions endpoint URL (API key via TWODPO_JUDGE_API_KEY).
        #[arg(long, requires = "model")]
        endpoint: Option<String>,
        /// Judge model name.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
        #[arg(long, default_value_t = 4)]
        max_in_flight: usize,
        #[arg(long, default_value_t = 2)]
        retry_budget: usize,
        /// Reject pairs whose completeness column decreases instead of
        /// repairing it.
        #[arg(long)]
        no_repair: bool,
        /// Directory with `<aspect>.txt` templates (default: built-in).
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Check every record against the schema invariants.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Score-distribution statistics; optionally dump per-pair selections.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Also write the histogram table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Dump the paired segment selection of every record.
        #[arg(long)]
        selections: bool,
        /// Aspect weights for the selection dump.
        #[arg(long, value_delimiter = ',', num_args = 5)]
        weights: Option<Vec<f64>>,
    },
    /// Supervised warm-up on the dataset's (history, chosen) pairs.
    Sft {
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Preference optimization; writes checkpoint, metrics, resolved config.
    Train {
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Evaluate a trained policy against its reference on a dataset.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Full JSON report path (summary always goes to stdout).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Sample-score-train rounds with a scripted scorer.
    Iterate {
        /// Instruction file: one user prompt per line.
        #[arg(long)]
        instructions: PathBuf,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Unscored input record for `segment --records` and `annotate`.
#[derive(serde::Deserialize)]
struct UnscoredRecord {
    id: String,
    #[serde(default)]
    history: Vec<Utterance>,
    chosen: String,
    rejected: String,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    Ok(BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect())
}

fn print_segments(side: Option<&str>, id: Option<&str>, text: &str) -> Result<()> {
    let segments = segment_response(text)?;
    let offsets = segment_byte_ranges(&segments);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (k, (seg, (start, len, sep_len))) in segments.iter().zip(offsets).enumerate() {
        let mut row = serde_json::json!({
            "index": k,
            "start": start,
            "len": len,
            "sep_len": sep_len,
            "text": seg.text,
        });
        if let (Some(id), Some(side)) = (id, side) {
            row["id"] = serde_json::json!(id);
            row["side"] = serde_json::json!(side);
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn cmd_segment(text: Option<PathBuf>, records: Option<PathBuf>) -> Result<()> {
    match (text, records) {
        (Some(path), None) => {
            let raw = std::fs::read_to_string(&path)?;
            print_segments(None, None, &raw)
        }
        (None, Some(path)) => {
            for line in read_lines(&path)? {
                let record: UnscoredRecord =
                    serde_json::from_str(&line).context("unscored record")?;
                print_segments(Some("chosen"), Some(&record.id), &record.chosen)?;
                print_segments(Some("rejected"), Some(&record.id), &record.rejected)?;
            }
            Ok(())
        }
        _ => bail!("pass exactly one of --text or --records"),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_annotate(
    input: PathBuf,
    output: PathBuf,
    transcripts: Option<PathBuf>,
    mock_seed: Option<u64>,
    endpoint: Option<String>,
    model: Option<String>,
    timeout_secs: u64,
    max_in_flight: usize,
    retry_budget: usize,
    no_repair: bool,
    templates: Option<PathBuf>,
) -> Result<()> {
    let templates = match templates {
        Some(dir) => TemplateSet::from_dir(&dir)?,
        None => TemplateSet::builtin(),
    };
    let client: Box<dyn JudgeClient> = match (mock_seed, endpoint) {
        (Some(seed), None) => Box::new(MockJudge::new(seed)),
        (None, Some(endpoint)) => {
            let config = JudgeConfig {
                endpoint,
                model: model.unwrap_or_default(),
                timeout_secs,
                max_in_flight,
                retry_budget,
            };
            Box::new(judge::HttpJudge::new(config).map_err(anyhow::Error::msg)?)
        }
        _ => bail!("pass either --mock-seed or --endpoint/--model"),
    };
    let opts = AnnotateOptions {
        repair_completeness: !no_repair,
        retry_budget,
        max_in_flight,
    };

    let transcripts_path =
        transcripts.unwrap_or_else(|| output.with_extension("transcripts.jsonl"));
    let mut out_file = std::fs::File::create(&output)?;
    let mut transcript_file = std::fs::File::create(&transcripts_path)?;
    let mut annotated = 0usize;
    for line in read_lines(&input)? {
        let record: UnscoredRecord = serde_json::from_str(&line).context("unscored record")?;
        let chosen_segments = segment_response(&record.chosen)
            .with_context(|| format!("{}: chosen response", record.id))?;
        let rejected_segments = segment_response(&record.rejected)
            .with_context(|| format!("{}: rejected response", record.id))?;
        let (pair, transcript) = annotate_pair(
            &record.id,
            &record.history,
            &chosen_segments,
            &rejected_segments,
            client.as_ref(),
            &templates,
            &opts,
        )
        .with_context(|| format!("annotating {}", record.id))?;
        writeln!(out_file, "{}", serialize_record(&pair))?;
        writeln!(transcript_file, "{}", serde_json::to_string(&transcript)?)?;
        annotated += 1;
    }
    eprintln!(
        "annotated {annotated} pair(s) -> {} (transcripts: {})",
        output.display(),
        transcripts_path.display()
    );
    Ok(())
}

fn cmd_validate(input: PathBuf) -> Result<()> {
    let mut pairs: Vec<PreferencePair> = Vec::new();
    let mut hard_errors = 0usize;
    for (idx, line) in read_lines(&input)?.iter().enumerate() {
        match parse_record_lenient(line) {
            Ok((pair, _)) => pairs.push(pair),
            Err(e) => {
                hard_errors += 1;
                println!("line {}: {e}", idx + 1);
            }
        }
    }
    let reports = twodpo_core::dataset::validate_dataset(&pairs);
    let mut violations = 0usize;
    for (pair, report) in pairs.iter().zip(&reports) {
        for field in pair.unknown_fields() {
            eprintln!("warning: {}: unknown field {field:?} (preserved)", pair.id);
        }
        if !report.is_clean() {
            violations += report.violations.len();
            print!("{report}");
        }
    }
    println!(
        "{} record(s), {} unparsable, {} violation(s)",
        pairs.len() + hard_errors,
        hard_errors,
        violations
    );
    if hard_errors + violations > 0 {
        std::process::exit(1);
    }
    Ok(())
}

fn cmd_stats(
    input: PathBuf,
    csv: Option<PathBuf>,
    selections: bool,
    weights: Option<Vec<f64>>,
) -> Result<()> {
    let file = std::fs::File::open(&input)?;
    let pairs = read_dataset(BufReader::new(file))?;
    let stats = dataset_stats(pairs.iter())?;
    print!("{}", stats.to_text());
    if let Some(path) = csv {
        std::fs::write(&path, stats.to_csv())?;
        eprintln!("wrote {}", path.display());
    }
    if selections {
        let weights = match weights {
            Some(w) => {
                let mut array = [0.0; 5];
                array.copy_from_slice(&w);
                AspectWeights::new(array)?
            }
            None => AspectWeights::default(),
        };
        println!("selections (weights {:?}):", weights.as_array());
        for pair in &pairs {
            let chosen = segment_rewards(&pair.chosen.scores, &weights)?;
            let rejected = segment_rewards(&pair.rejected.scores, &weights)?;
            let selection = twodpo_core::reward::select_segments(&chosen, &rejected)?;
            let rendered: Vec<String> = selection
                .pairs
                .iter()
                .map(|p| {
                    format!(
                        "w[{}]={:.3}<->l[{}]={:.3}",
                        p.chosen_segment, p.chosen_reward, p.rejected_segment, p.rejected_reward
                    )
                })
                .collect();
            println!("{}: N={} {}", pair.id, selection.n(), rendered.join(" "));
        }
    }
    Ok(())
}

fn load_vocab(path: &Path) -> Result<Vocab> {
    let file = std::fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    Vocab::load(BufReader::new(file)).map_err(Into::into)
}

fn cmd_sft(overrides: ConfigOverrides) -> Result<()> {
    let config = overrides.resolve()?;
    let dataset_path = config
        .dataset
        .clone()
        .context("--dataset (or dataset in the config file) is required")?;
    let output_dir = config
        .output_dir
        .clone()
        .context("--output-dir is required")?;
    std::fs::create_dir_all(&output_dir)?;

    let pairs = read_dataset(BufReader::new(std::fs::File::open(&dataset_path)?))?;
    let vocab = match &config.vocab {
        Some(path) => load_vocab(path)?,
        None => {
            // Build from everything the corpus can utter and keep it next to
            // the checkpoint.
            let mut texts: Vec<String> = Vec::new();
            for pair in &pairs {
                texts.push(trainer::prompt_text(&pair.history));
                texts.push(pair.chosen.full_text());
                texts.push(pair.rejected.full_text());
            }
            let vocab = Vocab::build(texts.iter().map(String::as_str));
            let path = output_dir.join("vocab.txt");
            let mut buf = Vec::new();
            vocab.save(&mut buf)?;
            std::fs::write(&path, buf)?;
            eprintln!("built vocabulary ({} tokens) -> {}", vocab.len(), path.display());
            vocab
        }
    };

    let corpus = trainer::sft_corpus(&vocab, &pairs)?;
    let shape = PolicyShape {
        vocab: vocab.len(),
        dim: config.dim,
        hidden: config.hidden,
        window: config.window,
    };
    let sft_config = SftConfig {
        epochs: config.sft_epochs,
        batch_size: config.sft_batch_size,
        learning_rate: config.sft_learning_rate,
        seed: config.seed,
    };
    let init = PolicyParams::init(shape, config.seed);
    let (params, losses) = twodpo_core::policy::sft::sft_train(init, &corpus, &sft_config)?;

    let checkpoint_path = output_dir.join("sft.bin");
    checkpoint::save(&checkpoint_path, &params)?;
    let mut curve = String::from("epoch,mean_nll\n");
    for (epoch, loss) in losses.iter().enumerate() {
        curve.push_str(&format!("{epoch},{loss}\n"));
    }
    std::fs::write(output_dir.join("sft_losses.csv"), curve)?;
    println!(
        "sft: {} sequences, nll {:.4} -> {:.4}, checkpoint {}",
        corpus.len(),
        losses.first().unwrap(),
        losses.last().unwrap(),
        checkpoint_path.display()
    );
    Ok(())
}

fn cmd_train(overrides: ConfigOverrides) -> Result<()> {
    let config = overrides.resolve()?;
    let artifacts = trainer::run(&config)?;
    let last = artifacts.outcome.metrics.last().unwrap();
    println!(
        "trained {} steps ({}): loss {:.4}, margin {:.4}, accuracy {:.3}",
        config.steps,
        config.method.name(),
        last.loss,
        last.reward_margin,
        last.reward_accuracy
    );
    println!("policy:   {}", artifacts.policy_path.display());
    println!("metrics:  {}", artifacts.metrics_path.display());
    println!("config:   {}", artifacts.config_path.display());
    Ok(())
}

fn cmd_evaluate(
    policy: PathBuf,
    reference: PathBuf,
    report_path: Option<PathBuf>,
    overrides: ConfigOverrides,
) -> Result<()> {
    let config = overrides.resolve()?;
    let vocab = load_vocab(config.vocab.as_ref().context("--vocab is required")?)?;
    let dataset_path = config.dataset.clone().context("--dataset is required")?;
    let dataset = read_dataset(BufReader::new(std::fs::File::open(&dataset_path)?))?;
    let params = checkpoint::load(&policy)?;
    let reference = checkpoint::load(&reference)?;
    let report = trainer::evaluate(&params, &reference, &vocab, &dataset, &config)?;
    print!("{}", summarize(&report));
    if let Some(path) = report_path {
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_iterate(instructions: PathBuf, rounds: usize, overrides: ConfigOverrides) -> Result<()> {
    let config = overrides.resolve()?;
    let vocab = load_vocab(config.vocab.as_ref().context("--vocab is required")?)?;
    let output_dir = config
        .output_dir
        .clone()
        .context("--output-dir is required")?;
    let init_path = config
        .init_checkpoint
        .clone()
        .context("--init-checkpoint is required")?;
    let mut params = checkpoint::load(&init_path)?;

    let instruction_set: Vec<Vec<Utterance>> = read_lines(&instructions)?
        .into_iter()
        .map(|line| vec![Utterance::user(line)])
        .collect();
    if instruction_set.is_empty() {
        bail!("no instructions in {}", instructions.display());
    }

    for round_idx in 0..rounds {
        let round = IterationRound {
            index: round_idx,
            instructions: instruction_set.clone(),
            samples_per_instruction: config.samples_per_instruction,
        };
        let outcome = trainer::iterate_round(params, &vocab, &round, &config, &SyntheticScorer)?;
        let round_dir = output_dir.join(format!("round{round_idx}"));
        std::fs::create_dir_all(&round_dir)?;
        let mut buf = Vec::new();
        write_dataset(&mut buf, &outcome.dataset)?;
        std::fs::write(round_dir.join("dataset.jsonl"), buf)?;
        checkpoint::save(&round_dir.join("policy.bin"), &outcome.outcome.params)?;
        std::fs::write(
            round_dir.join("metrics.csv"),
            twodpo_core::trainer::metrics::to_csv(&outcome.outcome.metrics),
        )?;
        let last = outcome.outcome.metrics.last().unwrap();
        println!(
            "round {round_idx}: {} pairs, final margin {:.4}, accuracy {:.3} -> {}",
            outcome.dataset.len(),
            last.reward_margin,
            last.reward_accuracy,
            round_dir.display()
        );
        params = outcome.outcome.params;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment { text, records } => cmd_segment(text, records),
        Command::Annotate {
            input,
            output,
            transcripts,
            mock_seed,
            endpoint,
            model,
            timeout_secs,
            max_in_flight,
            retry_budget,
            no_repair,
            templates,
        } => cmd_annotate(
            input,
            output,
            transcripts,
            mock_seed,
            endpoint,
            model,
            timeout_secs,
            max_in_flight,
            retry_budget,
            no_repair,
            templates,
        ),
        Command::Validate { input } => cmd_validate(input),
        Command::Stats {
            input,
            csv,
            selections,
            weights,
        } => cmd_stats(input, csv, selections, weights),
        Command::Sft { overrides } => cmd_sft(overrides),
        Command::Train { overrides } => cmd_train(overrides),
        Command::Evaluate {
            policy,
            reference,
            report,
            overrides,
        } => cmd_evaluate(policy, reference, report, overrides),
        Command::Iterate {
            instructions,
            rounds,
            overrides,
        } => cmd_iterate(instructions, rounds, overrides),
    }
}

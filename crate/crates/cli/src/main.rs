use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use attrexplain::bleu::{bleu_report, BleuConfig, CandidateMode, ReferenceLength, Smoothing};
use attrexplain::corpus::{
    build_vocabulary, load_caption_dir, Attribute, AttributeExtractor, Lexicon, Vocabulary,
};
use attrexplain::dataset::{load_dataset, write_dataset, Dataset, KeypointMapping};
use attrexplain::explanation::{
    describe_class, explain, explain_all, failure_report, DEFAULT_TOP_K,
};
use attrexplain::grounding::{
    ground, heatmap_peak, pck, pck_baselines, pck_table, DEFAULT_TOP_N_ATTRIBUTES,
};
use attrexplain::inference::{compute_filter_attribute_pdf, FilterAttributePdf};
use attrexplain::retrieval::{retrieval_metrics, retrieve};
use attrexplain::synth::{generate_synthetic, SynthConfig};
use attrexplain::{Error, Result};

#[derive(Parser)]
#[command(
    name = "attrexplain",
    version,
    about = "Attribute-level explanations for CNN classifiers"
)]
struct Cli {
    /// Worker threads for data-parallel stages (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Inputs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    pdf: PathBuf,
    /// Restrict to images of this split (untagged images belong to every split).
    #[arg(long)]
    split: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothingArg {
    None,
    AddOne,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefLengthArg {
    Shortest,
    Closest,
}

#[derive(Clone, Copy, ValueEnum)]
enum CandidateArg {
    Sentence,
    Attributes,
}

#[derive(Subcommand)]
enum Command {
    /// Mine the attribute vocabulary and prior from a directory of `<image_id>.txt` caption files.
    BuildVocab {
        #[arg(long)]
        captions: PathBuf,
        /// Extra `word<TAB>ADJ|NOUN|OTHER` entries layered over the built-in lexicon.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the filter-attribute p.d.f.
    ComputePdf {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Explain images (all, or one with --image) or describe a class (--class without --image).
    Explain {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        image: Option<String>,
        /// Class to explain against (default: the predicted class, else the true class).
        #[arg(long)]
        class: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Write the grounding heatmap of one attribute in one image (PGM + JSON).
    Ground {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        image: String,
        /// Attribute as "adjective noun".
        #[arg(long)]
        attribute: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank images whose explanation contains every query attribute.
    Retrieve {
        #[command(flatten)]
        inputs: Inputs,
        /// Attributes as "adjective noun".
        #[arg(required = true)]
        query: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
    },
    /// PCK (with baselines), retrieval and BLEU reports.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        /// `noun<TAB>keypoint` table.
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed of the random-location baseline.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3])]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_TOP_N_ATTRIBUTES)]
        top_n: usize,
        #[arg(long, default_value_t = 4)]
        bleu_max_n: usize,
        #[arg(long, value_enum, default_value = "add-one")]
        smoothing: SmoothingArg,
        #[arg(long, value_enum, default_value = "shortest")]
        bleu_reference: RefLengthArg,
        #[arg(long, value_enum, default_value = "sentence")]
        bleu_candidate: CandidateArg,
    },
    /// Failure report for misclassified images.
    Report {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        k: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset with planted filter-attribute associations.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        filters: usize,
        #[arg(long, default_value_t = 500)]
        images: usize,
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        mispredicted: usize,
        #[arg(long)]
        no_spatial: bool,
    },
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn parse_attribute(text: &str) -> Result<Attribute> {
    Attribute::parse(text)
        .ok_or_else(|| Error::InvalidArgument(format!("{text:?} is not \"adjective noun\"")))
}

struct Loaded {
    dataset: Dataset,
    vocab: Vocabulary,
    pdf: FilterAttributePdf,
}

fn load(inputs: &Inputs) -> Result<Loaded> {
    let mut dataset = load_dataset(&inputs.manifest)?;
    if let Some(split) = &inputs.split {
        dataset = dataset.select_split(split);
    }
    let vocab = Vocabulary::load(&inputs.vocab)?;
    let pdf = FilterAttributePdf::load(&inputs.pdf, &vocab)?;
    if pdf.n_filters() != dataset.n_filters() {
        return Err(Error::InvalidArgument(format!(
            "p.d.f. has {} filters, dataset has {}",
            pdf.n_filters(),
            dataset.n_filters()
        )));
    }
    Ok(Loaded {
        dataset,
        vocab,
        pdf,
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildVocab {
            captions,
            lexicon,
            out,
        } => {
            let mut lex = Lexicon::builtin();
            if let Some(path) = lexicon {
                lex.extend(Lexicon::from_path(&path)?);
            }
            let docs = load_caption_dir(&captions)?;
            let vocab = build_vocabulary(&docs, &AttributeExtractor::new(lex))?;
            log::info!(
                "{} attributes from {} caption files",
                vocab.len(),
                docs.len()
            );
            vocab.save(&out)
        }
        Command::ComputePdf {
            manifest,
            vocab,
            out,
            split,
        } => {
            let dataset = load_dataset(&manifest)?.select_split(&split);
            let vocab = Vocabulary::load(&vocab)?;
            let pdf = compute_filter_attribute_pdf(&dataset, &vocab)?;
            log::info!(
                "p.d.f. over {} filters x {} attributes from {} images",
                pdf.n_filters(),
                pdf.n_attributes(),
                dataset.len()
            );
            pdf.save(&out, &vocab)
        }
        Command::Explain {
            inputs,
            image,
            class,
            k,
            format,
        } => {
            let l = load(&inputs)?;
            let explanations = match (image, class) {
                (Some(id), class) => {
                    let img = l.dataset.image(&id)?;
                    let m = class.unwrap_or(img.predicted_class.unwrap_or(img.true_class));
                    vec![explain(&l.dataset, &l.vocab, &l.pdf, &id, m, k)?]
                }
                (None, Some(m)) => vec![describe_class(&l.dataset, &l.vocab, &l.pdf, m, k)?],
                (None, None) => explain_all(&l.dataset, &l.vocab, &l.pdf, k)?,
            };
            match format {
                Format::Json => print!("{}", to_json(&explanations)),
                Format::Text => {
                    for e in &explanations {
                        println!("{}\t{}", e.image_id.as_deref().unwrap_or("-"), e.sentence);
                    }
                }
            }
            Ok(())
        }
        Command::Ground {
            inputs,
            image,
            attribute,
            out,
        } => {
            let l = load(&inputs)?;
            let attr = parse_attribute(&attribute)?;
            let heat = ground(&l.dataset, &l.vocab, &l.pdf, &image, &attr)?;
            let img = l.dataset.image(&image)?;
            let stem = format!("{image}_{}", attr.canonical().replace(' ', "_"));
            fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
            heat.save_pgm(out.join(format!("{stem}.pgm")))?;
            let peak = heatmap_peak(&heat, img.image_size).ok();
            let json = serde_json::json!({
                "image_id": image,
                "attribute": attr.canonical(),
                "image_size": [img.image_size.0, img.image_size.1],
                "grid": [heat.height(), heat.width()],
                "peak": peak.map(|(x, y)| [x, y]),
                "values": heat.grid.data(),
            });
            write_file(&out.join(format!("{stem}.json")), to_json(&json))?;
            println!(
                "{}",
                to_json(&serde_json::json!({ "peak": peak.map(|(x, y)| [x, y]) })).trim_end()
            );
            Ok(())
        }
        Command::Retrieve { inputs, query, k } => {
            let l = load(&inputs)?;
            let query: Vec<Attribute> = query
                .iter()
                .map(|q| parse_attribute(q))
                .collect::<Result<_>>()?;
            let explanations = explain_all(&l.dataset, &l.vocab, &l.pdf, k)?;
            print!("{}", to_json(&retrieve(&explanations, &l.vocab, &query)));
            Ok(())
        }
        Command::Evaluate {
            inputs,
            mapping,
            out,
            seed,
            k,
            alphas,
            top_n,
            bleu_max_n,
            smoothing,
            bleu_reference,
            bleu_candidate,
        } => {
            let l = load(&inputs)?;
            let mapping = KeypointMapping::load(&mapping)?;
            let ours = pck(&l.dataset, &l.vocab, &l.pdf, &mapping, &alphas, top_n)?;
            let (random, constant) =
                pck_baselines(&l.dataset, &l.vocab, &mapping, &alphas, top_n, seed)?;
            let explanations = explain_all(&l.dataset, &l.vocab, &l.pdf, k)?;
            let retrieval = retrieval_metrics(&explanations, &l.vocab, top_n);
            let config = BleuConfig {
                max_n: bleu_max_n,
                smoothing: match smoothing {
                    SmoothingArg::None => Smoothing::None,
                    SmoothingArg::AddOne => Smoothing::AddOne,
                },
                reference_length: match bleu_reference {
                    RefLengthArg::Shortest => ReferenceLength::Shortest,
                    RefLengthArg::Closest => ReferenceLength::Closest,
                },
            };
            let mode = match bleu_candidate {
                CandidateArg::Sentence => CandidateMode::Sentence,
                CandidateArg::Attributes => CandidateMode::Attributes,
            };
            let captions = l.dataset.load_captions()?;
            let bleu = match bleu_report(&l.dataset, &explanations, &captions, &config, mode) {
                Ok(r) => Some(r),
                Err(Error::NoPredictions) => {
                    log::warn!("no predicted classes in the manifest; skipping BLEU");
                    None
                }
                Err(e) => return Err(e),
            };

            write_file(&out.join("pck.json"), to_json(&[&ours, &random, &constant]))?;
            write_file(&out.join("retrieval.json"), to_json(&retrieval))?;
            if let Some(b) = &bleu {
                write_file(&out.join("bleu.json"), to_json(b))?;
            }
            let mut tables = pck_table(&[&ours, &constant, &random]);
            tables.push('\n');
            tables.push_str(&retrieval.to_table());
            if let Some(b) = &bleu {
                tables.push('\n');
                tables.push_str(&b.to_table());
            }
            write_file(&out.join("summary.txt"), &tables)?;
            eprint!("{tables}");
            print!(
                "{}",
                to_json(&serde_json::json!({
                    "pck": [&ours, &random, &constant],
                    "retrieval": &retrieval,
                    "bleu": &bleu,
                }))
            );
            Ok(())
        }
        Command::Report {
            inputs,
            k,
            format,
            out,
        } => {
            let l = load(&inputs)?;
            let report = failure_report(&l.dataset, &l.vocab, &l.pdf, k)?;
            let text = match format {
                Format::Json => {
                    let mut s = report.to_json();
                    s.push('\n');
                    s
                }
                Format::Text => report.to_text(&l.dataset),
            };
            match out {
                Some(path) => write_file(&path, text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Synth {
            out,
            seed,
            filters,
            images,
            classes,
            mispredicted,
            no_spatial,
        } => {
            let mut config = SynthConfig::new(filters, filters, images, classes, seed);
            config.n_mispredicted = mispredicted;
            config.with_spatial = !no_spatial;
            let data = generate_synthetic(&config)?;
            let manifest = write_dataset(&out, &data.dataset, &data.captions)?;
            write_file(&out.join("keypoint_map.tsv"), data.mapping.to_tsv())?;
            write_file(&out.join("planted.json"), to_json(&data.planted))?;
            log::info!("wrote {}", manifest.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::error!("cannot configure {n} workers: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lexaug::align::{align_corpus, AlignedCorpus, AlignmentMatrix, Model1, TranslationTable};
use lexaug::decoder::{decode_corpus, format_nbest, DecodeParams, Decoder, FeatureWeights};
use lexaug::eval::{bleu, oov_count, OovMode};
use lexaug::io;
use lexaug::lexicon::{filter_list, CorpusIndex, FilterMode};
use lexaug::lm::{train_lm, NGramModel};
use lexaug::morphgen::{
    augment_lexicon, default_paradigms, format_lexicon, parse_lexicon, parse_paradigms, ArticlePolicy,
};
use lexaug::par::Exec;
use lexaug::phrase::{build_phrase_table, PhraseTable, DEFAULT_MAX_PHRASE_LEN};
use lexaug::pipeline::{run_experiment, Stage};
use lexaug::textprep::{clean_reason, split, tokenize, CleanParams, SentencePair};
use lexaug::tune::{format_trace, mert, DevDecoder, MertParams};

#[derive(Parser)]
#[command(
    name = "lexaug",
    version,
    about = "Phrase-based SMT with morphologically augmented lexicons"
)]
struct Cli {
    /// Worker threads; 1 runs every stage sequentially, 0 uses all cores.
    #[arg(long, short = 'j', global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize raw text, one sentence per line.
    Tokenize(InOut),
    /// Drop empty, over-long and badly length-mismatched sentence pairs.
    Clean(CleanArgs),
    /// Add case-inflected forms of lexicon entries.
    Augment(AugmentArgs),
    /// Keep only list entries that add source coverage to a corpus.
    Filter(FilterArgs),
    /// Train a back-off n-gram language model and write it as ARPA.
    TrainLm(TrainLmArgs),
    /// Word-align a parallel corpus in both directions and symmetrize.
    Align(AlignArgs),
    /// Extract and score a phrase table from an aligned corpus.
    Phrases(PhrasesArgs),
    /// Tune feature weights on a dev set with MERT.
    Tune(TuneArgs),
    /// Translate tokenized sentences.
    Translate(TranslateArgs),
    /// Corpus BLEU, plus OOV counts when a phrase table is given.
    Evaluate(EvaluateArgs),
    /// Run a full experiment from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct InOut {
    #[arg(long = "in")]
    input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Parallel {
    /// Tokenized source side.
    #[arg(long)]
    src: PathBuf,
    /// Tokenized target side.
    #[arg(long)]
    tgt: PathBuf,
}

#[derive(Args)]
struct CleanArgs {
    #[command(flatten)]
    corpus: Parallel,
    #[arg(long)]
    out_src: PathBuf,
    #[arg(long)]
    out_tgt: PathBuf,
    #[arg(long, default_value_t = 80)]
    max_len: usize,
    #[arg(long, default_value_t = 9.0)]
    max_ratio: f64,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    io: InOut,
    /// Paradigm TSV; the built-in Sinhala noun paradigms otherwise.
    #[arg(long)]
    paradigms: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    io: InOut,
    #[command(flatten)]
    corpus: Parallel,
    #[arg(long, default_value = "token")]
    mode: FilterMode,
    /// Per-entry keep/remove decisions as TSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TrainLmArgs {
    #[command(flatten)]
    io: InOut,
    #[arg(long, default_value_t = 3)]
    order: usize,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    corpus: Parallel,
    /// Directory for the alignment and both translation tables.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
}

#[derive(Args)]
struct PhrasesArgs {
    #[command(flatten)]
    corpus: Parallel,
    /// Directory written by `align`.
    #[arg(long)]
    alignment: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_PHRASE_LEN)]
    max_len: usize,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    lm: PathBuf,
    #[arg(long, default_value_t = 100)]
    stack_size: usize,
    /// Maximum jump; negative means unlimited.
    #[arg(long, default_value_t = 6, allow_negative_numbers = true)]
    distortion_limit: i64,
}

impl ModelArgs {
    fn load(&self) -> Result<(PhraseTable, NGramModel, DecodeParams)> {
        let table = PhraseTable::parse(&io::read_to_string(&self.table)?, &self.table.display().to_string())?;
        let lm = NGramModel::from_arpa(&io::read_to_string(&self.lm)?, &self.lm.display().to_string())?;
        let params = DecodeParams {
            stack_size: self.stack_size,
            distortion_limit: usize::try_from(self.distortion_limit).ok(),
            ..DecodeParams::default()
        };
        Ok((table, lm, params))
    }
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    dev_src: PathBuf,
    #[arg(long)]
    dev_ref: PathBuf,
    /// Tuned weights.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    nbest: usize,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TranslateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    io: InOut,
    /// Default weights when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Per-sentence passthrough count and tokens.
    #[arg(long)]
    oov_out: Option<PathBuf>,
    /// Write n-best lists instead of single translations.
    #[arg(long)]
    nbest: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Source side, for OOV counts against --table.
    #[arg(long, requires = "table")]
    src: Option<PathBuf>,
    #[arg(long, requires = "src")]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory; `runs/<id>` next to the config otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resume from this stage, reusing earlier outputs.
    #[arg(long, default_value = "clean")]
    from_stage: Stage,
}

fn emit(out: Option<&Path>, text: String) -> Result<()> {
    match out {
        Some(p) => io::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn lines_out(lines: impl IntoIterator<Item = String>) -> String {
    lines.into_iter().map(|l| l + "\n").collect()
}

fn read_sents(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(io::read_lines(path)?.iter().map(|l| split(l)).collect())
}

fn read_pairs(corpus: &Parallel) -> Result<Vec<SentencePair>> {
    Ok(io::read_parallel(&corpus.src, &corpus.tgt)?
        .iter()
        .map(|(s, t)| SentencePair::from_lines(s, t))
        .collect())
}

fn read_weights(path: Option<&Path>) -> Result<FeatureWeights> {
    Ok(match path {
        Some(p) => FeatureWeights::parse(&io::read_to_string(p)?, &p.display().to_string())?,
        None => FeatureWeights::default(),
    })
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.jobs == 1 {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    if cli.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Tokenize(a) => {
            let lines = io::read_lines(&a.input)?;
            emit(a.out.as_deref(), lines_out(lines.iter().map(|l| tokenize(l).join(" "))))
        }
        Command::Clean(a) => {
            let pairs = read_pairs(&a.corpus)?;
            let params = CleanParams {
                max_len: a.max_len,
                max_ratio: a.max_ratio,
            };
            let mut removed = 0;
            let (mut src, mut tgt) = (Vec::new(), Vec::new());
            for p in &pairs {
                if clean_reason(p, &params).is_some() {
                    removed += 1;
                    continue;
                }
                src.push(p.source.join(" "));
                tgt.push(p.target.join(" "));
            }
            io::write_lines(&a.out_src, &src)?;
            io::write_lines(&a.out_tgt, &tgt)?;
            eprintln!("kept {} of {} pairs ({removed} removed)", src.len(), pairs.len());
            Ok(())
        }
        Command::Augment(a) => {
            let paradigms = match &a.paradigms {
                Some(p) => parse_paradigms(&io::read_to_string(p)?, &p.display().to_string())?,
                None => default_paradigms(),
            };
            let lex = parse_lexicon(&io::read_to_string(&a.io.input)?, &a.io.input.display().to_string())?;
            let (out, report) = augment_lexicon(&lex, &paradigms, ArticlePolicy::default(), exec);
            eprintln!("{report}");
            emit(a.io.out.as_deref(), format_lexicon(&out))
        }
        Command::Filter(a) => {
            let train = read_pairs(&a.corpus)?;
            let index = CorpusIndex::new(&train);
            let lex = parse_lexicon(&io::read_to_string(&a.io.input)?, &a.io.input.display().to_string())?;
            let (kept, report) = filter_list(&lex, &index, a.mode, exec);
            eprintln!("{report}");
            if let Some(p) = &a.report {
                io::write(p, report.to_tsv())?;
            }
            emit(a.io.out.as_deref(), format_lexicon(&kept))
        }
        Command::TrainLm(a) => {
            let lm = train_lm(&read_sents(&a.io.input)?, a.order, exec)?;
            emit(a.io.out.as_deref(), lm.to_arpa())
        }
        Command::Align(a) => {
            let pairs = read_pairs(&a.corpus)?;
            let aligned = align_corpus(&pairs, a.iterations, exec)?;
            io::write_lines(
                &a.out.join("aligned.grow-diag-final-and"),
                aligned.alignments.iter().map(|m| m.to_string()),
            )?;
            io::write(&a.out.join("t-src-given-tgt.txt"), aligned.fwd.table.to_text())?;
            io::write(&a.out.join("t-tgt-given-src.txt"), aligned.rev.table.to_text())?;
            Ok(())
        }
        Command::Phrases(a) => {
            let pairs = read_pairs(&a.corpus)?;
            let table = |name: &str| -> Result<Model1> {
                let p = a.alignment.join(name);
                Ok(Model1 {
                    table: TranslationTable::parse(&io::read_to_string(&p)?, &p.display().to_string())?,
                    log_likelihood: Vec::new(),
                })
            };
            let links = io::read_lines(&a.alignment.join("aligned.grow-diag-final-and"))?;
            if links.len() != pairs.len() {
                bail!("{} alignments for {} sentence pairs", links.len(), pairs.len());
            }
            let alignments = links
                .iter()
                .zip(&pairs)
                .enumerate()
                .map(|(i, (l, p))| {
                    AlignmentMatrix::parse(l, p.source.len(), p.target.len())
                        .map_err(|m| anyhow::anyhow!("alignment line {}: {m}", i + 1))
                })
                .collect::<Result<Vec<_>>>()?;
            let aligned = AlignedCorpus {
                fwd: table("t-src-given-tgt.txt")?,
                rev: table("t-tgt-given-src.txt")?,
                alignments,
            };
            let pt = build_phrase_table(&pairs, &aligned, a.max_len, exec);
            io::write(&a.out, pt.to_text())?;
            Ok(())
        }
        Command::Tune(a) => {
            let (table, lm, params) = a.model.load()?;
            let sources = read_sents(&a.dev_src)?;
            let refs = read_sents(&a.dev_ref)?;
            if sources.len() != refs.len() {
                bail!("dev source has {} lines, references {}", sources.len(), refs.len());
            }
            let dec = DevDecoder {
                table: &table,
                lm: &lm,
                params,
                sources: &sources,
                exec,
            };
            let mp = MertParams {
                nbest: a.nbest,
                max_iterations: a.iterations,
                restarts: a.restarts,
                seed: a.seed,
                ..MertParams::default()
            };
            let res = mert(&refs, FeatureWeights::default(), &dec, &mp)?;
            let trace = format_trace(&res.trace);
            eprint!("{trace}");
            if let Some(p) = &a.trace {
                io::write(p, trace)?;
            }
            io::write(&a.out, res.weights.to_text())?;
            Ok(())
        }
        Command::Translate(a) => {
            let (table, lm, params) = a.model.load()?;
            let weights = read_weights(a.weights.as_deref())?;
            let sources = read_sents(&a.io.input)?;
            let dec = Decoder::new(&table, &lm, weights, params);
            let lists = decode_corpus(&dec, &sources, a.nbest.unwrap_or(1), exec);
            let text = match a.nbest {
                Some(_) => lists.iter().enumerate().map(|(i, l)| format_nbest(i, l)).collect(),
                None => lines_out(lists.iter().map(|l| l[0].text())),
            };
            if let Some(p) = &a.oov_out {
                io::write_lines(
                    p,
                    lists.iter().map(|l| {
                        let t = &l[0];
                        let words: Vec<&str> = t
                            .tokens
                            .iter()
                            .zip(&t.oov)
                            .filter(|(_, &o)| o)
                            .map(|(w, _)| w.as_str())
                            .collect();
                        format!("{}\t{}", words.len(), words.join(" "))
                    }),
                )?;
            }
            emit(a.io.out.as_deref(), text)
        }
        Command::Evaluate(a) => {
            let score = bleu(&read_sents(&a.hyp)?, &read_sents(&a.reference)?)?;
            println!("{score}");
            if let (Some(src), Some(table)) = (&a.src, &a.table) {
                let src = read_sents(src)?;
                let table = PhraseTable::parse(&io::read_to_string(table)?, &table.display().to_string())?;
                println!(
                    "OOV tokens = {}, OOV types = {}",
                    oov_count(&src, &table, OovMode::Tokens),
                    oov_count(&src, &table, OovMode::Types)
                );
            }
            Ok(())
        }
        Command::Run(a) => {
            let row = run_experiment(&a.config, a.out.as_deref(), a.from_stage, exec)?;
            println!("{}\n{row}", lexaug::eval::ScoreRow::HEADER);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already print their cause; only add new information
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

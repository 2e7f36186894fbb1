//! End-to-end experiment runner. Every stage reads its inputs from the run
//! directory and writes its outputs there, so a run resumed from any stage
//! produces the same files as a full run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::align::{AlignedCorpus, AlignmentMatrix, Model1, TranslationTable};
use crate::config::ExperimentConfig;
use crate::decoder::{decode_corpus, Decoder, FeatureWeights};
use crate::error::{Error, Result};
use crate::eval::{bleu, oov_count, OovMode, ScoreRow};
use crate::io;
use crate::lexicon::{filter_list, integrate, CorpusIndex};
use crate::lm::{train_lm, NGramModel};
use crate::morphgen::{
    augment_lexicon, default_paradigms, format_lexicon, parse_lexicon, parse_paradigms, ArticlePolicy, LexiconEntry,
};
use crate::par::Exec;
use crate::phrase::{build_phrase_table, PhraseTable};
use crate::textprep::{clean_reason, tokenize, SentencePair, TruecaseModel};
use crate::tune::{format_trace, mert, DevDecoder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Clean = 1,
    Lists,
    Align,
    Phrases,
    Lm,
    Tune,
    Decode,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Clean,
        Stage::Lists,
        Stage::Align,
        Stage::Phrases,
        Stage::Lm,
        Stage::Tune,
        Stage::Decode,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Clean => "clean",
            Stage::Lists => "lists",
            Stage::Align => "align",
            Stage::Phrases => "phrases",
            Stage::Lm => "lm",
            Stage::Tune => "tune",
            Stage::Decode => "decode",
            Stage::Eval => "eval",
        }
    }

    /// Run-directory subfolder, e.g. `03_align`.
    pub fn dir(self) -> String {
        format!("{:02}_{}", self as u8, self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const REPORT_FILE: &str = "08_eval/report.tsv";

pub struct Pipeline<'a> {
    pub config: &'a ExperimentConfig,
    pub run_dir: PathBuf,
    pub exec: Exec,
}

/// Tokenized source and target sides of a corpus.
type Sides = (Vec<Vec<String>>, Vec<Vec<String>>);

fn tokenize_all(lines: &[String]) -> Vec<Vec<String>> {
    lines.iter().map(|l| tokenize(l)).collect()
}

fn join_lines(sents: &[Vec<String>]) -> Vec<String> {
    sents.iter().map(|s| s.join(" ")).collect()
}

fn split_lines(lines: Vec<String>) -> Vec<Vec<String>> {
    lines.iter().map(|l| crate::textprep::split(l)).collect()
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a ExperimentConfig, run_dir: impl Into<PathBuf>, exec: Exec) -> Self {
        Pipeline {
            config,
            run_dir: run_dir.into(),
            exec,
        }
    }

    fn path(&self, stage: Stage, file: &str) -> PathBuf {
        self.run_dir.join(stage.dir()).join(file)
    }

    fn read_sents(&self, stage: Stage, file: &str) -> Result<Vec<Vec<String>>> {
        Ok(split_lines(io::read_lines(&self.path(stage, file))?))
    }

    fn write_sents(&self, stage: Stage, file: &str, sents: &[Vec<String>]) -> Result<()> {
        io::write_lines(&self.path(stage, file), join_lines(sents))
    }

    fn read_pairs(&self, stage: Stage, prefix: &str) -> Result<Vec<SentencePair>> {
        let src = self.read_sents(stage, &format!("{prefix}.src"))?;
        let tgt = self.read_sents(stage, &format!("{prefix}.tgt"))?;
        if src.len() != tgt.len() {
            return Err(Error::InvalidArgument(format!(
                "{}: {prefix}.src and {prefix}.tgt differ in length",
                stage.dir()
            )));
        }
        Ok(src
            .into_iter()
            .zip(tgt)
            .map(|(s, t)| SentencePair::new(s, t, crate::textprep::Origin::Corpus))
            .collect())
    }

    /// Runs `from` and every later stage, then writes the manifest.
    pub fn run(&self, from: Stage) -> Result<ScoreRow> {
        for stage in Stage::ALL.into_iter().filter(|&s| s >= from) {
            self.run_stage(stage)?;
        }
        self.write_manifest()?;
        self.read_report()
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Clean => self.clean(),
            Stage::Lists => self.lists(),
            Stage::Align => self.align(),
            Stage::Phrases => self.phrases(),
            Stage::Lm => self.lm(),
            Stage::Tune => self.tune(),
            Stage::Decode => self.decode(),
            Stage::Eval => self.eval(),
        }
    }

    fn clean(&self) -> Result<()> {
        let cfg = self.config;
        let dir = cfg.direction;
        let load = |c: &crate::config::Corpus| -> Result<Sides> {
            let rows = io::read_parallel(&c.source, &c.target)?;
            let (s, t): (Vec<String>, Vec<String>) = rows.into_iter().unzip();
            Ok((tokenize_all(&s), tokenize_all(&t)))
        };
        let (train_s, train_t) = load(&cfg.train)?;
        let (dev_s, dev_t) = load(&cfg.dev)?;
        let (test_s, test_t) = load(&cfg.test)?;

        let english = if dir.source.is_cased() { &train_s } else { &train_t };
        let model = TruecaseModel::train(english.iter().map(Vec::as_slice));
        let case = |sents: Vec<Vec<String>>, cased: bool| -> Vec<Vec<String>> {
            if cased {
                sents.iter().map(|s| model.apply(s)).collect()
            } else {
                sents
            }
        };
        let (sc, tc) = (dir.source.is_cased(), dir.target.is_cased());
        let train: Vec<SentencePair> = case(train_s, sc)
            .into_iter()
            .zip(case(train_t, tc))
            .map(|(s, t)| SentencePair::new(s, t, crate::textprep::Origin::Corpus))
            .collect();
        let mut kept = Vec::new();
        let mut counts = [0usize; 3];
        for p in &train {
            match clean_reason(p, &cfg.clean) {
                None => kept.push(p.clone()),
                Some(r) => counts[r as usize] += 1,
            }
        }
        let st = Stage::Clean;
        let (ks, kt): (Vec<_>, Vec<_>) = kept.into_iter().map(|p| (p.source, p.target)).unzip();
        self.write_sents(st, "train.src", &ks)?;
        self.write_sents(st, "train.tgt", &kt)?;
        self.write_sents(st, "dev.src", &case(dev_s, sc))?;
        self.write_sents(st, "dev.tgt", &case(dev_t, tc))?;
        self.write_sents(st, "test.src", &case(test_s, sc))?;
        self.write_sents(st, "test.tgt", &case(test_t, tc))?;
        let log = format!(
            "input\t{}\nkept\t{}\nremoved_empty\t{}\nremoved_too_long\t{}\nremoved_ratio\t{}\n",
            train.len(),
            ks.len(),
            counts[0],
            counts[1],
            counts[2]
        );
        io::write(&self.path(st, "clean.log"), log)
    }

    fn lists(&self) -> Result<()> {
        let cfg = self.config;
        let st = Stage::Lists;
        let train = self.read_pairs(Stage::Clean, "train")?;
        let index = CorpusIndex::new(&train);
        let paradigms = match &cfg.paradigms {
            Some(p) => parse_paradigms(&io::read_to_string(p)?, &p.display().to_string())?,
            None => default_paradigms(),
        };
        let mut entries: Vec<LexiconEntry> = Vec::new();
        for list in &cfg.lists {
            let mut lex = parse_lexicon(&io::read_to_string(&list.path)?, &list.path.display().to_string())?;
            if list.augment {
                let (aug, report) = augment_lexicon(&lex, &paradigms, ArticlePolicy::default(), self.exec);
                io::write(
                    &self.path(st, &format!("{}.augment.txt", list.name)),
                    format!("{report}\n"),
                )?;
                lex = aug;
            }
            // list terms go through the same tokenizer as the corpus
            for e in lex.iter_mut() {
                e.source = tokenize(&e.source_text());
                e.target = tokenize(&e.target_text());
                if cfg.direction.english_source() {
                    std::mem::swap(&mut e.source, &mut e.target);
                }
            }
            if let Some(mode) = list.filter {
                let (kept, report) = filter_list(&lex, &index, mode, self.exec);
                io::write(&self.path(st, &format!("{}.filter.tsv", list.name)), report.to_tsv())?;
                lex = kept;
            }
            io::write(&self.path(st, &format!("{}.tsv", list.name)), format_lexicon(&lex))?;
            entries.extend(lex);
        }
        let merged = integrate(&train, &entries);
        let (s, t): (Vec<_>, Vec<_>) = merged.into_iter().map(|p| (p.source, p.target)).unzip();
        self.write_sents(st, "train.src", &s)?;
        self.write_sents(st, "train.tgt", &t)
    }

    fn align(&self) -> Result<()> {
        let st = Stage::Align;
        let pairs = self.read_pairs(Stage::Lists, "train")?;
        let aligned = crate::align::align_corpus(&pairs, self.config.align_iterations, self.exec)?;
        io::write_lines(
            &self.path(st, "aligned.grow-diag-final-and"),
            aligned.alignments.iter().map(|a| a.to_string()),
        )?;
        io::write(&self.path(st, "t-src-given-tgt.txt"), aligned.fwd.table.to_text())?;
        io::write(&self.path(st, "t-tgt-given-src.txt"), aligned.rev.table.to_text())?;
        let ll: Vec<String> = aligned
            .fwd
            .log_likelihood
            .iter()
            .zip(&aligned.rev.log_likelihood)
            .enumerate()
            .map(|(i, (f, r))| format!("{i}\t{f:.6}\t{r:.6}"))
            .collect();
        io::write_lines(&self.path(st, "loglik.tsv"), ll)
    }

    fn phrases(&self) -> Result<()> {
        let pairs = self.read_pairs(Stage::Lists, "train")?;
        let a = Stage::Align;
        let table = |f: &str| -> Result<TranslationTable> {
            let p = self.path(a, f);
            TranslationTable::parse(&io::read_to_string(&p)?, &p.display().to_string())
        };
        let align_path = self.path(a, "aligned.grow-diag-final-and");
        let lines = io::read_lines(&align_path)?;
        if lines.len() != pairs.len() {
            return Err(Error::InvalidArgument(format!(
                "{}: one alignment per pair expected",
                align_path.display()
            )));
        }
        let mut alignments = Vec::with_capacity(pairs.len());
        for (i, (line, p)) in lines.iter().zip(&pairs).enumerate() {
            let a = AlignmentMatrix::parse(line, p.source.len(), p.target.len())
                .map_err(|m| Error::parse(align_path.display().to_string(), i + 1, m))?;
            alignments.push(a);
        }
        let aligned = AlignedCorpus {
            fwd: Model1 {
                table: table("t-src-given-tgt.txt")?,
                log_likelihood: Vec::new(),
            },
            rev: Model1 {
                table: table("t-tgt-given-src.txt")?,
                log_likelihood: Vec::new(),
            },
            alignments,
        };
        let pt = build_phrase_table(&pairs, &aligned, self.config.max_phrase_len, self.exec);
        io::write(&self.path(Stage::Phrases, "phrase-table.txt"), pt.to_text())
    }

    fn lm(&self) -> Result<()> {
        let target = self.read_sents(Stage::Clean, "train.tgt")?;
        let lm = train_lm(&target, self.config.lm_order, self.exec)?;
        io::write(&self.path(Stage::Lm, "lm.arpa"), lm.to_arpa())
    }

    fn models(&self) -> Result<(PhraseTable, NGramModel)> {
        let pt = self.path(Stage::Phrases, "phrase-table.txt");
        let lm = self.path(Stage::Lm, "lm.arpa");
        Ok((
            PhraseTable::parse(&io::read_to_string(&pt)?, &pt.display().to_string())?,
            NGramModel::from_arpa(&io::read_to_string(&lm)?, &lm.display().to_string())?,
        ))
    }

    fn weights(&self) -> Result<FeatureWeights> {
        let p = self.path(Stage::Tune, "weights.txt");
        FeatureWeights::parse(&io::read_to_string(&p)?, &p.display().to_string())
    }

    fn tune(&self) -> Result<()> {
        let st = Stage::Tune;
        let (table, lm) = self.models()?;
        if !self.config.tune {
            io::write(&self.path(st, "trace.tsv"), format_trace(&[]))?;
            return io::write(&self.path(st, "weights.txt"), FeatureWeights::default().to_text());
        }
        let sources = self.read_sents(Stage::Clean, "dev.src")?;
        let refs = self.read_sents(Stage::Clean, "dev.tgt")?;
        let dec = DevDecoder {
            table: &table,
            lm: &lm,
            params: self.config.decode,
            sources: &sources,
            exec: self.exec,
        };
        let res = mert(&refs, FeatureWeights::default(), &dec, &self.config.mert)?;
        io::write(&self.path(st, "trace.tsv"), format_trace(&res.trace))?;
        io::write(&self.path(st, "weights.txt"), res.weights.to_text())
    }

    fn decode(&self) -> Result<()> {
        let st = Stage::Decode;
        let (table, lm) = self.models()?;
        let weights = self.weights()?;
        let sources = self.read_sents(Stage::Clean, "test.src")?;
        let dec = Decoder::new(&table, &lm, weights, self.config.decode);
        let out = decode_corpus(&dec, &sources, 1, self.exec);
        let best: Vec<_> = out.into_iter().map(|mut l| l.swap_remove(0)).collect();
        io::write_lines(&self.path(st, "test.out"), best.iter().map(|t| t.text()))?;
        io::write_lines(
            &self.path(st, "test.oov"),
            best.iter().map(|t| {
                let words: Vec<&str> = t
                    .tokens
                    .iter()
                    .zip(&t.oov)
                    .filter(|(_, &o)| o)
                    .map(|(w, _)| w.as_str())
                    .collect();
                format!("{}\t{}", words.len(), words.join(" "))
            }),
        )
    }

    fn eval(&self) -> Result<()> {
        let st = Stage::Eval;
        let hyps = self.read_sents(Stage::Decode, "test.out")?;
        let refs = self.read_sents(Stage::Clean, "test.tgt")?;
        let srcs = self.read_sents(Stage::Clean, "test.src")?;
        let pt = self.path(Stage::Phrases, "phrase-table.txt");
        let table = PhraseTable::parse(&io::read_to_string(&pt)?, &pt.display().to_string())?;
        let score = bleu(&hyps, &refs)?;
        let row = ScoreRow {
            config_id: self.config.id.clone(),
            direction: self.config.direction.to_string(),
            bleu: score.score,
            oov_tokens: oov_count(&srcs, &table, OovMode::Tokens),
            oov_types: oov_count(&srcs, &table, OovMode::Types),
        };
        io::write(&self.path(st, "bleu.txt"), format!("{score}\n"))?;
        io::write(
            &self.run_dir.join(REPORT_FILE),
            format!("{}\n{row}\n", ScoreRow::HEADER),
        )
    }

    pub fn read_report(&self) -> Result<ScoreRow> {
        let path = self.run_dir.join(REPORT_FILE);
        let lines = io::read_lines(&path)?;
        let origin = path.display().to_string();
        let row = lines
            .get(1)
            .ok_or_else(|| Error::parse(&origin, 2, "missing score row"))?;
        let f: Vec<&str> = row.split('\t').collect();
        let bad = || Error::parse(&origin, 2, "malformed score row");
        if f.len() != 5 {
            return Err(bad());
        }
        Ok(ScoreRow {
            config_id: f[0].to_string(),
            direction: f[1].to_string(),
            bleu: f[2].parse::<f64>().map_err(|_| bad())? / 100.0,
            oov_tokens: f[3].parse().map_err(|_| bad())?,
            oov_types: f[4].parse().map_err(|_| bad())?,
        })
    }

    /// Config hash, seed and the SHA-256 of every stage artifact.
    pub fn write_manifest(&self) -> Result<()> {
        let mut out = format!(
            "id\t{}\ndirection\t{}\nconfig_sha256\t{}\nseed\t{}\n",
            self.config.id, self.config.direction, self.config.hash, self.config.seed
        );
        for stage in Stage::ALL {
            let dir = self.run_dir.join(stage.dir());
            let mut files: Vec<PathBuf> = match std::fs::read_dir(&dir) {
                Ok(rd) => rd
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_file())
                    .collect(),
                Err(_) => continue,
            };
            files.sort();
            for f in files {
                let bytes = std::fs::read(&f).map_err(|e| Error::io(&f, e))?;
                let name = f.file_name().unwrap().to_string_lossy();
                out.push_str(&format!(
                    "{}/{}\t{}\n",
                    stage.dir(),
                    name,
                    hex::encode(Sha256::digest(&bytes))
                ));
            }
        }
        io::write(&self.run_dir.join("manifest.txt"), out)
    }
}

/// Loads a config and runs it into `run_dir` (default: `runs/<id>` next to
/// the config).
pub fn run_experiment(config_path: &Path, run_dir: Option<&Path>, from: Stage, exec: Exec) -> Result<ScoreRow> {
    let cfg = ExperimentConfig::load(config_path)?;
    let dir = match run_dir {
        Some(d) => d.to_path_buf(),
        None => config_path
            .parent()
            .unwrap_or(Path::new("."))
            .join("runs")
            .join(&cfg.id),
    };
    Pipeline::new(&cfg, dir, exec).run(from)
}

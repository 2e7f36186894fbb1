//! Experiment configuration: an INI file whose paths are resolved against
//! the file's own directory.
//!
//! ```ini
//! [experiment]
//! id = A3
//! direction = si-en
//! seed = 7
//!
//! [data]
//! train.si = corpus/train.si
//! train.en = corpus/train.en
//! dev.si = corpus/dev.si
//! dev.en = corpus/dev.en
//! test.si = corpus/test.si
//! test.en = corpus/test.en
//!
//! [list:dictionary]
//! path = lists/dictionary.tsv
//! augment = true
//! filter = token
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, Properties};
use sha2::{Digest, Sha256};

use crate::decoder::DecodeParams;
use crate::error::{Error, Result};
use crate::lexicon::FilterMode;
use crate::textprep::{CleanParams, Lang};
use crate::tune::MertParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Direction {
    pub source: Lang,
    pub target: Lang,
}

impl Direction {
    /// Lists are written with English in the second column; this is true
    /// when they need swapping to match the direction.
    pub fn english_source(self) -> bool {
        self.source == Lang::English
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("direction `{s}` is not of the form src-tgt")))?;
        let d = Direction {
            source: a.parse()?,
            target: b.parse()?,
        };
        if d.source == d.target || (d.source != Lang::English && d.target != Lang::English) {
            return Err(Error::Config(format!(
                "direction `{s}` must pair English with another language"
            )));
        }
        Ok(d)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ListSpec {
    pub name: String,
    pub path: PathBuf,
    pub augment: bool,
    pub filter: Option<FilterMode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub source: PathBuf,
    pub target: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub direction: Direction,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub paradigms: Option<PathBuf>,
    pub lists: Vec<ListSpec>,
    pub clean: CleanParams,
    pub align_iterations: usize,
    pub max_phrase_len: usize,
    pub lm_order: usize,
    pub tune: bool,
    pub mert: MertParams,
    pub decode: DecodeParams,
    /// SHA-256 of the config file bytes.
    pub hash: String,
}

struct Section<'a> {
    name: String,
    props: &'a Properties,
    known: &'static [&'static str],
}

impl Section<'_> {
    fn check_keys(&self) -> Result<()> {
        for (k, _) in self.props.iter() {
            if !self.known.contains(&k) {
                return Err(Error::Config(format!("unknown key `{k}` in [{}]", self.name)));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.props.get(key).map(str::trim)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing `{key}` in [{}]", self.name)))
    }

    fn parse<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}` in [{}]", self.name))),
        }
    }
}

fn existing(base: &Path, rel: &str) -> Result<PathBuf> {
    let p = base.join(rel);
    if !p.is_file() {
        return Err(Error::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        ));
    }
    Ok(p)
}

fn parse_filter(s: &str) -> Result<Option<FilterMode>> {
    match s {
        "off" => Ok(None),
        other => other
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("filter must be off, token or phrase, not `{other}`"))),
    }
}

const EXPERIMENT_KEYS: &[&str] = &["id", "direction", "seed", "jobs", "augment", "filter"];
const DATA_KEYS: &[&str] = &["paradigms"];
const MODEL_KEYS: &[&str] = &[
    "align_iterations",
    "max_phrase_len",
    "lm_order",
    "max_sentence_len",
    "max_ratio",
];
const TUNE_KEYS: &[&str] = &["enabled", "nbest", "iterations", "restarts", "min_gain"];
const DECODE_KEYS: &[&str] = &["stack_size", "distortion_limit", "max_options"];
const LIST_KEYS: &[&str] = &["path", "augment", "filter"];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text =
            String::from_utf8(bytes.clone()).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base)?;
        cfg.hash = hex::encode(Sha256::digest(&bytes));
        Ok(cfg)
    }

    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Config(format!("line {e}")))?;
        let mut seen = std::collections::HashSet::new();
        for (name, props) in ini.iter() {
            if let Some(n) = name {
                if !seen.insert(n.to_string()) {
                    return Err(Error::Config(format!("section [{n}] appears twice")));
                }
            } else if props.iter().next().is_some() {
                return Err(Error::Config("keys before the first section".into()));
            }
        }
        let empty = Properties::new();
        let section = |name: &str, known: &'static [&'static str]| Section {
            name: name.to_string(),
            props: ini.section(Some(name)).unwrap_or(&empty),
            known,
        };
        for (name, _) in ini.iter() {
            let Some(n) = name else { continue };
            let ok = matches!(n, "experiment" | "data" | "model" | "tune" | "decode") || n.starts_with("list:");
            if !ok {
                return Err(Error::Config(format!("unknown section [{n}]")));
            }
        }

        let exp = section("experiment", EXPERIMENT_KEYS);
        exp.check_keys()?;
        let direction: Direction = exp.require("direction")?.parse()?;
        let id = exp.require("id")?.to_string();
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(Error::Config("experiment id must be a non-empty word".into()));
        }
        let jobs = match exp.get("jobs") {
            None => None,
            Some(_) => Some(exp.parse("jobs", 1usize)?).filter(|&j| j > 0),
        };

        let data_known: Vec<String> = ["train", "dev", "test"]
            .iter()
            .flat_map(|s| [direction.source, direction.target].map(|l| format!("{s}.{l}")))
            .collect();
        let data = section("data", DATA_KEYS);
        for (k, _) in data.props.iter() {
            if !DATA_KEYS.contains(&k) && !data_known.iter().any(|d| d == k) {
                return Err(Error::Config(format!("unknown key `{k}` in [data]")));
            }
        }
        let corpus = |split: &str| -> Result<Corpus> {
            Ok(Corpus {
                source: existing(base, data.require(&format!("{split}.{}", direction.source))?)?,
                target: existing(base, data.require(&format!("{split}.{}", direction.target))?)?,
            })
        };
        let (train, dev, test) = (corpus("train")?, corpus("dev")?, corpus("test")?);
        let paradigms = data.get("paradigms").map(|p| existing(base, p)).transpose()?;

        let default_augment: bool = exp.parse("augment", false)?;
        let default_filter = parse_filter(exp.get("filter").unwrap_or("off"))?;
        let mut lists = Vec::new();
        for (name, _) in ini.iter() {
            let Some(list) = name.and_then(|n| n.strip_prefix("list:")) else {
                continue;
            };
            if list.is_empty() {
                return Err(Error::Config(
                    "list section needs a name, as in [list:dictionary]".into(),
                ));
            }
            let s = section(name.unwrap(), LIST_KEYS);
            s.check_keys()?;
            lists.push(ListSpec {
                name: list.to_string(),
                path: existing(base, s.require("path")?)?,
                augment: s.parse("augment", default_augment)?,
                filter: match s.get("filter") {
                    Some(f) => parse_filter(f)?,
                    None => default_filter,
                },
            });
        }
        if lists.is_empty() && (default_augment || default_filter.is_some()) {
            return Err(Error::Config(
                "augment or filter requested but no [list:*] sections".into(),
            ));
        }
        if lists.iter().any(|l| l.augment) && direction.source != Lang::Sinhala && direction.target != Lang::Sinhala {
            return Err(Error::Config("augmentation rules exist for Sinhala only".into()));
        }
        if paradigms.is_some() && !lists.iter().any(|l| l.augment) {
            return Err(Error::Config("paradigms given but no list is augmented".into()));
        }

        let model = section("model", MODEL_KEYS);
        model.check_keys()?;
        let tune = section("tune", TUNE_KEYS);
        tune.check_keys()?;
        let decode = section("decode", DECODE_KEYS);
        decode.check_keys()?;
        let dm = MertParams::default();
        let dd = DecodeParams::default();
        let dc = CleanParams::default();
        let distortion_limit = match decode.get("distortion_limit") {
            Some("none") => None,
            _ => Some(decode.parse("distortion_limit", dd.distortion_limit.unwrap_or(6))?),
        };
        let cfg = ExperimentConfig {
            id,
            direction,
            seed: exp.parse("seed", 1)?,
            jobs,
            train,
            dev,
            test,
            paradigms,
            lists,
            clean: CleanParams {
                max_len: model.parse("max_sentence_len", dc.max_len)?,
                max_ratio: model.parse("max_ratio", dc.max_ratio)?,
            },
            align_iterations: model.parse("align_iterations", 5)?,
            max_phrase_len: model.parse("max_phrase_len", crate::phrase::DEFAULT_MAX_PHRASE_LEN)?,
            lm_order: model.parse("lm_order", 3)?,
            tune: tune.parse("enabled", true)?,
            mert: MertParams {
                nbest: tune.parse("nbest", dm.nbest)?,
                max_iterations: tune.parse("iterations", dm.max_iterations)?,
                restarts: tune.parse("restarts", dm.restarts)?,
                seed: exp.parse("seed", 1)?,
                min_gain: tune.parse("min_gain", dm.min_gain)?,
            },
            decode: DecodeParams {
                stack_size: decode.parse("stack_size", dd.stack_size)?,
                distortion_limit,
                max_options: decode.parse("max_options", dd.max_options)?,
            },
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        };
        if cfg.align_iterations == 0 || cfg.max_phrase_len == 0 || !(1..=3).contains(&cfg.lm_order) {
            return Err(Error::Config(
                "align_iterations and max_phrase_len must be positive, lm_order 1 to 3".into(),
            ));
        }
        if cfg.mert.nbest == 0 || cfg.decode.stack_size == 0 || cfg.decode.max_options == 0 {
            return Err(Error::Config(
                "nbest, stack_size and max_options must be positive".into(),
            ));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for f in [
            "train.si", "train.en", "dev.si", "dev.en", "test.si", "test.en", "dict.tsv",
        ] {
            std::fs::write(dir.path().join(f), "x\n").unwrap();
        }
        dir
    }

    const DATA: &str = "[data]\ntrain.si = train.si\ntrain.en = train.en\ndev.si = dev.si\ndev.en = dev.en\ntest.si = test.si\ntest.en = test.en\n";

    #[test]
    fn parses_lists_in_order() {
        let dir = setup();
        let text = format!(
            "[experiment]\nid = A7\ndirection = si-en\nseed = 3\nfilter = token\n{DATA}\n[list:b]\npath = dict.tsv\naugment = true\n[list:a]\npath = dict.tsv\nfilter = off\n"
        );
        let cfg = ExperimentConfig::parse(&text, dir.path()).unwrap();
        assert_eq!(cfg.id, "A7");
        assert_eq!(cfg.direction.to_string(), "si-en");
        assert_eq!(cfg.mert.seed, 3);
        let names: Vec<&str> = cfg.lists.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["b", "a"]);
        assert_eq!(cfg.lists[0].filter, Some(FilterMode::Token));
        assert_eq!(cfg.lists[1].filter, None);
        assert!(cfg.lists[0].augment && !cfg.lists[1].augment);
    }

    #[test]
    fn errors() {
        let dir = setup();
        let base = format!("[experiment]\nid = A1\ndirection = en-si\n{DATA}");
        assert!(ExperimentConfig::parse(&base.replace(".si", ".ta"), dir.path()).is_err());
        let missing = base.replace("test.en = test.en", "test.en = nope.en");
        match ExperimentConfig::parse(&missing, dir.path()) {
            Err(Error::Io { path, .. }) => assert!(path.ends_with("nope.en")),
            other => panic!("{other:?}"),
        }
        let conflict = base.replace("direction = en-si", "direction = en-si\nfilter = token");
        assert!(matches!(
            ExperimentConfig::parse(&conflict, dir.path()),
            Err(Error::Config(_))
        ));
        let unknown = format!("{base}[model]\ncolour = blue\n");
        assert!(ExperimentConfig::parse(&unknown, dir.path()).is_err());
        assert!(ExperimentConfig::parse(&base.replace("en-si", "si-ta"), dir.path()).is_err());
        assert!(ExperimentConfig::parse(&base, dir.path()).is_ok());
    }
}

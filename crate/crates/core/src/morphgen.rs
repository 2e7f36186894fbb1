//! Case-marker inflection of bilingual lexicon entries.
//!
//! Paradigms are data: each one names a suffix the seed's final source word
//! must end with and up to ten rules, one per (case, definiteness) cell. A
//! rule strips and appends a source suffix and wraps the full target term in
//! an English template such as `to the {w}`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Shipped paradigms for masculine -ා, feminine -අ and inanimate -අ nouns.
pub const DEFAULT_PARADIGMS: &str = include_str!("../data/default_paradigms.tsv");

/// `match_suffix` value standing for a word ending in a bare Sinhala consonant.
pub const INHERENT_VOWEL: &str = "අ";

const EMPTY_FIELD: &str = "-";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Case {
    Nominative,
    Accusative,
    Dative,
    Genitive,
    Instrumental,
}

impl Case {
    pub const ALL: [Case; 5] = [
        Case::Nominative,
        Case::Accusative,
        Case::Dative,
        Case::Genitive,
        Case::Instrumental,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Case::Nominative => "nominative",
            Case::Accusative => "accusative",
            Case::Dative => "dative",
            Case::Genitive => "genitive",
            Case::Instrumental => "instrumental",
        }
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Case::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown case `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Definiteness {
    Definite,
    Indefinite,
}

impl Definiteness {
    pub fn name(self) -> &'static str {
        match self {
            Definiteness::Definite => "definite",
            Definiteness::Indefinite => "indefinite",
        }
    }
}

impl FromStr for Definiteness {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "definite" => Ok(Definiteness::Definite),
            "indefinite" => Ok(Definiteness::Indefinite),
            _ => Err(format!("unknown definiteness `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NounClass {
    Masculine,
    Feminine,
    Unspecified,
}

impl NounClass {
    /// Paradigm ids starting with `masculine`/`feminine` get that class.
    fn from_paradigm_id(id: &str) -> Self {
        if id.starts_with("masculine") {
            NounClass::Masculine
        } else if id.starts_with("feminine") {
            NounClass::Feminine
        } else {
            NounClass::Unspecified
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InflectionRule {
    pub case: Case,
    pub definiteness: Definiteness,
    pub src_strip: String,
    pub src_add: String,
    pub tgt_template: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InflectionParadigm {
    pub id: String,
    pub match_suffix: String,
    pub class: NounClass,
    pub rules: Vec<InflectionRule>,
}

fn is_sinhala_consonant(c: char) -> bool {
    ('\u{0D9A}'..='\u{0DC6}').contains(&c)
}

impl InflectionParadigm {
    pub fn matches(&self, word: &str) -> bool {
        if self.match_suffix == INHERENT_VOWEL {
            word.chars().last().is_some_and(is_sinhala_consonant)
        } else {
            word.ends_with(&self.match_suffix)
        }
    }

    fn suffix_len(&self) -> usize {
        self.match_suffix.chars().count()
    }
}

fn parse_field(s: &str) -> String {
    if s == EMPTY_FIELD {
        String::new()
    } else {
        s.to_string()
    }
}

/// Parses the paradigm rules TSV. Rules are grouped by paradigm id in order
/// of first appearance.
pub fn parse_paradigms(text: &str, origin: &str) -> Result<Vec<InflectionParadigm>> {
    let mut paradigms: Vec<InflectionParadigm> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| Error::parse(origin, line_no, m);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(err(format!("expected 7 tab-separated fields, found {}", cols.len())));
        }
        let id = cols[0].trim();
        let match_suffix = cols[1].trim();
        if id.is_empty() || match_suffix.is_empty() || match_suffix == EMPTY_FIELD {
            return Err(err("paradigm id and match suffix must be non-empty".into()));
        }
        let case: Case = cols[2].trim().parse().map_err(err)?;
        let definiteness: Definiteness = cols[3].trim().parse().map_err(err)?;
        let src_strip = parse_field(cols[4].trim());
        let src_add = parse_field(cols[5].trim());
        let tgt_template = cols[6].trim().to_string();
        if tgt_template.matches("{w}").count() != 1 {
            return Err(err(format!("template `{tgt_template}` must contain exactly one {{w}}")));
        }
        if match_suffix == INHERENT_VOWEL {
            if !src_strip.is_empty() {
                return Err(err("an inherent-vowel paradigm cannot strip a suffix".into()));
            }
        } else if !match_suffix.ends_with(&src_strip) {
            return Err(err(format!(
                "strip suffix `{src_strip}` is not a suffix of match suffix `{match_suffix}`"
            )));
        }

        let slot = *index.entry(id.to_string()).or_insert_with(|| {
            paradigms.push(InflectionParadigm {
                id: id.to_string(),
                match_suffix: match_suffix.to_string(),
                class: NounClass::from_paradigm_id(id),
                rules: Vec::new(),
            });
            paradigms.len() - 1
        });
        let p = &mut paradigms[slot];
        if p.match_suffix != match_suffix {
            return Err(err(format!(
                "paradigm `{id}` declared with match suffix `{}` and `{match_suffix}`",
                p.match_suffix
            )));
        }
        if p.rules.iter().any(|r| r.case == case && r.definiteness == definiteness) {
            return Err(err(format!(
                "paradigm `{id}` repeats cell {} {}",
                case.name(),
                definiteness.name()
            )));
        }
        p.rules.push(InflectionRule {
            case,
            definiteness,
            src_strip,
            src_add,
            tgt_template,
        });
    }
    Ok(paradigms)
}

pub fn default_paradigms() -> Vec<InflectionParadigm> {
    parse_paradigms(DEFAULT_PARADIGMS, "default_paradigms.tsv").expect("shipped paradigms parse")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LexiconKind {
    Dictionary,
    Glossary,
    Names,
    Addresses,
    Designations,
}

impl LexiconKind {
    pub fn name(self) -> &'static str {
        match self {
            LexiconKind::Dictionary => "dictionary",
            LexiconKind::Glossary => "glossary",
            LexiconKind::Names => "names",
            LexiconKind::Addresses => "addresses",
            LexiconKind::Designations => "designations",
        }
    }
}

impl FromStr for LexiconKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dictionary" => Ok(LexiconKind::Dictionary),
            "glossary" => Ok(LexiconKind::Glossary),
            "names" => Ok(LexiconKind::Names),
            "addresses" => Ok(LexiconKind::Addresses),
            "designations" => Ok(LexiconKind::Designations),
            _ => Err(format!("unknown lexicon kind `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Article {
    A,
    An,
}

impl Article {
    pub fn as_str(self) -> &'static str {
        match self {
            Article::A => "a",
            Article::An => "an",
        }
    }
}

/// Per-entry tags from the lexicon's flags column.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct EntryFlags {
    /// Common singular noun; only these dictionary entries seed inflection.
    pub noun: bool,
    pub class: Option<NounClass>,
    /// Produced by augmentation; never used as a seed.
    pub augmented: bool,
    pub article: Option<Article>,
    pub other: Vec<String>,
}

impl EntryFlags {
    pub fn parse(s: &str) -> Self {
        let mut flags = EntryFlags::default();
        for f in s
            .split(',')
            .map(str::trim)
            .filter(|f| !f.is_empty() && *f != EMPTY_FIELD)
        {
            match f {
                "noun" => flags.noun = true,
                "masculine" => flags.class = Some(NounClass::Masculine),
                "feminine" => flags.class = Some(NounClass::Feminine),
                "inanimate" => flags.class = Some(NounClass::Unspecified),
                "augmented" => flags.augmented = true,
                "article=a" => flags.article = Some(Article::A),
                "article=an" => flags.article = Some(Article::An),
                other => flags.other.push(other.to_string()),
            }
        }
        flags
    }
}

impl fmt::Display for EntryFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<&str> = Vec::new();
        if self.noun {
            parts.push("noun");
        }
        match self.class {
            Some(NounClass::Masculine) => parts.push("masculine"),
            Some(NounClass::Feminine) => parts.push("feminine"),
            Some(NounClass::Unspecified) => parts.push("inanimate"),
            None => {}
        }
        if self.augmented {
            parts.push("augmented");
        }
        match self.article {
            Some(Article::A) => parts.push("article=a"),
            Some(Article::An) => parts.push("article=an"),
            None => {}
        }
        parts.extend(self.other.iter().map(String::as_str));
        if parts.is_empty() {
            f.write_str(EMPTY_FIELD)
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LexiconEntry {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub kind: LexiconKind,
    pub flags: EntryFlags,
}

impl LexiconEntry {
    pub fn new(source: &str, target: &str, kind: LexiconKind, flags: &str) -> Self {
        LexiconEntry {
            source: crate::textprep::split(source),
            target: crate::textprep::split(target),
            kind,
            flags: EntryFlags::parse(flags),
        }
    }

    pub fn source_text(&self) -> String {
        self.source.join(" ")
    }

    pub fn target_text(&self) -> String {
        self.target.join(" ")
    }

    fn key(&self) -> (Vec<String>, Vec<String>) {
        (self.source.clone(), self.target.clone())
    }
}

/// Parses `source_term<TAB>target_term<TAB>kind<TAB>flags`; the flags column
/// may be omitted.
pub fn parse_lexicon(text: &str, origin: &str) -> Result<Vec<LexiconEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| Error::parse(origin, i + 1, m);
        let cols: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&cols.len()) {
            return Err(err(format!(
                "expected 3 or 4 tab-separated fields, found {}",
                cols.len()
            )));
        }
        let kind: LexiconKind = cols[2].trim().parse().map_err(err)?;
        let entry = LexiconEntry::new(cols[0], cols[1], kind, cols.get(3).copied().unwrap_or(""));
        if entry.source.is_empty() || entry.target.is_empty() {
            return Err(err("source and target terms must be non-empty".into()));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn format_lexicon(entries: &[LexiconEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.source_text(),
            e.target_text(),
            e.kind.name(),
            e.flags
        ));
    }
    out
}

/// How the indefinite article is picked for `{a}` in a template.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ArticlePolicy {
    /// "an" before a target starting with a, e, i, o or u; "a" otherwise.
    #[default]
    Vowel,
    Fixed(Article),
}

impl ArticlePolicy {
    pub fn choose(self, entry: &LexiconEntry) -> Article {
        if let Some(a) = entry.flags.article {
            return a;
        }
        match self {
            ArticlePolicy::Fixed(a) => a,
            ArticlePolicy::Vowel => {
                let first = entry
                    .target
                    .first()
                    .and_then(|w| w.chars().next())
                    .map(|c| c.to_ascii_lowercase());
                match first {
                    Some('a' | 'e' | 'i' | 'o' | 'u') => Article::An,
                    _ => Article::A,
                }
            }
        }
    }
}

/// Picks the paradigm for an entry's final source word: the longest matching
/// suffix among paradigms compatible with the entry's class flag, first
/// declared on ties. Dictionary entries must carry the `noun` flag.
pub fn select_paradigm<'p>(
    entry: &LexiconEntry,
    paradigms: &'p [InflectionParadigm],
) -> Option<&'p InflectionParadigm> {
    if entry.flags.augmented {
        return None;
    }
    match entry.kind {
        LexiconKind::Dictionary if entry.flags.noun => {}
        LexiconKind::Glossary => {}
        _ => return None,
    }
    let word = entry.source.last()?;
    let mut best: Option<&InflectionParadigm> = None;
    for p in paradigms {
        if entry.flags.class.is_some_and(|c| c != p.class) || !p.matches(word) {
            continue;
        }
        if best.is_none_or(|b| p.suffix_len() > b.suffix_len()) {
            best = Some(p);
        }
    }
    best
}

/// One filled cell of a paradigm.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InflectedForm {
    pub case: Case,
    pub definiteness: Definiteness,
    pub entry: LexiconEntry,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SkipReason {
    NotNoun,
    UnsupportedKind(LexiconKind),
    NoParadigm,
    EmptyStem {
        paradigm: String,
        case: Case,
        definiteness: Definiteness,
    },
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::NotNoun => f.write_str("not flagged as a common noun"),
            SkipReason::UnsupportedKind(k) => write!(f, "{} entries are not inflected", k.name()),
            SkipReason::NoParadigm => f.write_str("final word matches no paradigm"),
            SkipReason::EmptyStem {
                paradigm,
                case,
                definiteness,
            } => write!(
                f,
                "stripping leaves an empty stem ({paradigm} {} {})",
                case.name(),
                definiteness.name()
            ),
        }
    }
}

fn render(template: &str, target: &str, article: Article) -> Vec<String> {
    crate::textprep::split(&template.replace("{a}", article.as_str()).replace("{w}", target))
}

/// Applies every rule of `paradigm` to the entry, in rule order, without
/// deduplication. Rules whose strip would empty the stem are reported.
pub fn inflect(
    entry: &LexiconEntry,
    paradigm: &InflectionParadigm,
    policy: ArticlePolicy,
) -> (Vec<InflectedForm>, Vec<SkipReason>) {
    let mut forms = Vec::new();
    let mut skipped = Vec::new();
    let Some(word) = entry.source.last() else {
        return (forms, vec![SkipReason::NoParadigm]);
    };
    if !paradigm.matches(word) {
        return (forms, vec![SkipReason::NoParadigm]);
    }
    let article = policy.choose(entry);
    let target = entry.target_text();
    for rule in &paradigm.rules {
        let stem = word.strip_suffix(rule.src_strip.as_str()).unwrap_or(word);
        if stem.is_empty() {
            skipped.push(SkipReason::EmptyStem {
                paradigm: paradigm.id.clone(),
                case: rule.case,
                definiteness: rule.definiteness,
            });
            continue;
        }
        let mut source = entry.source.clone();
        *source.last_mut().unwrap() = format!("{stem}{}", rule.src_add);
        let flags = EntryFlags {
            augmented: true,
            ..EntryFlags::default()
        };
        forms.push(InflectedForm {
            case: rule.case,
            definiteness: rule.definiteness,
            entry: LexiconEntry {
                source,
                target: render(&rule.tgt_template, &target, article),
                kind: entry.kind,
                flags,
            },
        });
    }
    (forms, skipped)
}

fn collapse(entry: &LexiconEntry, forms: Vec<InflectedForm>) -> Vec<LexiconEntry> {
    let mut seen = HashSet::new();
    seen.insert(entry.key());
    forms
        .into_iter()
        .map(|f| f.entry)
        .filter(|e| seen.insert(e.key()))
        .collect()
}

/// Inflected entries for one seed: surface-identical pairs collapsed and the
/// seed itself excluded.
pub fn augment_entry(entry: &LexiconEntry, paradigm: &InflectionParadigm, policy: ArticlePolicy) -> Vec<LexiconEntry> {
    let (forms, _) = inflect(entry, paradigm, policy);
    collapse(entry, forms)
}

/// Inflects the final word of a (possibly multiword) glossary term; earlier
/// words are copied and the template wraps the whole target term.
pub fn augment_glossary(
    entry: &LexiconEntry,
    paradigms: &[InflectionParadigm],
    policy: ArticlePolicy,
) -> Vec<LexiconEntry> {
    if entry.kind != LexiconKind::Glossary {
        return Vec::new();
    }
    match select_paradigm(entry, paradigms) {
        Some(p) => augment_entry(entry, p, policy),
        None => Vec::new(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AugmentReport {
    pub input_entries: usize,
    pub seeds_matched: usize,
    /// Distinct new entries added to the lexicon.
    pub generated: usize,
    pub output_entries: usize,
    /// Index of the input entry and why it (or one of its cells) was skipped.
    pub skipped: Vec<(usize, SkipReason)>,
}

impl fmt::Display for AugmentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entries before augmentation\t{}", self.input_entries)?;
        writeln!(f, "seed entries matched\t{}", self.seeds_matched)?;
        writeln!(f, "generated entries\t{}", self.generated)?;
        writeln!(f, "entries after augmentation\t{}", self.output_entries)?;
        write!(f, "skipped\t{}", self.skipped.len())
    }
}

fn augment_one(
    entry: &LexiconEntry,
    paradigms: &[InflectionParadigm],
    policy: ArticlePolicy,
) -> (Option<Vec<InflectedForm>>, Vec<SkipReason>) {
    if entry.flags.augmented {
        return (None, Vec::new());
    }
    match entry.kind {
        LexiconKind::Dictionary if !entry.flags.noun => return (None, vec![SkipReason::NotNoun]),
        LexiconKind::Dictionary | LexiconKind::Glossary => {}
        k => return (None, vec![SkipReason::UnsupportedKind(k)]),
    }
    match select_paradigm(entry, paradigms) {
        Some(p) => {
            let (forms, skipped) = inflect(entry, p, policy);
            (Some(forms), skipped)
        }
        None => (None, vec![SkipReason::NoParadigm]),
    }
}

/// Original entries followed by every generated form, deduplicated on the
/// (source, target) surface pair.
pub fn augment_lexicon(
    entries: &[LexiconEntry],
    paradigms: &[InflectionParadigm],
    policy: ArticlePolicy,
    exec: Exec,
) -> (Vec<LexiconEntry>, AugmentReport) {
    let results = par::map(exec, entries, |e| augment_one(e, paradigms, policy));

    let mut report = AugmentReport {
        input_entries: entries.len(),
        ..AugmentReport::default()
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for e in entries {
        if seen.insert(e.key()) {
            out.push(e.clone());
        }
    }
    let originals = out.len();
    for (i, (forms, skipped)) in results.into_iter().enumerate() {
        report.skipped.extend(skipped.into_iter().map(|r| (i, r)));
        let Some(forms) = forms else { continue };
        report.seeds_matched += 1;
        for f in forms {
            if seen.insert(f.entry.key()) {
                out.push(f.entry);
            }
        }
    }
    report.generated = out.len() - originals;
    report.output_entries = out.len();
    (out, report)
}

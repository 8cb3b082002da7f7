//! Tweet text normalization and tokenization.
//!
//! Normalization lowercases, swaps @-mentions, URLs and standalone numbers
//! for special tokens, converts or strips emoji against a frozen lexicon,
//! and collapses whitespace. The tokenizer splits on whitespace and peels
//! leading/trailing punctuation into separate tokens while keeping special
//! tokens (`<user>`, `:red_heart:`, ...) atomic.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separator token between the tweet text and the reply when they are
/// joined into one scoring query.
pub const PAIR_SEP: &str = "[SEP]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmojiMode {
    /// Replace each emoji with its meaning token, e.g. `:face_with_tears_of_joy:`.
    ConvertToMeaning,
    /// Drop emoji entirely.
    Strip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizeConfig {
    pub user_token: String,
    pub url_token: String,
    pub number_token: String,
    pub emoji_mode: EmojiMode,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        NormalizeConfig {
            user_token: "<user>".to_string(),
            url_token: "<url>".to_string(),
            number_token: "<number>".to_string(),
            emoji_mode: EmojiMode::ConvertToMeaning,
        }
    }
}

impl NormalizeConfig {
    pub fn validate(&self) -> Result<()> {
        let tokens = [
            ("user_token", &self.user_token),
            ("url_token", &self.url_token),
            ("number_token", &self.number_token),
        ];
        for (name, tok) in &tokens {
            if tok.is_empty() {
                return Err(Error::config(format!("normalize.{name}"), "must be non-empty"));
            }
            if tok.chars().any(char::is_whitespace) {
                return Err(Error::config(
                    format!("normalize.{name}"),
                    "must not contain whitespace",
                ));
            }
        }
        for i in 0..tokens.len() {
            for j in i + 1..tokens.len() {
                if tokens[i].1 == tokens[j].1 {
                    return Err(Error::config(
                        format!("normalize.{}", tokens[j].0),
                        format!("duplicates {}", tokens[i].0),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Frozen emoji snapshot: codepoint sequence to meaning token.
#[derive(Debug, Clone)]
pub struct EmojiLexicon {
    entries: BTreeMap<String, String>,
    // First char of each sequence -> candidate entries, longest first,
    // for longest-match scanning.
    index: HashMap<char, Vec<(String, String)>>,
}

impl EmojiLexicon {
    /// Parse the two-column tab-separated lexicon format. Lines starting
    /// with `#` and blank lines are ignored.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((seq, meaning)) = trimmed.split_once('\t') else {
                return Err(Error::invalid(format!(
                    "emoji lexicon line {line_no}: expected two tab-separated columns"
                )));
            };
            if seq.is_empty() {
                return Err(Error::invalid(format!(
                    "emoji lexicon line {line_no}: empty emoji sequence"
                )));
            }
            if meaning.is_empty()
                || meaning.chars().any(|c| c.is_whitespace() || c.is_uppercase())
            {
                return Err(Error::invalid(format!(
                    "emoji lexicon line {line_no}: meaning must be non-empty, lowercase and whitespace-free"
                )));
            }
            entries.insert(seq.to_string(), meaning.to_string());
        }
        Ok(Self::from_entries(entries))
    }

    fn from_entries(entries: BTreeMap<String, String>) -> Self {
        let mut index: HashMap<char, Vec<(String, String)>> = HashMap::new();
        for (seq, meaning) in &entries {
            let first = seq.chars().next().expect("non-empty sequence");
            index
                .entry(first)
                .or_default()
                .push((seq.clone(), meaning.clone()));
        }
        for bucket in index.values_mut() {
            bucket.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        }
        EmojiLexicon { entries, index }
    }

    /// The snapshot shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_tsv(include_str!("../data/emoji.tsv")).expect("bundled lexicon is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn meaning(&self, seq: &str) -> Option<&str> {
        self.entries.get(seq).map(String::as_str)
    }

    fn match_at<'a>(&'a self, rest: &str) -> Option<(&'a str, &'a str)> {
        let first = rest.chars().next()?;
        for (seq, meaning) in self.index.get(&first)? {
            if rest.starts_with(seq.as_str()) {
                return Some((seq, meaning));
            }
        }
        None
    }

    fn transform(&self, text: &str, mut emit: impl FnMut(&mut String, &str)) -> String {
        let mut out = String::with_capacity(text.len());
        let mut i = 0;
        while i < text.len() {
            let rest = &text[i..];
            if let Some((seq, meaning)) = self.match_at(rest) {
                emit(&mut out, meaning);
                i += seq.len();
            } else {
                let ch = rest.chars().next().expect("in-bounds char");
                out.push(ch);
                i += ch.len_utf8();
            }
        }
        out
    }

    /// Number of lexicon emoji occurrences in `text` (longest-match scan).
    pub fn count(&self, text: &str) -> usize {
        let mut n = 0;
        self.transform(text, |_, _| n += 1);
        n
    }

    pub fn contains_emoji(&self, text: &str) -> bool {
        self.count(text) > 0
    }
}

fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for part in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(part);
    }
    out
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S+").expect("valid regex"))
}

fn mention_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").expect("valid regex"))
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b\d+(?:[.,]\d+)?\b").expect("valid regex"))
}

/// Lowercase, replace URLs / @-mentions / standalone numbers with the
/// configured special tokens, handle emoji per `config.emoji_mode`, and
/// collapse whitespace. Total on valid UTF-8 and idempotent.
pub fn normalize(raw: &str, config: &NormalizeConfig, lexicon: &EmojiLexicon) -> String {
    let lowered = raw.to_lowercase();
    let no_urls = url_regex().replace_all(&lowered, regex::NoExpand(&config.url_token));
    let no_mentions = mention_regex().replace_all(&no_urls, regex::NoExpand(&config.user_token));
    let no_numbers =
        number_regex().replace_all(&no_mentions, regex::NoExpand(&config.number_token));
    let emoji_done = match config.emoji_mode {
        EmojiMode::ConvertToMeaning => lexicon.transform(&no_numbers, |out, meaning| {
            out.push(' ');
            out.push_str(meaning);
            out.push(' ');
        }),
        EmojiMode::Strip => lexicon.transform(&no_numbers, |out, _| out.push(' ')),
    };
    collapse_whitespace(&emoji_done)
}

/// Remove every lexicon emoji and re-collapse whitespace, leaving case and
/// punctuation untouched.
pub fn strip_emoji(raw: &str, lexicon: &EmojiLexicon) -> String {
    collapse_whitespace(&lexicon.transform(raw, |out, _| out.push(' ')))
}

/// A sequence of atomic symbols: whitespace-free tokens from the
/// tokenizer, or whole sentences when a sentence is treated as one
/// symbol.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedText {
    tokens: Vec<String>,
}

impl TokenizedText {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenizedText { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.tokens.iter()
    }
}

impl From<Vec<String>> for TokenizedText {
    fn from(tokens: Vec<String>) -> Self {
        TokenizedText::new(tokens)
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '…' | '“' | '”' | '‘' | '’' | '—' | '–' | '¡' | '¿' | '«' | '»'
        )
}

/// Tokens that must never be split: `<...>` special tokens and `:...:`
/// emoji meanings.
fn is_atomic(piece: &str) -> bool {
    let n = piece.chars().count();
    n >= 3
        && ((piece.starts_with('<') && piece.ends_with('>'))
            || (piece.starts_with(':') && piece.ends_with(':')))
}

/// True when the piece starts an atomic token that closes further in,
/// e.g. `<user>,` — peeling its first char would break the token open.
fn opens_atom(piece: &str) -> bool {
    match piece.chars().next() {
        Some('<') => piece[1..].contains('>'),
        Some(':') => piece.chars().count() >= 3 && piece[1..].contains(':'),
        _ => false,
    }
}

fn closes_atom(piece: &str) -> bool {
    match piece.chars().next_back() {
        Some('>') => piece[..piece.len() - 1].contains('<'),
        Some(':') => piece.chars().count() >= 3 && piece[..piece.len() - 1].contains(':'),
        _ => false,
    }
}

fn tokenize_piece(piece: &str, out: &mut Vec<String>) {
    let mut core = piece;
    let mut lead: Vec<String> = Vec::new();
    let mut trail: Vec<String> = Vec::new();
    loop {
        if is_atomic(core) {
            break;
        }
        let Some(first) = core.chars().next() else { break };
        if is_punct(first) && core.len() > first.len_utf8() && !opens_atom(core) {
            lead.push(first.to_string());
            core = &core[first.len_utf8()..];
            continue;
        }
        let last = core.chars().next_back().expect("non-empty core");
        if is_punct(last) && core.len() > last.len_utf8() && !closes_atom(core) {
            trail.push(last.to_string());
            core = &core[..core.len() - last.len_utf8()];
            continue;
        }
        break;
    }
    out.extend(lead);
    if !core.is_empty() {
        out.push(core.to_string());
    }
    out.extend(trail.into_iter().rev());
}

/// Split normalized text on whitespace, then peel leading/trailing
/// punctuation into separate tokens.
pub fn tokenize(normalized: &str) -> TokenizedText {
    let mut tokens = Vec::new();
    for piece in normalized.split_whitespace() {
        tokenize_piece(piece, &mut tokens);
    }
    TokenizedText::new(tokens)
}

/// `text ++ [sep] ++ reply`.
pub fn make_pair(text: &TokenizedText, reply: &TokenizedText, sep: &str) -> TokenizedText {
    assert!(!sep.is_empty(), "separator token must be non-empty");
    let mut tokens = Vec::with_capacity(text.len() + reply.len() + 1);
    tokens.extend(text.iter().cloned());
    tokens.push(sep.to_string());
    tokens.extend(reply.iter().cloned());
    TokenizedText::new(tokens)
}

/// Bundles a [`NormalizeConfig`] and an [`EmojiLexicon`] with the derived
/// per-field pipelines used across the crate.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub config: NormalizeConfig,
    pub lexicon: EmojiLexicon,
}

impl Preprocessor {
    pub fn new(config: NormalizeConfig, lexicon: EmojiLexicon) -> Result<Self> {
        config.validate()?;
        Ok(Preprocessor { config, lexicon })
    }

    pub fn normalize(&self, raw: &str) -> String {
        normalize(raw, &self.config, &self.lexicon)
    }

    pub fn tokens(&self, raw: &str) -> TokenizedText {
        tokenize(&self.normalize(raw))
    }

    /// Paired scorer query: `tokens(text) ++ [SEP] ++ tokens(reply)`.
    pub fn pair_tokens(&self, text: &str, reply: &str) -> TokenizedText {
        make_pair(&self.tokens(text), &self.tokens(reply), PAIR_SEP)
    }

    /// Word-level feature document: emoji removed, then normalized and
    /// tokenized.
    pub fn word_doc(&self, raw: &str) -> TokenizedText {
        let stripped = strip_emoji(raw, &self.lexicon);
        tokenize(&normalize(&stripped, &self.config, &self.lexicon))
    }

    /// Sentence-level feature symbol: the emoji-stripped normalized
    /// sentence as one atomic string.
    pub fn sentence_symbol(&self, raw: &str) -> String {
        let stripped = strip_emoji(raw, &self.lexicon);
        normalize(&stripped, &self.config, &self.lexicon)
    }

    pub fn emoji_count(&self, raw: &str) -> usize {
        self.lexicon.count(raw)
    }
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            config: NormalizeConfig::default(),
            lexicon: EmojiLexicon::bundled(),
        }
    }
}

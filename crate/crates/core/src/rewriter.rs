//! Idiom lexicon and compositional rewriting of idiomatic compounds.
//!
//! Matching works on tokens: maximal runs of word characters, single
//! characters of scripts written without spaces (CJK, kana, Thai, ...) and
//! single punctuation characters. An occurrence of the compound is a run of
//! sentence tokens equal to the compound's tokens after lowercasing, so
//! letter case and whitespace runs are ignored while punctuation never
//! matches across.
//!
//! Lexicon entries are rejected when the paraphrase could line up with its
//! own idiom at any offset (containment, prefix/suffix overlap, or the idiom
//! wrapping the paraphrase). That is what makes [`rewrite`] idempotent.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::debug;

use crate::error::{Error, Result};
use crate::typer::SentenceTypeDecision;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub idiom: String,
    pub paraphrase: String,
    pub definition: Option<String>,
    pub fewshot: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdiomLexicon {
    entries: BTreeMap<(String, String), LexiconEntry>,
}

fn is_unspaced_script(c: char) -> bool {
    matches!(c as u32,
        0x0E00..=0x0EFF      // Thai, Lao
        | 0x1000..=0x109F    // Myanmar
        | 0x1780..=0x17FF    // Khmer
        | 0x3040..=0x30FF    // Hiragana, Katakana
        | 0x3400..=0x4DBF    // CJK Extension A
        | 0x4E00..=0x9FFF    // CJK Unified
        | 0xF900..=0xFAFF    // CJK Compatibility
        | 0x20000..=0x2FA1F) // CJK Extensions B+
}

fn is_word_char(c: char) -> bool {
    (c.is_alphanumeric() || c == '_') && !is_unspaced_script(c)
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    start: usize,
    end: usize,
    folded: String,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    let flush = |tokens: &mut Vec<Token>, start: usize, end: usize| {
        tokens.push(Token {
            start,
            end,
            folded: text[start..end].to_lowercase(),
        });
    };
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = word_start.take() {
            flush(&mut tokens, s, i);
        }
        if !c.is_whitespace() {
            flush(&mut tokens, i, i + c.len_utf8());
        }
    }
    if let Some(s) = word_start {
        flush(&mut tokens, s, text.len());
    }
    tokens
}

fn folded_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.folded).collect()
}

/// Lexicon key: lowercased tokens joined by single spaces.
pub fn normalize_idiom(text: &str) -> String {
    folded_tokens(text).join(" ")
}

/// True when `a` and `b` agree on every position of some nonempty overlap.
fn can_align(key: &[String], para: &[String]) -> bool {
    let (k, p) = (key.len() as isize, para.len() as isize);
    // para[j] sits under key[j + offset]
    for offset in (1 - p)..k {
        let lo = offset.max(0);
        let hi = (offset + p).min(k);
        if lo >= hi {
            continue;
        }
        if (lo..hi).all(|i| key[i as usize] == para[(i - offset) as usize]) {
            return true;
        }
    }
    false
}

impl LexiconEntry {
    fn validate(&self) -> std::result::Result<(), String> {
        let key = folded_tokens(&self.idiom);
        if key.is_empty() {
            return Err("empty idiom".into());
        }
        let para = folded_tokens(&self.paraphrase);
        if para.is_empty() {
            return Err(format!("empty paraphrase for `{}`", self.idiom));
        }
        if self.paraphrase.to_lowercase().contains(&self.idiom.to_lowercase()) || can_align(&key, &para) {
            return Err(format!(
                "paraphrase `{}` overlaps its idiom `{}`",
                self.paraphrase, self.idiom
            ));
        }
        Ok(())
    }
}

impl IdiomLexicon {
    pub fn new() -> Self {
        IdiomLexicon::default()
    }

    pub fn insert(&mut self, language: &str, entry: LexiconEntry) -> Result<()> {
        entry.validate().map_err(|r| Error::Format { line: 0, reason: r })?;
        let key = (language.trim().to_lowercase(), normalize_idiom(&entry.idiom));
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateKey(format!("{}/{}", key.0, key.1)));
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn get(&self, language: &str, compound: &str) -> Option<&LexiconEntry> {
        self.entries
            .get(&(language.trim().to_lowercase(), normalize_idiom(compound)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `language\tidiom\tparaphrase\tdefinition\tfewshot` rows. The
    /// header row is required; `#` lines are comments; `fewshot` is
    /// `|`-separated.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lexicon = IdiomLexicon::new();
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| Error::format(1, "missing header"))?;
        let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
        let find = |name: &str| {
            cols.iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (lang_i, idiom_i, para_i) = (find("language")?, find("idiom")?, find("paraphrase")?);
        let def_i = find("definition").ok();
        let few_i = find("fewshot").ok();

        for (line, row) in lines {
            let fields: Vec<&str> = row.split('\t').collect();
            let get = |i: usize| fields.get(i).map(|s| s.trim()).unwrap_or("");
            let entry = LexiconEntry {
                idiom: get(idiom_i).to_string(),
                paraphrase: get(para_i).to_string(),
                definition: def_i.map(get).filter(|s| !s.is_empty()).map(String::from),
                fewshot: few_i
                    .map(get)
                    .map(|s| {
                        s.split('|')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(String::from)
                            .collect()
                    })
                    .unwrap_or_default(),
            };
            let language = get(lang_i);
            if language.is_empty() {
                return Err(Error::format(line, "missing language"));
            }
            lexicon.insert(language, entry).map_err(|e| match e {
                Error::Format { reason, .. } => Error::format(line, reason),
                other => other,
            })?;
        }
        Ok(lexicon)
    }
}

pub fn load_lexicon(path: &Path) -> Result<IdiomLexicon> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    IdiomLexicon::from_tsv(&text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewrite {
    pub text: String,
    pub applied: bool,
}

/// Replaces every occurrence of `compound` in `text` with `replacement`,
/// leftmost first and non-overlapping. Returns `None` when nothing matched.
pub fn replace_occurrences(text: &str, compound: &str, replacement: &str) -> Option<String> {
    let key = folded_tokens(compound);
    if key.is_empty() {
        return None;
    }
    let tokens = tokenize(text);
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    let mut i = 0;
    let mut replaced = false;
    while i + key.len() <= tokens.len() {
        let window = &tokens[i..i + key.len()];
        if window.iter().zip(&key).all(|(t, k)| &t.folded == k) {
            let (start, end) = (window[0].start, window[key.len() - 1].end);
            out.push_str(&text[cursor..start]);
            // keep token boundaries where the paraphrase would fuse with a neighbour
            let before = text[..start].chars().next_back();
            let after = text[end..].chars().next();
            if before.is_some_and(is_word_char) && replacement.chars().next().is_some_and(is_word_char) {
                out.push(' ');
            }
            out.push_str(replacement);
            if after.is_some_and(is_word_char) && replacement.chars().next_back().is_some_and(is_word_char) {
                out.push(' ');
            }
            cursor = end;
            i += key.len();
            replaced = true;
        } else {
            i += 1;
        }
    }
    if !replaced {
        return None;
    }
    out.push_str(&text[cursor..]);
    Some(out)
}

/// Substitutes the compound's paraphrase when the sentence is idiomatic and
/// the lexicon knows the compound; otherwise returns the sentence unchanged.
pub fn rewrite(
    sentence: &str,
    compound: &str,
    language: &str,
    lexicon: &IdiomLexicon,
    decision: &SentenceTypeDecision,
) -> Rewrite {
    let unchanged = || Rewrite {
        text: sentence.to_string(),
        applied: false,
    };
    if !decision.is_idiomatic() {
        return unchanged();
    }
    let Some(entry) = lexicon.get(language, compound) else {
        debug!("no lexicon entry for {language}/{compound}");
        return unchanged();
    };
    match replace_occurrences(sentence, compound, &entry.paraphrase) {
        Some(text) => Rewrite { text, applied: true },
        None => unchanged(),
    }
}

/// One line of the miss log.
pub fn miss_log_line(instance_id: &str, compound: &str) -> String {
    format!("{instance_id}\t{compound}\tNO_ENTRY")
}

//! Unicode-aware tokenizer shared by search indexing and topic modelling.
//!
//! Text is split on every non-alphanumeric character, lowercased, and
//! filtered against a stopword list. There is no stemming.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("stopwords.txt");

#[derive(Clone, Debug)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::from_stopword_list(DEFAULT_STOPWORDS)
    }
}

impl Tokenizer {
    /// Parses a stopword list: one token per line, `#` comments, blank
    /// lines ignored. Entries are lowercased.
    pub fn from_stopword_list(text: &str) -> Self {
        let stopwords = text
            .lines()
            .map(|line| line.split('#').next().unwrap_or("").trim())
            .filter(|line| !line.is_empty())
            .map(str::to_lowercase)
            .collect();
        Self { stopwords }
    }

    pub fn from_stopword_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::UnreadableFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self::from_stopword_list(&text))
    }

    pub fn without_stopwords() -> Self {
        Self { stopwords: HashSet::new() }
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// All lowercase tokens, stopwords included.
    pub fn split<'a>(&self, text: &'a str) -> impl Iterator<Item = String> + 'a {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
    }

    /// Non-stopword tokens paired with their offset in the unfiltered
    /// token stream.
    pub fn positioned(&self, text: &str) -> Vec<(u32, String)> {
        self.split(text)
            .enumerate()
            .filter(|(_, t)| !self.is_stopword(t))
            .map(|(i, t)| (i as u32, t))
            .collect()
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        self.split(text).filter(|t| !self.is_stopword(t)).collect()
    }
}

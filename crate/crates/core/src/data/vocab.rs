use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered label names; a label's index is its position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidSpec("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.contains(';') {
                return Err(Error::InvalidSpec(format!("invalid label name `{l}`")));
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::InvalidSpec(format!("duplicate label `{l}`")));
            }
        }
        Ok(LabelVocabulary { labels, index })
    }

    /// One label per line; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.labels.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.get(i).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index.get(label).copied().ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Multi-hot vector of the given label names.
    pub fn encode<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<bool>> {
        let mut hot = vec![false; self.len()];
        for l in labels {
            hot[self.index_of(l.as_ref())?] = true;
        }
        Ok(hot)
    }

    /// Label names of a multi-hot vector, in vocabulary order.
    pub fn decode(&self, hot: &[bool]) -> Vec<&str> {
        hot.iter().zip(&self.labels).filter(|(&h, _)| h).map(|(_, l)| l.as_str()).collect()
    }

    /// Parses a `;`-separated label list.
    pub fn encode_list(&self, list: &str) -> Result<Vec<bool>> {
        let names: Vec<&str> = list.split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
        self.encode(&names)
    }
}

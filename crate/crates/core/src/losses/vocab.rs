use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Ordered token inventory. The CTC blank is implicit, at index `len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const BLANK_SYMBOL: &'static str = "<blank>";

    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(Error::InvalidVocabulary("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocabulary(format!("invalid token {t:?}")));
            }
            if t == Self::BLANK_SYMBOL {
                return Err(Error::InvalidVocabulary("the blank symbol cannot be a token".into()));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// One token per line; blank lines are ignored.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn blank_index(&self) -> usize {
        self.tokens.len()
    }

    /// Number of CTC outputs, `len() + 1`.
    pub fn output_dim(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Map a space-separated transcript to indices, reporting every unknown
    /// token at once.
    pub fn encode(&self, transcript: &str) -> Result<Vec<usize>> {
        let mut unknown = BTreeSet::new();
        let ids: Vec<usize> = transcript
            .split_whitespace()
            .filter_map(|t| {
                let id = self.index_of(t);
                if id.is_none() {
                    unknown.insert(t.to_string());
                }
                id
            })
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownTokens(unknown.into_iter().collect()));
        }
        Ok(ids)
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(" ")
    }
}

/// CTC target for one utterance; indices never include the blank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSequence {
    pub utterance_id: String,
    labels: Vec<usize>,
}

impl LabelSequence {
    pub fn new(utterance_id: impl Into<String>, labels: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= vocab_size) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for vocabulary of {vocab_size} (blank is not a label)"
            )));
        }
        Ok(Self {
            utterance_id: utterance_id.into(),
            labels,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_is_last() {
        let v = Vocabulary::new(["a", "b", "c"]).unwrap();
        assert_eq!(v.blank_index(), 3);
        assert_eq!(v.output_dim(), 4);
    }

    #[test]
    fn rejects_bad_inventories() {
        assert!(Vocabulary::new(Vec::<String>::new()).is_err());
        assert!(Vocabulary::new(["a", "a"]).is_err());
        assert!(Vocabulary::new(["a", "<blank>"]).is_err());
    }

    #[test]
    fn unknown_tokens_are_all_listed() {
        let v = Vocabulary::new(["a", "b"]).unwrap();
        match v.encode("a x b y x") {
            Err(Error::UnknownTokens(t)) => assert_eq!(t, vec!["x", "y"]),
            other => panic!("{other:?}"),
        }
        assert_eq!(v.encode("b a").unwrap(), vec![1, 0]);
    }

    #[test]
    fn labels_exclude_blank() {
        assert!(LabelSequence::new("u", vec![0, 2], 2).is_err());
        assert!(LabelSequence::new("u", vec![0, 1], 2).is_ok());
    }
}

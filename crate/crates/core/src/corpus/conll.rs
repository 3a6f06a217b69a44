use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ner::{is_valid_bio, repair_bio, Tag};

/// Tokens with aligned BIO labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
}

impl TaggedSentence {
    pub fn new(tokens: Vec<String>, tags: Vec<Tag>) -> Result<Self> {
        if tokens.len() != tags.len() {
            return Err(Error::Input(alloc::format!(
                "{} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        Ok(Self { tokens, tags })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.tokens.len() == self.tags.len() && is_valid_bio(&self.tags)
    }

    /// The first `n` tokens; truncation never breaks BIO validity.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            tokens: self.tokens[..n].to_vec(),
            tags: self.tags[..n].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConllData {
    pub sentences: Vec<TaggedSentence>,
    /// Stray `I-X` labels promoted to `B-X`.
    pub repairs: usize,
}

/// Parses token-per-line text: token in the first column, tag in the last,
/// blank lines between sentences. `-DOCSTART-` lines are skipped.
pub fn parse_conll(text: &str) -> Result<ConllData> {
    let mut data = ConllData::default();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let flush = |tokens: &mut Vec<String>, tags: &mut Vec<Tag>, data: &mut ConllData| {
        if !tokens.is_empty() {
            data.repairs += repair_bio(tags);
            data.sentences.push(TaggedSentence {
                tokens: core::mem::take(tokens),
                tags: core::mem::take(tags),
            });
        }
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            flush(&mut tokens, &mut tags, &mut data);
            continue;
        }
        if cols[0] == "-DOCSTART-" {
            flush(&mut tokens, &mut tags, &mut data);
            continue;
        }
        if cols.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: "missing tag column".into(),
            });
        }
        let tag: Tag = cols[cols.len() - 1].parse().map_err(|e: Error| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        tokens.push(cols[0].to_string());
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags, &mut data);
    Ok(data)
}

/// `token tag` lines with a blank line after each sentence.
pub fn write_conll(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            let _ = writeln!(out, "{tok} {tag}");
        }
        out.push('\n');
    }
    out
}

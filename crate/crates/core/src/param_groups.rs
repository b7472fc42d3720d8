//! Tensor-name grouping and merge-type parameter selection.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("merge type `{0}` selects no tensors")]
    EmptySelection(MergeType),
    #[error("group rules are empty")]
    EmptyRules,
    #[error("unknown merge type `{0}` (expected full|attention|ffn|base)")]
    UnknownMergeType(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupLabel {
    Attention,
    Ffn,
    Embedding,
    Classifier,
    Other,
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupLabel::Attention => "attention",
            GroupLabel::Ffn => "ffn",
            GroupLabel::Embedding => "embedding",
            GroupLabel::Classifier => "classifier",
            GroupLabel::Other => "other",
        })
    }
}

/// Which subset of parameters a merge touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeType {
    Full,
    Attention,
    Ffn,
    Base,
}

impl MergeType {
    pub const ALL: [MergeType; 4] = [
        MergeType::Full,
        MergeType::Attention,
        MergeType::Ffn,
        MergeType::Base,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MergeType::Full => "full",
            MergeType::Attention => "attention",
            MergeType::Ffn => "ffn",
            MergeType::Base => "base",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MergeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MergeType {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MergeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GroupError::UnknownMergeType(s.to_string()))
    }
}

/// A single name pattern.
///
/// Plain strings match as substrings. Strings containing `*` are globs
/// anchored at both ends, where `*` matches any run of characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern(pub String);

impl Pattern {
    pub fn matches(&self, name: &str) -> bool {
        if self.0.contains('*') {
            glob_match(&self.0, name)
        } else {
            name.contains(self.0.as_str())
        }
    }
}

fn glob_match(pattern: &str, name: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !name.starts_with(first) {
        return false;
    }
    let mut rest = &name[first.len()..];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(i) => rest = &rest[i + mid.len()..],
            None => return false,
        }
    }
    rest.len() >= last.len() && rest.ends_with(last)
}

/// Ordered (label, pattern) rules; first match wins, fallback `other`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRules {
    pub patterns: Vec<(GroupLabel, Pattern)>,
}

impl Default for GroupRules {
    fn default() -> Self {
        use GroupLabel::*;
        let rules: &[(GroupLabel, &str)] = &[
            (Classifier, "classifier"),
            (Classifier, "score"),
            (Classifier, "head"),
            (Attention, "attention"),
            (Attention, "attn"),
            (Ffn, "intermediate"),
            (Ffn, "ffn"),
            (Ffn, "mlp"),
            (Embedding, "embed"),
        ];
        Self {
            patterns: rules
                .iter()
                .map(|&(label, p)| (label, Pattern(p.to_string())))
                .collect(),
        }
    }
}

impl GroupRules {
    pub fn classify(&self, name: &str) -> GroupLabel {
        self.patterns
            .iter()
            .find(|(_, p)| p.matches(name))
            .map(|(label, _)| *label)
            .unwrap_or(GroupLabel::Other)
    }
}

pub fn classify(name: &str, rules: &GroupRules) -> GroupLabel {
    rules.classify(name)
}

/// Resolve `tau` to the names it merges.
pub fn select_params<'a, I>(
    names: I,
    tau: MergeType,
    rules: &GroupRules,
) -> Result<BTreeSet<String>, GroupError>
where
    I: IntoIterator<Item = &'a String>,
{
    if tau != MergeType::Full && rules.patterns.is_empty() {
        return Err(GroupError::EmptyRules);
    }
    let keep = |label: GroupLabel| match tau {
        MergeType::Full => true,
        MergeType::Attention => label == GroupLabel::Attention,
        MergeType::Ffn => label == GroupLabel::Ffn,
        MergeType::Base => label != GroupLabel::Classifier,
    };
    let selected: BTreeSet<String> = names
        .into_iter()
        .filter(|n| tau == MergeType::Full || keep(rules.classify(n)))
        .cloned()
        .collect();
    if selected.is_empty() {
        return Err(GroupError::EmptySelection(tau));
    }
    Ok(selected)
}

//! Label-preserving surface transformations of prompts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Sample, SdgError};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    ReverseWords,
    Lowercase,
    Uppercase,
    RepeatChars,
    PerturbPunctWs,
}

impl Transform {
    /// Application order within a plan.
    pub const ALL: [Transform; 5] = [
        Transform::ReverseWords,
        Transform::Lowercase,
        Transform::Uppercase,
        Transform::RepeatChars,
        Transform::PerturbPunctWs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Transform::ReverseWords => "reverse_words",
            Transform::Lowercase => "lowercase",
            Transform::Uppercase => "uppercase",
            Transform::RepeatChars => "repeat_chars",
            Transform::PerturbPunctWs => "perturb_punct_ws",
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Transform {
    type Err = SdgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Transform::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| SdgError::InvalidPlan(format!("unknown transform `{s}`")))
    }
}

/// Knobs for the randomized transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentParams {
    /// Chance that `repeat_chars` doubles a given character.
    pub repeat_prob: f64,
    /// Chance per whitespace run / word boundary that `perturb_punct_ws` edits it.
    pub whitespace_prob: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            repeat_prob: 0.1,
            whitespace_prob: 0.2,
        }
    }
}

fn reverse_words(prompt: &str) -> String {
    prompt.split_whitespace().rev().collect::<Vec<_>>().join(" ")
}

fn repeat_chars<R: Rng + ?Sized>(prompt: &str, p: f64, rng: &mut R) -> String {
    let mut out = String::with_capacity(prompt.len() * 2);
    for c in prompt.chars() {
        out.push(c);
        if !c.is_whitespace() && rng.random::<f64>() < p {
            out.push(c);
        }
    }
    out
}

fn perturb_punct_ws<R: Rng + ?Sized>(prompt: &str, p: f64, rng: &mut R) -> String {
    let mut out = String::with_capacity(prompt.len() + 8);
    let mut chars = prompt.chars().peekable();
    while let Some(c) = chars.next() {
        if c == ' ' {
            // delete the space (gluing words) or double it
            let roll = rng.random::<f64>();
            if roll < p / 2.0 {
                continue;
            } else if roll < p {
                out.push_str("  ");
                continue;
            }
        }
        out.push(c);
        if c.is_ascii_punctuation() && chars.peek().is_none_or(|n| n.is_whitespace()) && rng.random::<f64>() < p {
            // insert a space before the next word, or double the punctuation
            if chars.peek().is_none() {
                out.push(c);
            } else {
                out.push(' ');
            }
        }
    }
    // terminal punctuation is doubled on a coin flip
    if let Some(last) = out.chars().last() {
        if matches!(last, '.' | '!' | '?') && rng.random::<f64>() < 0.5 {
            out.push(last);
        }
    }
    if out.trim().is_empty() {
        prompt.to_string()
    } else {
        out
    }
}

pub fn augment<R: Rng + ?Sized>(prompt: &str, transform: Transform, params: &AugmentParams, rng: &mut R) -> String {
    match transform {
        Transform::ReverseWords => reverse_words(prompt),
        Transform::Lowercase => prompt.to_lowercase(),
        Transform::Uppercase => prompt.to_uppercase(),
        Transform::RepeatChars => repeat_chars(prompt, params.repeat_prob, rng),
        Transform::PerturbPunctWs => perturb_punct_ws(prompt, params.whitespace_prob, rng),
    }
}

/// Apply each transform to each sample independently with its probability.
///
/// Sample `i` draws from its own stream, so the result for one sample does
/// not depend on the others.
pub fn apply_augmentation_plan(
    samples: &[Sample],
    probs: &BTreeMap<Transform, f64>,
    params: &AugmentParams,
    seed: u64,
) -> Result<Vec<Sample>, SdgError> {
    if let Some((t, p)) = probs.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(SdgError::InvalidPlan(format!("probability for {t} is {p}")));
    }
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream_rng(seed, i as u64);
            let mut prompt = s.prompt.clone();
            for t in Transform::ALL {
                let p = probs.get(&t).copied().unwrap_or(0.0);
                if p > 0.0 && rng.random::<f64>() < p {
                    prompt = augment(&prompt, t, params, &mut rng);
                }
            }
            Sample {
                prompt,
                ..s.clone()
            }
        })
        .collect())
}

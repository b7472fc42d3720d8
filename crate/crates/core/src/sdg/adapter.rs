//! Line-oriented JSON protocol for an external generator process.
//!
//! Each call spawns `sh -c <command>`, writes one JSON request line to its
//! standard input, closes it, and reads JSON lines from standard output.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::prompt::{render_generation_prompt, render_refinement_prompt};
use super::{CountAllocation, Kind, Label, Policy, Sample, SdgError};

#[derive(Debug, Serialize)]
struct GenerationRequest<'a> {
    prompt: &'a str,
    count: u64,
    label: Label,
    kind: Kind,
}

#[derive(Debug, Deserialize)]
struct GeneratedLine {
    prompt: String,
    #[serde(default)]
    rationale: String,
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    task: &'static str,
    texts: &'a [&'a str],
}

#[derive(Debug, Serialize)]
struct RefineRequest<'a> {
    task: &'static str,
    prompt: &'a str,
    count: usize,
}

#[derive(Debug, Deserialize)]
struct RefinedLine {
    label: Label,
}

fn run_adapter(command: &str, request: &str) -> Result<String, SdgError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| SdgError::AdapterExit {
            command: command.to_string(),
            reason: format!("failed to start: {e}"),
        })?;
    {
        let mut stdin = child.stdin.take().expect("stdin is piped");
        // a process that ignores its input may close the pipe early
        let _ = stdin.write_all(request.as_bytes());
        let _ = stdin.write_all(b"\n");
    }
    let output = child.wait_with_output()?;
    if !output.status.success() {
        return Err(SdgError::AdapterExit {
            command: command.to_string(),
            reason: output.status.to_string(),
        });
    }
    String::from_utf8(output.stdout).map_err(|e| SdgError::MalformedAdapterOutput {
        line: 0,
        reason: format!("output is not UTF-8: {e}"),
    })
}

/// Parse the first `n` non-blank lines of adapter output as `T`.
fn parse_lines<T: serde::de::DeserializeOwned>(
    text: &str,
    n: usize,
    kind: Option<Kind>,
) -> Result<Vec<T>, SdgError> {
    let mut out = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        if out.len() == n {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| SdgError::MalformedAdapterOutput {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(item);
    }
    if out.len() < n {
        return Err(SdgError::CountShortfall {
            kind: kind.map(|k| k.to_string()).unwrap_or_else(|| "refine".into()),
            expected: n,
            got: out.len(),
        });
    }
    Ok(out)
}

/// Label a bucket is generated with. Inapplicable prompts are always safe.
pub fn bucket_label(kind: Kind, label: Label) -> Label {
    if kind == Kind::Inapplicable {
        Label::Safe
    } else {
        label
    }
}

/// Request every nonempty bucket of `allocation` from the adapter, in
/// [`Kind::ALL`] order.
pub fn generate_via_adapter(
    policy: &Policy,
    allocation: &CountAllocation,
    label: Label,
    command: &str,
) -> Result<Vec<Sample>, SdgError> {
    policy.validate()?;
    let mut samples = Vec::with_capacity(allocation.total as usize);
    for kind in Kind::ALL {
        let count = allocation.count(kind);
        if count == 0 {
            continue;
        }
        let target = bucket_label(kind, label);
        let prompt = render_generation_prompt(policy, kind, target, count);
        let request = GenerationRequest {
            prompt: &prompt,
            count,
            label: target,
            kind,
        };
        let request = serde_json::to_string(&request).expect("request serialization is infallible");
        let output = run_adapter(command, &request)?;
        let lines: Vec<GeneratedLine> = parse_lines(&output, count as usize, Some(kind))?;
        for (i, g) in lines.into_iter().enumerate() {
            if g.prompt.trim().is_empty() {
                return Err(SdgError::MalformedAdapterOutput {
                    line: i + 1,
                    reason: "empty prompt".into(),
                });
            }
            samples.push(Sample {
                prompt: g.prompt,
                rationale: g.rationale,
                label: target,
                kind,
                policy: policy.name.clone(),
            });
        }
    }
    Ok(samples)
}

/// Ask the adapter for one embedding per text. The reply is one JSON array
/// of numbers per line.
pub fn embed_via_adapter(command: &str, texts: &[&str]) -> Result<Vec<Vec<f64>>, SdgError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let request = serde_json::to_string(&EmbedRequest { task: "embed", texts })
        .expect("request serialization is infallible");
    let output = run_adapter(command, &request)?;
    let vectors: Vec<Vec<f64>> = parse_lines(&output, texts.len(), None)?;
    let dim = vectors[0].len();
    if let Some(i) = vectors.iter().position(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
        return Err(SdgError::MalformedAdapterOutput {
            line: i + 1,
            reason: "embedding length differs or has non-finite values".into(),
        });
    }
    Ok(vectors)
}

/// Send a refinement prompt and replace each sample's label with the
/// adapter's judgement.
pub fn refine_via_adapter(policy: &Policy, samples: &[Sample], command: &str) -> Result<Vec<Sample>, SdgError> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let prompt = render_refinement_prompt(policy, samples);
    let request = serde_json::to_string(&RefineRequest {
        task: "refine",
        prompt: &prompt,
        count: samples.len(),
    })
    .expect("request serialization is infallible");
    let output = run_adapter(command, &request)?;
    let labels: Vec<RefinedLine> = parse_lines(&output, samples.len(), None)?;
    Ok(samples
        .iter()
        .zip(labels)
        .map(|(s, r)| Sample {
            label: r.label,
            ..s.clone()
        })
        .collect())
}

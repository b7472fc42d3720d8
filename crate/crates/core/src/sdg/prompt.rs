//! Text templates sent to an external generator.

use std::fmt::Write;

use super::{Kind, Label, Policy, Sample};

fn bullet_list(out: &mut String, title: &str, items: &[String]) {
    let _ = writeln!(out, "{title}:");
    if items.is_empty() {
        out.push_str("- (none listed)\n");
    }
    for item in items {
        let _ = writeln!(out, "- {item}");
    }
}

fn policy_block(out: &mut String, policy: &Policy) {
    let _ = writeln!(out, "Policy name: {}", policy.name);
    let _ = writeln!(out, "Policy description: {}", policy.description);
    bullet_list(out, "Allowed behaviors", &policy.allowed);
    bullet_list(out, "Disallowed behaviors", &policy.disallowed);
    if !policy.examples.is_empty() {
        out.push_str("Examples:\n");
        for ex in &policy.examples {
            let _ = writeln!(out, "- [{}] {}", ex.label, ex.prompt);
        }
    }
}

fn kind_instructions(kind: Kind, label: Label) -> &'static str {
    match (kind, label) {
        (Kind::Diverse, Label::Safe) => {
            "Strategy: diverse. Write varied prompts, seeded by the examples, that fully comply with the policy."
        }
        (Kind::Diverse, Label::Unsafe) => {
            "Strategy: diverse. Write varied prompts, seeded by the examples, that violate the policy."
        }
        (Kind::InDomain, Label::Safe) => {
            "Strategy: in-domain. Write prompts about the policy's subject area that exercise the allowed behaviors."
        }
        (Kind::InDomain, Label::Unsafe) => {
            "Strategy: in-domain. Write prompts about the policy's subject area that attempt the disallowed behaviors."
        }
        (Kind::Inapplicable, _) => {
            "Strategy: inapplicable. Write ordinary prompts on unrelated topics to which this policy does not apply."
        }
        (Kind::Jailbreak, Label::Safe) => {
            "Strategy: jailbreak framing. Use jailbreak-style framing (role play, hypotheticals, instruction overrides) but keep the request itself compliant with the policy."
        }
        (Kind::Jailbreak, Label::Unsafe) => {
            "Strategy: jailbreak framing. Use jailbreak-style framing (role play, hypotheticals, instruction overrides) to request disallowed behavior."
        }
    }
}

/// Render the request for `count` samples of one (kind, label) bucket.
pub fn render_generation_prompt(policy: &Policy, kind: Kind, label: Label, count: u64) -> String {
    let mut out = String::new();
    out.push_str("You are generating training data for a guardrail classifier.\n\n");
    policy_block(&mut out, policy);
    out.push('\n');
    out.push_str(kind_instructions(kind, label));
    out.push('\n');
    let _ = writeln!(out, "Target label: {label}");
    let _ = writeln!(out, "Number of prompts: {count}");
    out.push_str(
        "Return one JSON object per line with fields \"prompt\" and \"rationale\", where the rationale explains the label.\n",
    );
    out
}

/// Render a request to re-judge labels of generated samples under the policy.
pub fn render_refinement_prompt(policy: &Policy, samples: &[Sample]) -> String {
    let mut out = String::new();
    out.push_str("Review the labels assigned to the prompts below against the policy.\n\n");
    policy_block(&mut out, policy);
    out.push_str("\nPrompts:\n");
    for (i, s) in samples.iter().enumerate() {
        let _ = writeln!(out, "{}. [{}] {}", i + 1, s.label, s.prompt);
    }
    let _ = writeln!(
        out,
        "\nReturn {} lines, one JSON object per prompt in order, with field \"label\" set to \"safe\" or \"unsafe\".",
        samples.len()
    );
    out
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use gmerge_core::sdg::{
    allocate_counts, apply_augmentation_plan, dedup, format_instruction, generate_via_adapter,
    read_samples_jsonl, refine_via_adapter, render_generation_prompt, write_samples_jsonl,
    CountAllocation, Kind, Label, Policy, Sample, Similarity, Transform,
};

use crate::config::{Config, Ratios};
use crate::{parse_enum, CliError};

#[derive(Debug, Subcommand)]
pub enum SdgCommand {
    /// Split a sample budget across generation strategies.
    Allocate(AllocateArgs),
    /// Apply random surface transformations to samples.
    Augment(AugmentArgs),
    /// Drop near-duplicate samples.
    Dedup(DedupArgs),
    /// Request samples from an external generator.
    Generate(GenerateArgs),
    /// Print the generation prompt for one bucket.
    Render(RenderArgs),
    /// Re-judge sample labels through an external generator.
    Refine(RefineArgs),
    /// Turn samples into instruction-formatted classifier inputs.
    Format(FormatArgs),
}

#[derive(Debug, Args)]
pub struct RatioFlags {
    /// Share of diverse prompts.
    #[arg(long)]
    rd: Option<f64>,
    /// Share of in-domain prompts.
    #[arg(long)]
    ri: Option<f64>,
    /// Share of inapplicable prompts.
    #[arg(long)]
    rp: Option<f64>,
}

impl RatioFlags {
    fn resolve(&self, config: Option<Ratios>) -> Result<Ratios, CliError> {
        let pick = |flag: Option<f64>, cfg: Option<f64>, name: &str| {
            flag.or(cfg)
                .ok_or_else(|| CliError::Usage(format!("--{name} is required (or set sdg.ratios in the config)")))
        };
        Ok(Ratios {
            diverse: pick(self.rd, config.map(|r| r.diverse), "rd")?,
            in_domain: pick(self.ri, config.map(|r| r.in_domain), "ri")?,
            inapplicable: pick(self.rp, config.map(|r| r.inapplicable), "rp")?,
        })
    }
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[arg(long)]
    total: u64,
    #[command(flatten)]
    ratios: RatioFlags,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated `transform=probability` pairs.
    #[arg(long, value_delimiter = ',')]
    probs: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    repeat_prob: Option<f64>,
    #[arg(long)]
    whitespace_prob: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    /// Embedding command for cosine similarity; token Jaccard when absent.
    #[arg(long)]
    embed_adapter: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelChoice {
    Safe,
    Unsafe,
    Both,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    adapter: String,
    /// Samples per label.
    #[arg(long)]
    total: u64,
    #[arg(long, value_enum, default_value_t = LabelChoice::Both)]
    label: LabelChoice,
    #[command(flatten)]
    ratios: RatioFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, value_parser = parse_enum::<Kind>)]
    kind: Kind,
    #[arg(long, value_parser = parse_enum::<Label>)]
    label: Label,
    #[arg(long)]
    count: u64,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    adapter: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FormatArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Leave rationales out of the formatted text.
    #[arg(long)]
    no_rationale: bool,
}

fn read_samples(path: &Path) -> Result<Vec<Sample>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    read_samples_jsonl(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_samples(path: &Path, samples: &[Sample]) -> Result<(), CliError> {
    std::fs::write(path, write_samples_jsonl(samples)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_policy(path: &Path) -> Result<Policy, CliError> {
    Policy::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn parse_probs(pairs: &[String]) -> Result<BTreeMap<Transform, f64>, CliError> {
    pairs
        .iter()
        .map(|pair| {
            let (name, p) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("`{pair}` is not transform=probability")))?;
            let t: Transform = name.parse().map_err(|e: gmerge_core::sdg::SdgError| CliError::Usage(e.to_string()))?;
            let p: f64 = p.parse().map_err(|_| CliError::Usage(format!("`{p}` is not a number")))?;
            Ok((t, p))
        })
        .collect()
}

fn allocation(total: u64, r: Ratios) -> Result<CountAllocation, CliError> {
    Ok(allocate_counts(total, r.diverse, r.in_domain, r.inapplicable)?)
}

#[derive(Serialize)]
struct FormattedLine<'a> {
    text: String,
    label: Label,
    kind: Kind,
    policy: &'a str,
}

pub fn run(cmd: SdgCommand, config: Config) -> Result<(), CliError> {
    let sdg = config.sdg;
    match cmd {
        SdgCommand::Allocate(a) => {
            let alloc = allocation(a.total, a.ratios.resolve(sdg.ratios)?)?;
            println!("{}", serde_json::to_string(&alloc).expect("allocation serialization is infallible"));
        }
        SdgCommand::Augment(a) => {
            let probs = match &a.probs {
                Some(pairs) => parse_probs(pairs)?,
                None => sdg.probs,
            };
            let mut params = sdg.augment;
            if let Some(p) = a.repeat_prob {
                params.repeat_prob = p;
            }
            if let Some(p) = a.whitespace_prob {
                params.whitespace_prob = p;
            }
            let samples = read_samples(&a.input)?;
            let out = apply_augmentation_plan(&samples, &probs, &params, a.seed)?;
            write_samples(&a.out, &out)?;
        }
        SdgCommand::Dedup(a) => {
            let threshold = a
                .threshold
                .or(sdg.dedup_threshold)
                .ok_or_else(|| CliError::Usage("--threshold is required".into()))?;
            let similarity = match a.embed_adapter {
                Some(cmd) => Similarity::External(cmd),
                None => Similarity::JaccardTokens,
            };
            let samples = read_samples(&a.input)?;
            let kept = dedup(&samples, &similarity, threshold)?;
            eprintln!("kept {} of {} samples", kept.len(), samples.len());
            write_samples(&a.out, &kept)?;
        }
        SdgCommand::Generate(a) => {
            let policy = load_policy(&a.policy)?;
            let ratios = a.ratios.resolve(sdg.ratios)?;
            let mut samples = Vec::new();
            if a.label != LabelChoice::Unsafe {
                let alloc = allocation(a.total, ratios)?;
                samples.extend(generate_via_adapter(&policy, &alloc, Label::Safe, &a.adapter)?);
            }
            if a.label != LabelChoice::Safe {
                // non-compliant generation has no inapplicable bucket
                let alloc = allocation(a.total, Ratios { inapplicable: 0.0, ..ratios })?;
                samples.extend(generate_via_adapter(&policy, &alloc, Label::Unsafe, &a.adapter)?);
            }
            write_samples(&a.out, &samples)?;
        }
        SdgCommand::Render(a) => {
            let policy = load_policy(&a.policy)?;
            if a.count == 0 {
                return Err(CliError::Usage("--count must be at least 1".into()));
            }
            print!("{}", render_generation_prompt(&policy, a.kind, a.label, a.count));
        }
        SdgCommand::Refine(a) => {
            let policy = load_policy(&a.policy)?;
            let samples = read_samples(&a.input)?;
            let out = refine_via_adapter(&policy, &samples, &a.adapter)?;
            write_samples(&a.out, &out)?;
        }
        SdgCommand::Format(a) => {
            let policy = load_policy(&a.policy)?;
            let samples = read_samples(&a.input)?;
            let mut text = String::new();
            for s in &samples {
                let rationale = if a.no_rationale { "" } else { s.rationale.as_str() };
                let line = FormattedLine {
                    text: format_instruction(&policy.description, &s.prompt, rationale)?,
                    label: s.label,
                    kind: s.kind,
                    policy: &s.policy,
                };
                text.push_str(&serde_json::to_string(&line).expect("line serialization is infallible"));
                text.push('\n');
            }
            std::fs::write(&a.out, text).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
        }
    }
    Ok(())
}

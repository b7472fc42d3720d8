//! The scoring contract used by merge search.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;

use thiserror::Error;

use crate::tensor_store::{encode, TensorMap};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("score {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("evaluator command `{command}` failed: {reason}")]
    Command { command: String, reason: String },
    #[error("evaluator i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// Maps a checkpoint to a score in [0, 1]; higher is better.
pub trait Evaluator {
    fn evaluate(&self, model: &TensorMap) -> Result<f64, EvalError>;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, model: &TensorMap) -> Result<f64, EvalError> {
        (**self).evaluate(model)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, model: &TensorMap) -> Result<f64, EvalError> {
        (**self).evaluate(model)
    }
}

/// Wraps a closure.
pub struct FnEvaluator<F>(pub F);

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&TensorMap) -> Result<f64, EvalError>,
{
    fn evaluate(&self, model: &TensorMap) -> Result<f64, EvalError> {
        (self.0)(model)
    }
}

/// Always returns the same score.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEvaluator(pub f64);

impl Evaluator for ConstantEvaluator {
    fn evaluate(&self, _: &TensorMap) -> Result<f64, EvalError> {
        Ok(self.0)
    }
}

/// Runs `<command> <checkpoint path>` through `sh -c` and parses one
/// decimal in [0, 1] from standard output.
#[derive(Debug, Clone)]
pub struct ExecEvaluator {
    command: String,
    workdir: Option<PathBuf>,
}

impl ExecEvaluator {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            workdir: None,
        }
    }

    /// Directory for candidate checkpoints (default: system temp dir).
    pub fn with_workdir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.workdir = Some(dir.into());
        self
    }

    fn fail(&self, reason: impl Into<String>) -> EvalError {
        EvalError::Command {
            command: self.command.clone(),
            reason: reason.into(),
        }
    }
}

pub fn parse_score(text: &str) -> Result<f64, String> {
    let trimmed = text.trim();
    let score: f64 = trimmed
        .parse()
        .map_err(|_| format!("expected a single decimal on stdout, got {trimmed:?}"))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(format!("score {score} outside [0, 1]"));
    }
    Ok(score)
}

impl Evaluator for ExecEvaluator {
    fn evaluate(&self, model: &TensorMap) -> Result<f64, EvalError> {
        let mut file = match &self.workdir {
            Some(dir) => tempfile::Builder::new().suffix(".gm").tempfile_in(dir)?,
            None => tempfile::Builder::new().suffix(".gm").tempfile()?,
        };
        file.write_all(&encode(model))?;
        file.flush()?;
        let output = Command::new("sh")
            .arg("-c")
            .arg(format!("{} \"$1\"", self.command))
            .arg("gmerge-eval")
            .arg(file.path())
            .output()
            .map_err(|e| self.fail(e.to_string()))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(self.fail(format!("{} ({})", output.status, stderr.trim())));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        parse_score(&stdout).map_err(|e| self.fail(e))
    }
}

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gmerge_core::evaluator::{Evaluator, ExecEvaluator};
use gmerge_core::merge_search::{run_search_with, select_top_k, SearchError};
use gmerge_core::param_groups::classify;
use gmerge_core::toy_eval::{
    build_toy_problem, classifier_evaluator, known_optimum_evaluator, make_synthetic_task,
    ToyTaskSpec,
};
use gmerge_core::{
    apply_merge, load_checkpoint, save_checkpoint, MergeSpec, Tensor, TensorMap,
};

use crate::config::Config;
use crate::{ConvertArgs, CliError, EvalArgs, InspectArgs, MergeArgs, MergeFlags, SearchArgs, ToyArgs};

fn apply_merge_flags(spec: &mut MergeSpec, f: &MergeFlags) {
    if let Some(a) = f.algo {
        spec.algorithm = a;
    }
    if let Some(t) = f.tau {
        spec.tau = t;
    }
    if let Some(w) = &f.weights {
        spec.weights = w.clone();
    }
    if let Some(k) = f.k {
        spec.ties_k = k;
    }
    if let Some(l) = f.lambda {
        spec.lambda = l;
    }
    if let Some(p) = f.p {
        spec.dare_p = p;
    }
    if let Some(t) = f.t {
        spec.slerp_t = t;
    }
    if let Some(m) = f.sign_mode {
        spec.sign_mode = m;
    }
    if let Some(m) = f.disjoint_mode {
        spec.disjoint_mode = m;
    }
    if let Some(c) = f.carrier {
        spec.carrier = c;
    }
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<TensorMap>, CliError> {
    paths.iter().map(|p| load_checkpoint(p).map_err(CliError::from)).collect()
}

fn write_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("output serialization is infallible");
    println!("{text}");
    Ok(())
}

fn load_toy_spec(payload: &str) -> Result<ToyTaskSpec, CliError> {
    let text = if payload.trim_start().starts_with('{') {
        payload.to_string()
    } else {
        std::fs::read_to_string(payload).map_err(|e| CliError::Data(format!("{payload}: {e}")))?
    };
    let spec: ToyTaskSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("invalid toy spec: {e}")))?;
    spec.validate().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(spec)
}

/// Build an evaluator from `kind:payload`.
pub fn build_evaluator(spec: &str) -> Result<Box<dyn Evaluator>, CliError> {
    let (kind, payload) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("evaluator `{spec}` is not of the form kind:value")))?;
    match kind {
        "toy" => {
            let task = load_toy_spec(payload)?;
            let (_, validation) = make_synthetic_task(&task).map_err(|e| CliError::Data(e.to_string()))?;
            Ok(Box::new(classifier_evaluator(validation)))
        }
        "optimum" => Ok(Box::new(known_optimum_evaluator(load_checkpoint(payload)?))),
        "exec" => Ok(Box::new(ExecEvaluator::new(payload))),
        other => Err(CliError::Usage(format!(
            "unknown evaluator kind `{other}` (expected toy, optimum or exec)"
        ))),
    }
}

pub fn merge(args: MergeArgs, config: Config) -> Result<(), CliError> {
    let mut spec = config.merge;
    apply_merge_flags(&mut spec, &args.merge);
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let models = load_all(&args.models)?;
    let refs: Vec<&TensorMap> = models.iter().collect();
    let init = args.init.as_ref().map(load_checkpoint).transpose()?;
    if spec.algorithm.needs_init() && init.is_none() {
        return Err(CliError::Usage(format!("--init is required for {}", spec.algorithm)));
    }
    let merged = apply_merge(&refs, init.as_ref(), &spec, &config.rules)?;
    save_checkpoint(&merged, &args.out)?;
    Ok(())
}

#[derive(Serialize)]
struct SearchSummary {
    best_score: f64,
    iterations: usize,
    /// Input paths in ranked order; weights below follow this order.
    models: Vec<String>,
    standalone_scores: Vec<f64>,
    posterior_mean_weights: Vec<f64>,
    best_iteration: Option<usize>,
}

pub fn search(args: SearchArgs, config: Config) -> Result<(), CliError> {
    let mut search = config.search;
    if let Some(v) = args.iterations {
        search.iterations = v;
    }
    if let Some(v) = args.sampler {
        search.sampler = v;
    }
    if let Some(v) = args.update_rule {
        search.update_rule = v;
    }
    if let Some(v) = args.tau_sampling {
        search.tau_sampling = v;
    }
    if let Some(v) = args.fbest_timing {
        search.fbest_timing = v;
    }
    if let Some(v) = args.top_k {
        search.top_k_models = v;
    }
    if let Some(v) = args.epsilon {
        search.epsilon = v;
    }
    if let Some(v) = &args.taus {
        search.taus = v.clone();
    }
    if let Some(v) = args.seed {
        search.seed = v;
    }
    search.record_timing |= args.timing;
    search.validate()?;

    let mut spec = config.merge;
    apply_merge_flags(&mut spec, &args.merge);

    let evaluator = build_evaluator(&args.evaluator)?;
    let models = load_all(&args.models)?;
    let init = args.init.as_ref().map(load_checkpoint).transpose()?;
    if spec.algorithm.needs_init() && init.is_none() {
        return Err(CliError::Usage(format!("--init is required for {}", spec.algorithm)));
    }

    // Rank the inputs so the carrier (index 0 by default) is the best
    // standalone model.
    let refs: Vec<&TensorMap> = models.iter().collect();
    let ranked = select_top_k(&refs, evaluator.as_ref(), search.top_k_models)?;
    let chosen: Vec<&TensorMap> = ranked.iter().map(|&(i, _)| refs[i]).collect();
    let start = init.clone().unwrap_or_else(|| chosen[0].clone());

    let mut report = args
        .report
        .as_ref()
        .map(|p| File::create(p).map(BufWriter::new).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .transpose()?;
    let result = run_search_with(&chosen, &start, evaluator.as_ref(), &search, &spec, &config.rules, |rec| {
        if let Some(w) = report.as_mut() {
            writeln!(w, "{}", rec.to_json_line())
                .map_err(|e| SearchError::InvalidConfig(format!("cannot write report: {e}")))?;
        }
        Ok(())
    })?;
    if let Some(mut w) = report {
        w.flush()?;
    }
    if let Some(out) = &args.out {
        save_checkpoint(&result.best_params, out)?;
    }

    let best_iteration = result
        .history
        .iter()
        .find(|r| r.score == result.best_score)
        .map(|r| r.iter);
    write_json(&SearchSummary {
        best_score: result.best_score,
        iterations: result.history.len(),
        models: ranked.iter().map(|&(i, _)| args.models[i].display().to_string()).collect(),
        standalone_scores: ranked.iter().map(|&(_, s)| s).collect(),
        posterior_mean_weights: result.state.posterior_mean_weights(),
        best_iteration,
    })
}

pub fn eval(args: EvalArgs, _config: Config) -> Result<(), CliError> {
    let evaluator = build_evaluator(&args.evaluator)?;
    let model = load_checkpoint(&args.model)?;
    let score = evaluator.evaluate(&model)?;
    println!("{score}");
    Ok(())
}

#[derive(Serialize)]
struct TensorSummary {
    name: String,
    shape: Vec<usize>,
    dtype: &'static str,
    group: String,
    params: usize,
}

#[derive(Serialize)]
struct InspectSummary {
    path: String,
    format: &'static str,
    sha256: String,
    tensors: Vec<TensorSummary>,
    num_tensors: usize,
    num_params: usize,
    metadata: BTreeMap<String, String>,
}

pub fn inspect(args: InspectArgs, config: Config) -> Result<(), CliError> {
    let bytes = std::fs::read(&args.path).map_err(|e| CliError::Data(format!("{}: {e}", args.path.display())))?;
    let map = gmerge_core::tensor_store::decode(&bytes, &args.path, Default::default())?;
    let summary = InspectSummary {
        path: args.path.display().to_string(),
        format: gmerge_core::tensor_store::FORMAT_VERSION,
        sha256: hex::encode(Sha256::digest(&bytes)),
        tensors: map
            .iter()
            .map(|(name, t)| TensorSummary {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype: t.dtype(),
                group: classify(name, &config.rules).to_string(),
                params: t.len(),
            })
            .collect(),
        num_tensors: map.len(),
        num_params: map.num_params(),
        metadata: map.metadata().clone(),
    };
    if args.json {
        return write_json(&summary);
    }
    println!("path:     {}", summary.path);
    println!("format:   {}", summary.format);
    println!("sha256:   {}", summary.sha256);
    println!("tensors:  {}", summary.num_tensors);
    println!("params:   {}", summary.num_params);
    for (k, v) in &summary.metadata {
        println!("meta:     {k} = {v}");
    }
    for t in &summary.tensors {
        println!("  {:<48} {:<14} {:<10} {}", t.name, format!("{:?}", t.shape), t.group, t.params);
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDump {
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    tensors: Vec<JsonTensor>,
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

pub fn convert(args: ConvertArgs) -> Result<(), CliError> {
    let map = if is_json(&args.input) {
        let text = std::fs::read_to_string(&args.input)
            .map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
        let dump: JsonDump = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
        let mut map = TensorMap::new();
        for t in dump.tensors {
            map.insert(t.name, Tensor::new(t.shape, t.data)?)?;
        }
        *map.metadata_mut() = dump.metadata;
        map
    } else {
        load_checkpoint(&args.input)?
    };
    if is_json(&args.output) {
        let dump = JsonDump {
            metadata: map.metadata().clone(),
            tensors: map
                .iter()
                .map(|(name, t)| JsonTensor {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&dump).expect("dump serialization is infallible");
        std::fs::write(&args.output, text + "\n")?;
    } else {
        save_checkpoint(&map, &args.output)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ToySummary {
    init: String,
    models: Vec<String>,
    standalone_scores: Vec<f64>,
}

pub fn toy(args: ToyArgs, config: Config) -> Result<(), CliError> {
    let mut spec = match (&args.spec, config.toy) {
        (Some(path), _) => load_toy_spec(&path.display().to_string())?,
        (None, Some(spec)) => spec,
        (None, None) => return Err(CliError::Usage("--spec or a `toy` config section is required".into())),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let problem = build_toy_problem(&spec).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::create_dir_all(&args.out_dir)?;
    let evaluator = classifier_evaluator(problem.validation.clone());
    let init_path = args.out_dir.join("init.gm");
    save_checkpoint(&problem.init, &init_path)?;
    let mut models = Vec::new();
    let mut scores = Vec::new();
    for (i, m) in problem.models.iter().enumerate() {
        let path = args.out_dir.join(format!("slice_{i}.gm"));
        save_checkpoint(m, &path)?;
        models.push(path.display().to_string());
        scores.push(evaluator.evaluate(m)?);
    }
    let spec_text = serde_json::to_string_pretty(&spec).expect("spec serialization is infallible");
    std::fs::write(args.out_dir.join("task.json"), spec_text + "\n")?;
    write_json(&ToySummary {
        init: init_path.display().to_string(),
        models,
        standalone_scores: scores,
    })
}

//! One function per subcommand. Errors are prefixed with the module that
//! raised them.

use fifaudit::checks::run_checks;
use fifaudit::classifier::{
    build_fixed_tree, from_prediction_column, train_logistic, train_tree, LogisticOptions, SavedModel, TreeOptions,
};
use fifaudit::dataset::synthetic::{
    generate_insurance_example, generate_population, InsuranceParams, PopulationParams, EXAMPLE_SEED,
};
use fifaudit::dataset::{load_csv, load_schema, write_csv};
use fifaudit::fif::{fif, FifOptions};
use fifaudit::interventions::{simulate as run_simulation, Intervention, Trainer};
use fifaudit::metrics::{self, MetricKind};
use fifaudit::report;
use fifaudit::{Dataset, Predictor, TreeNode};
use serde_json::Value;

use crate::output::{emit, write_atomic};
use crate::{
    CheckArgs, DataArgs, ExplainArgs, Failure, Format, GenerateArgs, Generator, InterventionKind, MetricsArgs,
    SimulateArgs, TrainerKind,
};

fn data_err(module: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{module}: {e}"))
}

fn load(args: &DataArgs) -> Result<Dataset, Failure> {
    let schema =
        load_schema(&args.schema).map_err(|e| data_err("dataset", format!("{}: {e}", args.schema.display())))?;
    load_csv(&args.data, &schema).map_err(|e| data_err("dataset", format!("{}: {e}", args.data.display())))
}

/// Resolves `--model` against the loaded data.
fn model(spec: &str, d: &Dataset) -> Result<Box<dyn Predictor>, Failure> {
    let classifier = |e| data_err("classifier", e);
    Ok(match spec {
        "logistic" => Box::new(
            train_logistic(d, &LogisticOptions::default())
                .map_err(classifier)?
                .model,
        ),
        "tree" => Box::new(train_tree(d, &TreeOptions::default()).map_err(classifier)?),
        "column" => Box::new(from_prediction_column(d).map_err(classifier)?),
        "dt1" => Box::new(build_fixed_tree(&TreeNode::dt1(), d.schema()).map_err(classifier)?),
        "dt2" => Box::new(build_fixed_tree(&TreeNode::dt2(), d.schema()).map_err(classifier)?),
        path => {
            let text =
                std::fs::read_to_string(path).map_err(|e| data_err("classifier", format!("model file {path}: {e}")))?;
            // A saved model carries a "type" tag; anything else is read as a
            // bare fixed-tree spec.
            if let Ok(saved) = serde_json::from_str::<SavedModel>(&text) {
                saved.into_predictor(d.schema()).map_err(classifier)?
            } else {
                let root: TreeNode = serde_json::from_str(&text)
                    .map_err(|e| data_err("classifier", format!("model file {path}: {e}")))?;
                Box::new(build_fixed_tree(&root, d.schema()).map_err(classifier)?)
            }
        }
    })
}

/// Worker threads, capped by `FIFAUDIT_THREADS` when set.
fn fif_options(seed: u64) -> Result<FifOptions, Failure> {
    let mut opts = FifOptions {
        seed,
        ..FifOptions::default()
    };
    if let Ok(v) = std::env::var("FIFAUDIT_THREADS") {
        let cap: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Failure::Usage(format!("FIFAUDIT_THREADS must be a positive integer, got {v:?}")))?;
        opts.threads = opts.threads.min(cap);
    }
    Ok(opts)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn metrics(args: &MetricsArgs) -> Result<(), Failure> {
    if args.out.format == Format::Svg {
        return Err(Failure::Usage("metrics supports --format json or csv".into()));
    }
    let d = load(&args.data)?;
    let m = model(&args.model, &d)?;
    let preds = m.predict_all(&d).map_err(|e| data_err("classifier", e))?;
    let results = MetricKind::ALL
        .iter()
        .map(|&k| metrics::compute_from(k, &d, &preds).map_err(|e| data_err("metrics", e)))
        .collect::<Result<Vec<_>, _>>()?;
    let text = match args.out.format {
        Format::Csv => report::metrics_csv(&results),
        _ => pretty(&report::metrics_json(&results)),
    };
    emit(args.out.out.as_deref(), &text)
}

pub fn explain(args: &ExplainArgs) -> Result<(), Failure> {
    let d = load(&args.data)?;
    let m = model(&args.model, &d)?;
    let opts = fif_options(args.seed)?;
    let r =
        fif(args.metric.into(), m.as_ref(), &d, usize::from(args.max_order), &opts).map_err(|e| data_err("fif", e))?;
    let top = usize::from(args.top);
    let text = match args.out.format {
        Format::Json => pretty(&report::fif_json(&r, top)),
        Format::Csv => report::fif_csv(&r, top),
        Format::Svg => report::fif_svg(&r, top),
    };
    emit(args.out.out.as_deref(), &text)?;
    match &args.chart {
        Some(path) => write_atomic(path, &report::fif_svg(&r, top)),
        None => Ok(()),
    }
}

pub fn check(args: &CheckArgs) -> Result<(), Failure> {
    let outcomes = run_checks(args.seed);
    let width = outcomes.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut failed = 0;
    for c in &outcomes {
        if !c.passed {
            failed += 1;
        }
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:width$}  {}", c.name, c.detail);
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Check(failed))
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    if !(args.fraction > 0.0 && args.fraction <= 1.0) {
        return Err(Failure::Usage(format!(
            "--fraction must be in (0, 1], got {}",
            args.fraction
        )));
    }
    let d = load(&args.data)?;
    let trainer = match args.model {
        TrainerKind::Logistic => Trainer::Logistic(LogisticOptions::default()),
        TrainerKind::Tree => Trainer::Tree(TreeOptions::default()),
    };
    let intervention = match args.intervention {
        InterventionKind::Reweigh => Intervention::Reweigh,
        InterventionKind::Poison => Intervention::Poison {
            fraction: args.fraction,
            seed: args.seed,
        },
    };
    let opts = fif_options(args.seed)?;
    let rec = run_simulation(
        &d,
        intervention,
        trainer,
        args.metric.into(),
        usize::from(args.max_order),
        &opts,
    )
    .map_err(|e| data_err("interventions", e))?;
    let top = usize::from(args.top);
    let text = match args.out.format {
        Format::Json => pretty(&report::intervention_json(&rec, top)),
        Format::Csv => report::intervention_csv(&rec),
        Format::Svg => report::intervention_svg(&rec, top),
    };
    emit(args.out.out.as_deref(), &text)?;
    let chart = match (&args.chart, &args.out.out) {
        (Some(c), _) => Some(c.clone()),
        (None, Some(o)) if args.out.format != Format::Svg => Some(o.with_extension("svg")),
        _ => None,
    };
    if let Some(path) = chart {
        write_atomic(&path, &report::intervention_svg(&rec, top))?;
    }
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<(), Failure> {
    if args.n == Some(0) {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let d = match args.kind {
        Generator::Insurance => generate_insurance_example(
            args.n.unwrap_or(500),
            &InsuranceParams::default(),
            args.seed.unwrap_or(EXAMPLE_SEED),
        ),
        Generator::Population => {
            if args.k == 0 {
                return Err(Failure::Usage("--k must be at least 1".into()));
            }
            let defaults = PopulationParams::default();
            generate_population(&PopulationParams {
                n: args.n.unwrap_or(defaults.n),
                k: args.k,
                seed: args.seed.unwrap_or(defaults.seed),
                ..defaults
            })
        }
    };
    let mut csv = Vec::new();
    write_csv(&d, &mut csv).map_err(|e| data_err("dataset", e))?;
    let csv = String::from_utf8(csv).map_err(|e| data_err("dataset", e))?;
    let schema = serde_json::to_value(d.schema()).map_err(|e| data_err("dataset", e))?;
    write_atomic(&args.out, &csv)?;
    write_atomic(&args.schema_out, &pretty(&schema))?;
    Ok(())
}

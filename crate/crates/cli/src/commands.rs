use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nrgboost::boosting::{train, BoostConfig, History};
use nrgboost::data::{
    discretize, fit_discretizer, infer_schema, undiscretize, ColumnHints, FeatureSpec, RawTable,
    Schema,
};
use nrgboost::def::{def_log_density, def_sample_n, fit_def, DefConfig};
use nrgboost::inference::{
    conditional_with_missing, exact_log_partition, predict, LogDensity, Prediction, Statistic,
    MARGINALIZATION_BUDGET,
};
use nrgboost::metrics::{accuracy, auc, crps, mae, r2, PiecewiseUniform};
use nrgboost::model_file::{ModelFile, SavedModel};
use nrgboost::sampling::{sample, SampleMode};
use nrgboost::toy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::args::{
    Command, DataArgs, DefCommand, DefTrainArgs, EvalArgs, Format, InferArgs, InspectArgs, Mode,
    QueryArgs, SampleArgs, ToyArgs, TrainArgs,
};
use crate::io::{
    csv_writer, load_model, output, read_config, read_table, seed_or_random, training_table,
};

const DEFAULT_BURN_IN: usize = 100;
const DEFAULT_THIN: usize = 10;
const DEFAULT_CHAINS: usize = 64;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Sample(a) => cmd_sample(a, None),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a, None),
        Command::Toy(a) => cmd_toy(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Def(DefCommand::Train(a)) => cmd_def_train(a),
        Command::Def(DefCommand::Sample(a)) => cmd_sample(a, Some("def")),
        Command::Def(DefCommand::Eval(a)) => cmd_eval(a, Some("def")),
    }
}

fn fit_schema(
    table: &RawTable,
    hints: &ColumnHints,
    args: &DataArgs,
    target: Option<&str>,
) -> Result<Schema> {
    let mut schema = infer_schema(table, Some(hints))?;
    schema = fit_discretizer(table, &schema, args.max_bins as usize)?;
    if let Some(t) = target {
        schema = schema
            .with_target(t)
            .with_context(|| format!("target column `{t}`"))?;
    }
    Ok(schema)
}

fn boost_config(a: &TrainArgs) -> Result<BoostConfig> {
    let mut cfg = match read_config(a.config.as_deref())? {
        Some(s) => BoostConfig::from_toml_str(&s)?,
        None => BoostConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = a.$flag { cfg.$field = v; })*
        };
    }
    set!(rounds => num_rounds, leaves => max_leaves, max_ratio => max_ratio,
        shrinkage => shrinkage, p_refresh => p_refresh, min_data_in_leaf => min_data_in_leaf,
        min_model_in_leaf => min_model_in_leaf, uniform_mix => uniform_mix,
        burn_in_refill => burn_in_refill);
    if let Some(m) = a.pool_size {
        cfg.pool_size = Some(m);
    }
    if let Some(r) = &a.update_rule {
        cfg.update_rule = r.parse()?;
    }
    if let Some(p) = a.patience {
        cfg.early_stopping.patience = p;
    }
    if let Some(m) = &a.metric {
        cfg.early_stopping.metric = m.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn history_path(a: &TrainArgs) -> PathBuf {
    a.history.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".history.csv");
        PathBuf::from(p)
    })
}

fn write_history(path: &Path, history: &History) -> Result<()> {
    let mut w = csv_writer(Some(path))?;
    w.write_record([
        "round",
        "gain",
        "alpha",
        "step",
        "objective",
        "leaves",
        "acceptance_rate",
        "refilled",
        "validation",
    ])?;
    for r in &history.rounds {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        w.write_record([
            r.round.to_string(),
            r.gain.to_string(),
            r.alpha.to_string(),
            r.step.to_string(),
            r.objective.to_string(),
            r.leaves.to_string(),
            opt(r.acceptance_rate),
            r.refilled.to_string(),
            opt(history.validation.get(r.round).copied()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = boost_config(&a)?;
    let (table, hints) = training_table(&a.data)?;
    if a.validation.is_some() && a.target.is_none() {
        bail!("--validation needs --target");
    }
    if cfg.early_stopping.patience > 0 && a.validation.is_none() {
        log::warn!("patience is set but no --validation file was given; early stopping is off");
    }
    let schema = fit_schema(&table, &hints, &a.data, a.target.as_deref())?;
    let data = discretize(&table, &schema)?;
    let val = match &a.validation {
        Some(p) => Some(discretize(&read_table(p)?, &schema)?),
        None => None,
    };
    let seed = seed_or_random(a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    log::info!(
        "training on {} rows, {} features, seed {seed}",
        data.n_rows(),
        schema.n_features()
    );
    let (model, history) = train(&data, val.as_ref(), &cfg, &mut rng)?;
    let mut file = ModelFile::new(SavedModel::Nrgboost(model));
    file.config = Some(cfg.to_toml_string());
    file.seed = Some(seed);
    file.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    write_history(&history_path(&a), &history)?;
    log::info!("kept {} rounds", history.best_round);
    Ok(())
}

fn cmd_def_train(a: DefTrainArgs) -> Result<()> {
    let mut cfg = match read_config(a.config.as_deref())? {
        Some(s) => DefConfig::from_toml_str(&s)?,
        None => DefConfig::default(),
    };
    if let Some(v) = a.trees {
        cfg.n_trees = v;
    }
    if let Some(v) = a.leaves {
        cfg.max_leaves = v;
    }
    if let Some(v) = a.feature_fraction {
        cfg.feature_fraction = v;
    }
    if let Some(v) = a.min_data_in_leaf {
        cfg.min_data_in_leaf = v;
    }
    if let Some(c) = &a.criterion {
        cfg.criterion = c.parse()?;
    }
    if a.no_bootstrap {
        cfg.bootstrap = false;
    }
    cfg.validate()?;
    let (table, hints) = training_table(&a.data)?;
    let schema = fit_schema(&table, &hints, &a.data, None)?;
    let data = discretize(&table, &schema)?;
    let seed = seed_or_random(a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forest = fit_def(&data, &cfg, &mut rng)?;
    let mut file = ModelFile::new(SavedModel::Def(forest));
    file.config = Some(cfg.to_toml_string());
    file.seed = Some(seed);
    file.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn expect_kind(file: &ModelFile, kind: Option<&str>) -> Result<()> {
    match kind {
        Some(k) if file.model.kind() != k => {
            bail!("expected a {k} model, found {}", file.model.kind())
        }
        _ => Ok(()),
    }
}

fn cmd_sample(a: SampleArgs, kind: Option<&str>) -> Result<()> {
    let file = load_model(&a.model)?;
    expect_kind(&file, kind)?;
    let seed = seed_or_random(a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = match &file.model {
        SavedModel::Nrgboost(m) => {
            let mode = match a.mode.unwrap_or(Mode::Thinned) {
                Mode::Independent => SampleMode::Independent,
                Mode::Thinned => SampleMode::Thinned {
                    thin: a.thin.unwrap_or(DEFAULT_THIN),
                },
            };
            let burn_in = a.burn_in.unwrap_or(DEFAULT_BURN_IN);
            let chains = a.chains.unwrap_or(DEFAULT_CHAINS);
            sample(m, a.n, burn_in, mode, chains, &mut rng)?
        }
        SavedModel::Def(e) => {
            if a.burn_in.is_some() || a.mode.is_some() || a.thin.is_some() || a.chains.is_some() {
                log::warn!("forests are sampled exactly; chain flags are ignored");
            }
            def_sample_n(e, a.n, &mut rng)
        }
    };
    let schema = file.model.schema();
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record(schema.features.iter().map(|f| f.name.as_str()))?;
    for x in rows.rows() {
        let raw = undiscretize(x, schema, &mut rng);
        w.write_record(raw.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Observation rows of a query file, with the coordinates to marginalize.
struct Query {
    target: usize,
    rows: Vec<Vec<u8>>,
    missing: Vec<Vec<usize>>,
    /// Raw target cells, empty when the column is absent.
    truth: Vec<String>,
}

fn encode_query(schema: &Schema, table: &RawTable, args: &QueryArgs) -> Result<Query> {
    let target = schema
        .feature_index(&args.target)
        .with_context(|| format!("target column `{}`", args.target))?;
    let mut declared = Vec::new();
    for name in &args.missing {
        declared.push(
            schema
                .feature_index(name)
                .with_context(|| format!("missing column `{name}`"))?,
        );
    }
    let cols: Vec<Option<usize>> = schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let col = table.headers.iter().position(|h| *h == f.name);
            if col.is_none() && j != target && !declared.contains(&j) {
                bail!("column `{}` is absent; list it under --missing", f.name);
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;
    let mut q = Query {
        target,
        rows: Vec::with_capacity(table.n_rows()),
        missing: Vec::with_capacity(table.n_rows()),
        truth: Vec::new(),
    };
    for (r, cells) in table.rows.iter().enumerate() {
        if cells.len() != table.headers.len() {
            bail!(
                "row {r} has {} cells, expected {}",
                cells.len(),
                table.headers.len()
            );
        }
        let mut x = vec![0u8; schema.n_features()];
        let mut miss = declared.clone();
        for (j, (col, spec)) in cols.iter().zip(&schema.features).enumerate() {
            if j == target || declared.contains(&j) {
                continue;
            }
            let cell = &cells[col.expect("checked above")];
            if cell.is_empty() {
                miss.push(j);
            } else {
                x[j] = spec.encode(cell, r)?;
            }
        }
        q.rows.push(x);
        q.missing.push(miss);
        if let Some(c) = cols[target] {
            q.truth.push(cells[c].clone());
        }
    }
    Ok(q)
}

fn model_density(model: &SavedModel) -> &(dyn LogDensity + Sync) {
    match model {
        SavedModel::Nrgboost(m) => m,
        SavedModel::Def(e) => e,
    }
}

fn conditionals(model: &SavedModel, q: &Query) -> Result<Vec<Vec<f64>>> {
    let density = model_density(model);
    q.rows
        .par_iter()
        .zip(&q.missing)
        .map(|(x, miss)| {
            conditional_with_missing(density, x, q.target, miss, MARGINALIZATION_BUDGET)
                .map_err(anyhow::Error::from)
        })
        .collect()
}

fn default_statistic(spec: &FeatureSpec) -> Statistic {
    if spec.is_categorical() {
        Statistic::Mode
    } else {
        Statistic::Mean
    }
}

fn prediction_cell(p: Prediction) -> String {
    match p {
        Prediction::Value(v) => v.to_string(),
        Prediction::Category { label, .. } => label,
    }
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    let file = load_model(&a.query.model)?;
    let schema = file.model.schema();
    let table = read_table(&a.query.data)?;
    let q = encode_query(schema, &table, &a.query)?;
    let spec = &schema.features[q.target];
    let probs = conditionals(&file.model, &q)?;
    let mut w = csv_writer(a.out.as_deref())?;
    if a.probabilities {
        let header: Vec<String> = (0..spec.cardinality)
            .map(|b| {
                if spec.is_categorical() {
                    format!("p_{}", spec.categories[b])
                } else {
                    format!("p_{b}")
                }
            })
            .collect();
        w.write_record(&header)?;
        for p in &probs {
            w.write_record(p.iter().map(|v| v.to_string()))?;
        }
    } else {
        let statistic = match &a.statistic {
            Some(s) => s.parse()?,
            None => default_statistic(spec),
        };
        w.write_record([spec.name.as_str()])?;
        for p in &probs {
            w.write_record([prediction_cell(predict(p, spec, statistic)?)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn joint_log_likelihood(model: &SavedModel, q: &Query) -> Option<f64> {
    let spec = &model.schema().features[q.target];
    let mut rows = Vec::with_capacity(q.rows.len());
    for ((x, miss), t) in q.rows.iter().zip(&q.missing).zip(&q.truth) {
        if !miss.is_empty() {
            return None;
        }
        let mut y = x.clone();
        y[q.target] = spec.encode(t, 0).ok()?;
        rows.push(y);
    }
    let total: f64 = match model {
        SavedModel::Nrgboost(m) => {
            let z = exact_log_partition(m).ok()?;
            rows.iter().map(|x| m.energy(x) - z).sum()
        }
        SavedModel::Def(e) => rows.iter().map(|x| def_log_density(e, x)).sum(),
    };
    Some(total / rows.len() as f64)
}

fn cmd_eval(a: EvalArgs, kind: Option<&str>) -> Result<()> {
    let file = load_model(&a.query.model)?;
    expect_kind(&file, kind)?;
    let schema = file.model.schema();
    let table = read_table(&a.query.data)?;
    let q = encode_query(schema, &table, &a.query)?;
    if q.truth.len() != q.rows.len() {
        bail!("target column `{}` is absent from the data", a.query.target);
    }
    let spec = &schema.features[q.target];
    let probs = conditionals(&file.model, &q)?;
    let mut metrics: Vec<(&str, f64)> = vec![("rows", q.rows.len() as f64)];
    if spec.is_categorical() {
        let predicted: Vec<String> = probs
            .iter()
            .map(|p| predict(p, spec, Statistic::Mode).map(prediction_cell))
            .collect::<nrgboost::Result<_>>()?;
        metrics.push(("accuracy", accuracy(&predicted, &q.truth)?));
        if spec.cardinality == 2 {
            let labels: Vec<bool> = q.truth.iter().map(|t| *t == spec.categories[1]).collect();
            let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
            metrics.push(("auc", auc(&scores, &labels)?));
        }
    } else {
        let y: Vec<f64> = q
            .truth
            .iter()
            .enumerate()
            .map(|(r, t)| {
                t.parse::<f64>()
                    .map_err(|_| anyhow!("row {r}: `{t}` is not a number"))
            })
            .collect::<Result<_>>()?;
        let point = |s: Statistic| -> Result<Vec<f64>> {
            probs
                .iter()
                .map(|p| match predict(p, spec, s)? {
                    Prediction::Value(v) => Ok(v),
                    Prediction::Category { .. } => unreachable!("numeric target"),
                })
                .collect()
        };
        metrics.push(("r2", r2(&point(Statistic::Mean)?, &y)?));
        metrics.push(("mae", mae(&point(Statistic::Median)?, &y)?));
        let mut total = 0.0;
        for (p, &v) in probs.iter().zip(&y) {
            total += crps(&PiecewiseUniform::from_spec(spec, p.clone())?, v);
        }
        metrics.push(("crps", total / y.len() as f64));
    }
    if let Some(ll) = joint_log_likelihood(&file.model, &q) {
        metrics.push(("log_likelihood", ll));
    }
    let mut out = output(a.out.as_deref())?;
    match a.format {
        Format::Csv => {
            writeln!(out, "metric,value")?;
            for (k, v) in &metrics {
                writeln!(out, "{k},{v}")?;
            }
        }
        Format::Text => {
            for (k, v) in &metrics {
                writeln!(out, "{k:<16}{v:>14.6}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_toy(a: ToyArgs) -> Result<()> {
    let mut w = csv_writer(a.out.as_deref())?;
    if a.exact_density {
        let grid = toy::exact_density_grid();
        let spec = &toy::toy_schema().features[0];
        w.write_record(["x_bin", "y_bin", "x", "y", "probability"])?;
        for (i, p) in grid.iter().enumerate() {
            let (bx, by) = (i / toy::N_BINS, i % toy::N_BINS);
            w.write_record([
                bx.to_string(),
                by.to_string(),
                spec.bin_midpoint(bx).to_string(),
                spec.bin_midpoint(by).to_string(),
                p.to_string(),
            ])?;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_or_random(a.seed));
        w.write_record(["x", "y"])?;
        for ([x, y], _) in toy::toy_samples(a.n as usize, &mut rng) {
            w.write_record([x.to_string(), y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let schema = file.model.schema();
    let mut out = output(None)?;
    writeln!(out, "kind: {}", file.model.kind())?;
    writeln!(out, "features: {}", schema.n_features())?;
    for (j, f) in schema.features.iter().enumerate() {
        let kind = if f.is_categorical() {
            "categorical"
        } else {
            "numeric"
        };
        let tag = if schema.target_index == Some(j) {
            " (target)"
        } else {
            ""
        };
        writeln!(out, "  {j}: {} {kind}, {} bins{tag}", f.name, f.cardinality)?;
    }
    if !schema.dropped.is_empty() {
        writeln!(out, "dropped: {}", schema.dropped.join(", "))?;
    }
    match &file.model {
        SavedModel::Nrgboost(m) => {
            let leaves: usize = m.stages.iter().map(|s| s.tree.num_leaves()).sum();
            writeln!(out, "initial uniform mix: {}", m.initial.uniform_mix())?;
            writeln!(out, "stages: {}", m.stages.len())?;
            writeln!(out, "leaves: {leaves}")?;
            if let Some(s) = m.stages.first() {
                writeln!(out, "first step: {}", s.step)?;
            }
        }
        SavedModel::Def(e) => {
            let leaves: usize = e.trees().iter().map(|t| t.num_leaves()).sum();
            writeln!(out, "trees: {}", e.trees().len())?;
            writeln!(out, "leaves: {leaves}")?;
        }
    }
    if let Some(seed) = file.seed {
        writeln!(out, "seed: {seed}")?;
    }
    if let Some(cfg) = &file.config {
        writeln!(out, "config:")?;
        for line in cfg.lines() {
            writeln!(out, "  {line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

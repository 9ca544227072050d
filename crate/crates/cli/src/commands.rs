use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use rpsgmm::bundle::{load_bundle, save_bundle};
use rpsgmm::classifier::{self as clf, GridConfig, GridSummary};
use rpsgmm::data::{
    infer_channels, load_dataset, save_dataset, ClassLabel, DataError, Dataset, TimeSeries,
};
use rpsgmm::embedding::EmbeddingParams;
use rpsgmm::gmm::FitConfig;
use rpsgmm::io::write_atomic_bytes;
use rpsgmm::metrics::{self, EvalReport};
use rpsgmm::preprocess::{self, moving_average, PreprocessConfig};
use rpsgmm::synth::{generate_synthetic, SyntheticSpec};

use crate::error::CliError;
use crate::{
    ClassifyArgs, EvaluateArgs, FitArgs, GridArgs, PlotArgs, PreprocessArgs, SynthArgs, TrainArgs,
};

const DEFAULT_SEED: u64 = 42;

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic_bytes(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn parse_range<T>(text: &str, what: &str) -> Result<(T, T), CliError>
where
    T: FromStr + PartialOrd + Copy,
{
    let bad = || CliError::Usage(format!("{what} must look like LO:HI, got {text:?}"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: T = lo.trim().parse().map_err(|_| bad())?;
    let hi: T = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(CliError::Usage(format!("{what} {text:?} is empty")));
    }
    Ok((lo, hi))
}

fn fit_config(args: &FitArgs, seed: Option<u64>) -> Result<FitConfig, CliError> {
    let cfg = FitConfig {
        n_components: args.components,
        n_init: args.n_init,
        max_iter: args.max_iter,
        tol: args.tol,
        reg: args.reg,
        seed: seed.unwrap_or(DEFAULT_SEED),
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Loads every channel present in the file, then keeps `channels` if given.
fn load_data(path: &Path, channels: Option<&[String]>) -> Result<Dataset, CliError> {
    let all = infer_channels(path)?;
    if all.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no observations",
            path.display()
        )));
    }
    let data = load_dataset(path, &all)?;
    if data.is_empty() {
        return Err(CliError::Data(format!("{}: no series", path.display())));
    }
    match channels {
        Some(ch) => Ok(data.select_channels(ch)?),
        None => Ok(data),
    }
}

fn representatives<'a>(
    data: &'a Dataset,
    spec: Option<&str>,
) -> Result<Vec<(ClassLabel, &'a TimeSeries)>, CliError> {
    let Some(spec) = spec else {
        if !data.is_fully_labeled() {
            return Err(CliError::Data(
                "cannot pick default representatives from unlabeled data; pass --reps".into(),
            ));
        }
        return Ok(data.first_of_each_class());
    };
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (label, id) = part.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--reps entry {part:?} is not CLASS=SERIES_ID"))
        })?;
        let label: ClassLabel = label
            .parse()
            .map_err(|e: DataError| CliError::Usage(e.to_string()))?;
        let series = data
            .get(id.trim())
            .ok_or_else(|| CliError::from(DataError::UnknownSeries(id.trim().to_string())))?;
        if let Some(own) = series.label() {
            if *own != label {
                eprintln!("rpsgmm: warning: representative {id} is labeled {own} but used for class {label}");
            }
        }
        out.push((label, series));
    }
    if out.len() < 2 {
        return Err(CliError::Usage("--reps needs at least two classes".into()));
    }
    Ok(out)
}

pub fn preprocess(args: PreprocessArgs) -> Result<(), CliError> {
    let config = PreprocessConfig {
        window: parse_range(&args.window, "--window")?,
        smooth_window: args.smooth_window,
        smooth_p_water: args.smooth_p_water,
    };
    if config.smooth_window == 0 {
        return Err(CliError::Usage("--smooth-window must be >= 1".into()));
    }
    let raws = preprocess::load_raw(&args.raw)?;
    if raws.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no observations",
            args.raw.display()
        )));
    }
    let data = preprocess::preprocess_all(&raws, &config)?;
    save_dataset(&data, &args.out)?;
    Ok(())
}

pub fn train(args: TrainArgs, seed: Option<u64>) -> Result<(), CliError> {
    let params =
        EmbeddingParams::new(args.tau, args.dim).map_err(|e| CliError::Usage(e.to_string()))?;
    let fit = fit_config(&args.fit, seed)?;
    let data = load_data(&args.data.data, args.data.channels.as_deref())?;
    let reps = representatives(&data, args.data.reps.as_deref())?;
    let bundle = clf::train(&reps, params, &fit)?;
    let prepared = bundle.prepare()?;
    for (label, rep) in &reps {
        let got = prepared.classify(rep)?.label;
        if &got != label {
            eprintln!(
                "rpsgmm: warning: representative {} of class {label} classifies as {got}",
                rep.id()
            );
        }
    }
    save_bundle(&bundle, &args.out)?;
    Ok(())
}

pub fn classify(args: ClassifyArgs) -> Result<(), CliError> {
    let bundle = load_bundle(&args.bundle)?;
    let data = load_data(&args.data, Some(bundle.channels()))?;
    let prepared = bundle.prepare()?;
    let mut out = String::from("series_id,predicted");
    for label in bundle.class_order() {
        write!(out, ",loglik_{label}").unwrap();
    }
    out.push('\n');
    for s in data.iter() {
        let c = prepared.classify(s)?;
        write!(out, "{},{}", s.id(), c.label).unwrap();
        for (_, score) in &c.scores {
            write!(out, ",{score}").unwrap();
        }
        out.push('\n');
    }
    write_out(&args.out, out.as_bytes())
}

#[derive(Serialize)]
struct HoldoutSummary {
    series: usize,
    accuracy: f64,
    report: EvalReport,
}

#[derive(Serialize)]
struct GridReport {
    #[serde(flatten)]
    summary: GridSummary,
    channels: Vec<String>,
    representatives: Vec<(ClassLabel, String)>,
    selection_series: usize,
    holdout: Option<HoldoutSummary>,
}

pub fn grid_search(args: GridArgs, seed: Option<u64>) -> Result<(), CliError> {
    let (lo, hi) = parse_range::<usize>(&args.range, "--range")?;
    let tau_range = match &args.tau_range {
        Some(r) => parse_range(r, "--tau-range")?,
        None => (lo, hi),
    };
    let dim_range = match &args.dim_range {
        Some(r) => parse_range(r, "--dim-range")?,
        None => (lo, hi),
    };
    if tau_range.0 == 0 || dim_range.0 == 0 {
        return Err(CliError::Usage(
            "tau and d ranges must start at 1 or more".into(),
        ));
    }
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be >= 1".into()));
    }
    let fit = fit_config(&args.fit, seed)?;
    let data = load_data(&args.data.data, args.data.channels.as_deref())?;
    let reps = representatives(&data, args.data.reps.as_deref())?;
    let rep_ids: Vec<&str> = reps.iter().map(|(_, s)| s.id()).collect();

    let (selection, holdout) = match args.holdout {
        Some(f) if !(0.0..1.0).contains(&f) => {
            return Err(CliError::Usage(format!("--holdout {f} outside [0, 1)")));
        }
        Some(f) => {
            let (sel, hold) = data.split_holdout(f, fit.seed, &rep_ids)?;
            (sel, Some(hold))
        }
        None => (data.clone(), None),
    };
    let config = GridConfig {
        tau_range,
        dim_range,
        fit: fit.clone(),
        workers: args.workers,
    };
    let result = clf::grid_search(&reps, &selection, &config)?;

    let holdout = match (holdout, result.best_params()) {
        (Some(hold), Some(params)) if !hold.is_empty() => {
            let bundle = clf::train(&reps, params, &fit)?;
            let report = metrics::evaluate(&bundle, &hold)?;
            Some(HoldoutSummary {
                series: hold.len(),
                accuracy: report.accuracy,
                report,
            })
        }
        _ => None,
    };
    let report = GridReport {
        summary: result.summary(&config),
        channels: selection.channels().to_vec(),
        representatives: reps
            .iter()
            .map(|(l, s)| (l.clone(), s.id().to_string()))
            .collect(),
        selection_series: selection.len(),
        holdout,
    };

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    let mut csv = Vec::new();
    result
        .write_csv(&mut csv, !args.no_timing)
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_out(&args.out.join("grid.csv"), &csv)?;
    write_out(&args.out.join("summary.json"), &json_bytes(&report)?)?;
    if result.best.is_none() {
        return Err(CliError::Data(
            "no grid cell could be evaluated (all skipped or failed); see grid.csv".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluateReport {
    tau: usize,
    d: usize,
    channels: Vec<String>,
    #[serde(flatten)]
    report: EvalReport,
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let bundle = load_bundle(&args.bundle)?;
    let data = load_data(&args.data, Some(bundle.channels()))?;
    let report = metrics::evaluate(&bundle, &data)?;
    let params = bundle.params();
    let out = EvaluateReport {
        tau: params.tau,
        d: params.dim,
        channels: bundle.channels().to_vec(),
        report,
    };
    write_out(&args.out, &json_bytes(&out)?)
}

pub fn synth(args: SynthArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec: SyntheticSpec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let data = generate_synthetic(&spec)?;
    save_dataset(&data, &args.out)?;
    Ok(())
}

/// Long format: `series_id,day,quantity,value`. Quantities are each bundle
/// channel, its moving average (`<channel>_smoothed`) and the running
/// log-likelihood under each class (`loglik_<class>`, from the first
/// embeddable day on).
pub fn plot_data(args: PlotArgs) -> Result<(), CliError> {
    if args.smooth_window == 0 {
        return Err(CliError::Usage("--smooth-window must be >= 1".into()));
    }
    let bundle = load_bundle(&args.bundle)?;
    let data = load_data(&args.data, Some(bundle.channels()))?;
    let series = data
        .get(&args.series)
        .ok_or_else(|| CliError::from(DataError::UnknownSeries(args.series.clone())))?;
    let prepared = bundle.prepare()?;
    let running = prepared.running_log_likelihood(series)?;
    let id = series.id();
    let days = series.days();

    let mut out = String::from("series_id,day,quantity,value\n");
    for (c, name) in series.channels().iter().enumerate() {
        let column = series.column(c);
        let smoothed = moving_average(&column, args.smooth_window);
        for (t, day) in days.iter().enumerate() {
            writeln!(out, "{id},{day},{name},{}", column[t]).unwrap();
        }
        for (t, day) in days.iter().enumerate() {
            writeln!(out, "{id},{day},{name}_smoothed,{}", smoothed[t]).unwrap();
        }
    }
    let span = bundle.params().span();
    for (label, values) in bundle.class_order().into_iter().zip(&running) {
        for (i, v) in values.iter().enumerate() {
            writeln!(out, "{id},{},loglik_{label},{v}", days[i + span]).unwrap();
        }
    }
    write_out(&args.out, out.as_bytes())
}

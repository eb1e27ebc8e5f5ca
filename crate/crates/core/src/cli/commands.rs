use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{Cli, Command, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{ablation_compare, correlation_matrix, descriptive_stats, evaluate_model, EvalReport};
use crate::features::{
    compute_features, lifetime_window, read_feature_records, weekly_windows, write_feature_records, AccelBand,
    FeatureRecord, FeatureValues, SpeedingThresholds, WindowKind,
};
use crate::glm::{backward_eliminate, compute_premium, paper_reference_models, DesignMatrix, FitOptions, FittedModel};
use crate::ingest::{parse_event_log, validate_log, write_event_log, DeviceLog, ParseOutcome};
use crate::io::{csv_document, csv_reader, fmt_f64, read_file, write_atomic, Provenance};
use crate::labeling::{build_targets, label_claims, read_claims, read_labels, write_claims, write_labels, DeviceLabels, Target};
use crate::synthgen::{generate_events, generate_population, SynthConfig};
use crate::trips::{aggregate_hourly, read_hourly_records, read_trips, segment_trips, write_hourly_records, write_trips, HourlyRecord, Trip};

const SPEED_GROUP: [&str; 9] = [
    "avg_sp", "max_sp", "max_ej_sp", "max_mj_sp", "max_n_sp", "m_pr_below_20", "m_pr_below_60", "m_pr_over_100",
    "m_pr_over_130",
];

struct Ctx {
    cfg: RunConfig,
    written: Vec<PathBuf>,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out(name)
    }

    /// Explicit path, else the default artifact in the output directory.
    fn input(&self, flag: &Option<PathBuf>, default: &str) -> PathBuf {
        flag.clone().unwrap_or_else(|| self.out(default))
    }

    fn provenance(&self, command: &str, inputs: &[&Path]) -> Result<Provenance> {
        inputs
            .iter()
            .try_fold(Provenance::new(command).with_seed(self.cfg.seed), |p, path| p.with_input(path))
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }
}

pub(super) fn dispatch(cli: &Cli, cfg: RunConfig) -> Result<Vec<PathBuf>> {
    let mut ctx = Ctx { cfg, written: Vec::new() };
    match &cli.command {
        Command::Parse { events } => parse(&mut ctx, events)?,
        Command::Aggregate { events } => aggregate(&mut ctx, events)?,
        Command::Features { hourly, trips, window } => features(&mut ctx, hourly, trips, *window)?,
        Command::Label { claims } => label(&mut ctx, claims)?,
        Command::Fit { features, labels, claims, alpha } => fit(&mut ctx, features, labels, claims, *alpha)?,
        Command::Score { model, features } => score(&mut ctx, model, features)?,
        Command::Premium { scores, target, loss, admin, margin } => {
            premium(&mut ctx, scores, *target, [*loss, *admin, *margin])?
        }
        Command::Evaluate { features, labels, test_fraction, alpha } => {
            if let Some(f) = test_fraction {
                ctx.cfg.test_fraction = *f;
            }
            if let Some(a) = alpha {
                ctx.cfg.alpha = *a;
            }
            ctx.cfg.validate()?;
            let data = load_dataset(&ctx, features, labels, &None)?;
            let report = evaluation(&ctx.cfg, &data)?;
            let prov = ctx.provenance(&format!("evaluate test_fraction={} alpha={}", ctx.cfg.test_fraction, ctx.cfg.alpha), &data.inputs())?;
            ctx.write("eval_report.csv", &eval_report_csv(&report, &prov)?)?;
        }
        Command::Ablate { features, labels, group } => ablate(&mut ctx, features, labels, group)?,
        Command::Report { features, labels, target } => report(&mut ctx, features, labels, *target)?,
        Command::Synth { n, weeks, event_drivers, synth_config } => {
            synth(&mut ctx, cli.seed, *n, *weeks, *event_drivers, synth_config)?
        }
    }
    Ok(ctx.written)
}

fn read_events(path: &Path) -> Result<ParseOutcome> {
    let bytes = read_file(path)?;
    Ok(parse_event_log(&bytes[..])?)
}

fn events_jsonl(logs: &[DeviceLog], prov: &Provenance) -> Vec<u8> {
    let mut buf = prov.header_lines().into_bytes();
    write_event_log(logs, &mut buf).expect("writing to memory");
    buf
}

fn events_path(ctx: &Ctx, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| ctx.cfg.events.clone())
        .unwrap_or_else(|| ctx.out("events.jsonl"))
}

fn parse(ctx: &mut Ctx, events: &Option<PathBuf>) -> Result<()> {
    let path = events_path(ctx, events);
    let outcome = read_events(&path)?;
    let prov = ctx.provenance("parse", &[&path])?;
    let reports: Vec<_> = outcome.logs.iter().map(validate_log).collect();
    let report = csv_document(Some(&prov), |w| {
        w.write_record(["kind", "device", "line", "event_index", "detail"])?;
        for s in &outcome.skipped {
            w.write_record(["skipped_line", "", &s.line.to_string(), "", &s.reason])?;
        }
        for r in &reports {
            for i in &r.issues {
                w.write_record([i.kind.as_str(), &r.device_id, "", &i.event_index.to_string(), &i.message])?;
            }
        }
        Ok(())
    })?;
    ctx.write("events.parsed.jsonl", &events_jsonl(&outcome.logs, &prov))?;
    ctx.write("parse_report.csv", &report)?;
    eprintln!(
        "parsed {} events from {} devices; {} lines skipped; {} validation issues",
        outcome.event_count(),
        outcome.logs.len(),
        outcome.skipped.len(),
        reports.iter().map(|r| r.issues.len()).sum::<usize>()
    );
    Ok(())
}

fn aggregate(ctx: &mut Ctx, events: &Option<PathBuf>) -> Result<()> {
    let path = events_path(ctx, events);
    let outcome = read_events(&path)?;
    if !outcome.skipped.is_empty() {
        eprintln!("{} malformed lines skipped (see `ubi parse`)", outcome.skipped.len());
    }
    let tz = ctx.cfg.tz()?;
    let trip_cfg = ctx.cfg.trip_config();
    let per_device: Vec<(Vec<Trip>, Vec<HourlyRecord>)> = outcome
        .logs
        .par_iter()
        .map(|log| {
            let trips = segment_trips(log, &trip_cfg);
            let hourly = aggregate_hourly(log, &trips, &tz);
            (trips, hourly)
        })
        .collect();
    let (trips, hourly): (Vec<_>, Vec<_>) = per_device.into_iter().unzip();
    let trips: Vec<Trip> = trips.into_iter().flatten().collect();
    let hourly: Vec<HourlyRecord> = hourly.into_iter().flatten().collect();
    let prov = ctx.provenance(&format!("aggregate timezone={}", ctx.cfg.timezone), &[&path])?;
    ctx.write("hourly.csv", &write_hourly_records(&hourly, Some(&prov))?)?;
    ctx.write("trips.csv", &write_trips(&trips, Some(&prov))?)?;
    Ok(())
}

fn read_with<T>(path: &Path, f: impl FnOnce(&[u8]) -> std::result::Result<T, String>) -> Result<T> {
    let bytes = read_file(path)?;
    f(&bytes).map_err(|m| Error::format(path, m))
}

fn features(ctx: &mut Ctx, hourly: &Option<PathBuf>, trips: &Option<PathBuf>, window: Option<WindowKind>) -> Result<()> {
    if let Some(w) = window {
        ctx.cfg.window = w;
    }
    let hourly_path = ctx.input(hourly, "hourly.csv");
    let trips_path = ctx.input(trips, "trips.csv");
    let hourly = read_with(&hourly_path, |b| read_hourly_records(b))?;
    let trips = read_with(&trips_path, |b| read_trips(b))?;
    let tz = ctx.cfg.tz()?;
    let calendar = ctx.cfg.calendar()?;
    let speeding = SpeedingThresholds(ctx.cfg.speeding_kph);

    let mut by_device: BTreeMap<&str, (Vec<HourlyRecord>, Vec<Trip>)> = BTreeMap::new();
    for h in &hourly {
        by_device.entry(&h.device_id).or_default().0.push(h.clone());
    }
    for t in &trips {
        by_device.entry(&t.device_id).or_default().1.push(t.clone());
    }
    let kind = ctx.cfg.window;
    let rows: Vec<FeatureRecord> = by_device
        .into_par_iter()
        .flat_map_iter(|(device, (h, t))| {
            let windows = match kind {
                WindowKind::Weekly => weekly_windows(&h, &tz),
                WindowKind::Lifetime => lifetime_window(&h, &tz).into_iter().collect(),
            };
            windows
                .into_iter()
                .map(|w| FeatureRecord::from(&compute_features(device, &h, &t, &w, &calendar, &speeding)))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut inputs = vec![hourly_path.as_path(), trips_path.as_path()];
    if let Some(p) = &ctx.cfg.holidays {
        inputs.push(p);
    }
    let prov = ctx.provenance(&format!("features window={} timezone={}", kind.as_str(), ctx.cfg.timezone), &inputs)?;
    ctx.write("features.csv", &write_feature_records(&rows, Some(&prov))?)?;
    Ok(())
}

fn claims_path(ctx: &Ctx, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| ctx.cfg.claims.clone())
        .unwrap_or_else(|| ctx.out("claims.csv"))
}

fn label(ctx: &mut Ctx, claims: &Option<PathBuf>) -> Result<()> {
    let path = claims_path(ctx, claims);
    let claims = read_claims(&read_file(&path)?[..])?;
    let prov = ctx.provenance("label", &[&path])?;
    ctx.write("labels.csv", &write_labels(&claims, Some(&prov))?)?;
    Ok(())
}

/// Feature rows joined with device labels.
struct Dataset {
    records: Vec<FeatureRecord>,
    labels: DeviceLabels,
    feature_path: PathBuf,
    label_path: PathBuf,
}

impl Dataset {
    fn inputs(&self) -> Vec<&Path> {
        vec![&self.feature_path, &self.label_path]
    }

    fn design(&self, target: Target, columns: &[String]) -> Result<DesignMatrix> {
        let devices: Vec<String> = self.records.iter().map(|r| r.device_id.clone()).collect();
        let y = build_targets(&self.labels, &devices, target);
        let cols = columns
            .iter()
            .map(|c| {
                self.records
                    .iter()
                    .map(|r| r.values.get(c).ok_or_else(|| Error::InvalidArgument(format!("unknown feature `{c}`"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DesignMatrix::from_columns(columns.to_vec(), cols, y)?)
    }
}

fn load_dataset(ctx: &Ctx, features: &Option<PathBuf>, labels: &Option<PathBuf>, claims: &Option<PathBuf>) -> Result<Dataset> {
    let feature_path = ctx.input(features, "features.csv");
    let records = read_with(&feature_path, |b| read_feature_records(b))?;
    let (label_path, labels) = match claims {
        Some(c) => (c.clone(), label_claims(&read_claims(&read_file(c)?[..])?)?),
        None => {
            let p = ctx.input(labels, "labels.csv");
            let l = read_labels(&read_file(&p)?[..])?;
            (p, l)
        }
    };
    Ok(Dataset {
        records,
        labels,
        feature_path,
        label_path,
    })
}

/// Runs `f` for each target in parallel, returning results in target order
/// with the first error by target order.
fn per_target<T: Send>(f: impl Fn(Target) -> Result<T> + Sync) -> Result<Vec<T>> {
    Target::ALL.par_iter().map(|&t| f(t)).collect::<Vec<_>>().into_iter().collect()
}

fn evaluation(cfg: &RunConfig, data: &Dataset) -> Result<Vec<EvalReport>> {
    let opts = FitOptions::default();
    per_target(|t| {
        let design = data.design(t, &cfg.candidates_for(t))?;
        Ok(evaluate_model(&design, t.as_str(), &cfg.split(), cfg.alpha, &opts)?)
    })
}

fn metric_table(rows: &[(&str, Vec<String>)], prov: &Provenance) -> Result<Vec<u8>> {
    csv_document(Some(prov), |w| {
        let mut header = vec!["metric".to_string()];
        header.extend(Target::ALL.iter().map(|t| t.as_str().to_string()));
        w.write_record(&header)?;
        for (name, cells) in rows {
            let mut rec = vec![name.to_string()];
            rec.extend(cells.iter().cloned());
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

fn eval_report_csv(reports: &[EvalReport], prov: &Provenance) -> Result<Vec<u8>> {
    let col = |f: &dyn Fn(&EvalReport) -> String| reports.iter().map(f).collect::<Vec<_>>();
    for r in reports {
        for d in &r.diagnostics {
            eprintln!("{d}");
        }
    }
    metric_table(
        &[
            ("auc_in_sample", col(&|r| fmt_f64(r.auc_in_sample))),
            ("auc_out_of_sample", col(&|r| r.auc_out_of_sample.map(fmt_f64).unwrap_or_default())),
            ("mcfadden_r2", col(&|r| fmt_f64(r.mcfadden_r2))),
            ("n_train", col(&|r| r.n_train.to_string())),
            ("n_test", col(&|r| r.n_test.to_string())),
            ("seed", col(&|r| r.seed.to_string())),
            ("columns", col(&|r| r.columns.join(";"))),
        ],
        prov,
    )
}

fn fit(
    ctx: &mut Ctx,
    features: &Option<PathBuf>,
    labels: &Option<PathBuf>,
    claims: &Option<PathBuf>,
    alpha: Option<f64>,
) -> Result<()> {
    if let Some(a) = alpha {
        ctx.cfg.alpha = a;
    }
    ctx.cfg.validate()?;
    let data = load_dataset(ctx, features, labels, claims)?;
    let cfg = &ctx.cfg;
    let opts = FitOptions::default();
    let models = per_target(|t| {
        let design = data.design(t, &cfg.candidates_for(t))?;
        Ok(backward_eliminate(&design, t.as_str(), cfg.alpha, &opts)?)
    })?;
    let reports = evaluation(cfg, &data)?;
    let prov = ctx.provenance(&format!("fit alpha={}", ctx.cfg.alpha), &data.inputs())?;
    for mut m in models {
        m.provenance = Some(prov.clone());
        ctx.write(&format!("model_{}.json", m.target), m.to_json().as_bytes())?;
    }
    ctx.write("eval_report.csv", &eval_report_csv(&reports, &prov)?)?;
    Ok(())
}

fn score(ctx: &mut Ctx, model_args: &[String], features: &Option<PathBuf>) -> Result<()> {
    let feature_path = ctx.input(features, "features.csv");
    let records = read_with(&feature_path, |b| read_feature_records(b))?;
    let mut inputs = vec![feature_path.clone()];
    let mut label = "score".to_string();
    let models: Vec<FittedModel> = if model_args.iter().any(|m| m == "paper-reference") {
        if model_args.len() > 1 {
            return Err(Error::InvalidArgument("`paper-reference` cannot be combined with model files".into()));
        }
        label.push_str(" model=paper-reference");
        paper_reference_models()
    } else {
        let paths: Vec<PathBuf> = if model_args.is_empty() {
            Target::ALL.iter().map(|t| ctx.out(&format!("model_{}.json", t.as_str()))).collect()
        } else {
            model_args.iter().map(PathBuf::from).collect()
        };
        let mut ms = Vec::new();
        for p in paths {
            let text = String::from_utf8(read_file(&p)?).map_err(|e| Error::format(&p, e.to_string()))?;
            ms.push(FittedModel::from_json(&text).map_err(|e| Error::format(&p, e.to_string()))?);
            inputs.push(p);
        }
        ms
    };
    for (i, m) in models.iter().enumerate() {
        if models[..i].iter().any(|o| o.target == m.target) {
            return Err(Error::InvalidArgument(format!("two models for target `{}`", m.target)));
        }
    }
    let probs = models
        .iter()
        .map(|m| {
            records
                .iter()
                .map(|r| m.predict_proba(|name| r.values.get(name)))
                .collect::<std::result::Result<Vec<f64>, _>>()
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let prov = ctx.provenance(&label, &input_refs)?;
    let bytes = csv_document(Some(&prov), |w| {
        let mut header = vec!["device".to_string(), "window_kind".into(), "window_start".into()];
        header.extend(models.iter().map(|m| format!("p_{}", m.target)));
        w.write_record(&header)?;
        for (i, r) in records.iter().enumerate() {
            let mut rec = vec![r.device_id.clone(), r.window_kind.as_str().to_string(), r.window_start.clone()];
            rec.extend(probs.iter().map(|p| fmt_f64(p[i])));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    ctx.write("scores.csv", &bytes)?;
    Ok(())
}

fn premium(ctx: &mut Ctx, scores: &Option<PathBuf>, target: Target, overrides: [Option<f64>; 3]) -> Result<()> {
    let p = &mut ctx.cfg.premium;
    for (slot, v) in [&mut p.loss, &mut p.admin, &mut p.margin].into_iter().zip(overrides) {
        if let Some(v) = v {
            *slot = v;
        }
    }
    let settings = ctx.cfg.premium.clone();
    let path = ctx.input(scores, "scores.csv");
    let column = format!("p_{}", target.as_str());
    let rows = read_with(&path, |b| {
        let mut rdr = csv_reader(b);
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        let i = headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| format!("missing column `{column}`"))?;
        rdr.records()
            .map(|rec| {
                let rec = rec.map_err(|e| e.to_string())?;
                let p: f64 = rec
                    .get(i)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| format!("bad probability {:?}", rec.get(i)))?;
                Ok((rec.iter().take(3).map(String::from).collect::<Vec<_>>(), p))
            })
            .collect::<std::result::Result<Vec<_>, String>>()
    })?;
    let premiums = rows
        .iter()
        .map(|(_, p)| compute_premium(*p, settings.loss, settings.admin, settings.margin))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let prov = ctx.provenance(
        &format!(
            "premium target={} loss={} admin={} margin={}",
            target.as_str(),
            settings.loss,
            settings.admin,
            settings.margin
        ),
        &[&path],
    )?;
    let bytes = csv_document(Some(&prov), |w| {
        w.write_record(["device", "window_kind", "window_start", "probability", "premium"])?;
        for ((ids, p), prem) in rows.iter().zip(&premiums) {
            let mut rec = ids.clone();
            rec.resize(3, String::new());
            rec.push(fmt_f64(*p));
            rec.push(fmt_f64(*prem));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    ctx.write("premiums.csv", &bytes)?;
    Ok(())
}

fn feature_group(spec: &str) -> Result<Vec<String>> {
    match spec {
        "accel" => Ok(AccelBand::ALL.iter().map(|b| b.name().to_string()).collect()),
        "speed" => Ok(SPEED_GROUP.iter().map(|s| s.to_string()).collect()),
        list => {
            let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            match names.iter().find(|n| !FeatureValues::NAMES.contains(&n.as_str())) {
                Some(bad) => Err(Error::InvalidArgument(format!("unknown feature `{bad}` in group"))),
                None if names.is_empty() => Err(Error::InvalidArgument("empty feature group".into())),
                None => Ok(names),
            }
        }
    }
}

fn ablate(ctx: &mut Ctx, features: &Option<PathBuf>, labels: &Option<PathBuf>, group: &str) -> Result<()> {
    let group = feature_group(group)?;
    let data = load_dataset(ctx, features, labels, &None)?;
    let cfg = &ctx.cfg;
    let opts = FitOptions::default();
    let results = per_target(|t| {
        let cols = cfg.candidates_for(t);
        let design = data.design(t, &cols)?;
        let dropped: Vec<String> = cols.iter().filter(|c| group.contains(c)).cloned().collect();
        Ok((ablation_compare(&design, t.as_str(), &dropped, &opts)?, dropped))
    })?;
    type Row = (crate::eval::AblationResult, Vec<String>);
    let col = |f: &dyn Fn(&Row) -> String| results.iter().map(f).collect::<Vec<_>>();
    let prov = ctx.provenance(&format!("ablate group={}", group.join(";")), &data.inputs())?;
    let bytes = metric_table(
        &[
            ("r2_with", col(&|r| fmt_f64(r.0.r2_with))),
            ("r2_without", col(&|r| fmt_f64(r.0.r2_without))),
            ("difference", col(&|r| fmt_f64(r.0.difference()))),
            ("dropped", col(&|r| r.1.join(";"))),
        ],
        &prov,
    )?;
    ctx.write("ablation.csv", &bytes)?;
    Ok(())
}

fn report(ctx: &mut Ctx, features: &Option<PathBuf>, labels: &Option<PathBuf>, target: Target) -> Result<()> {
    let data = load_dataset(ctx, features, labels, &None)?;
    let names: Vec<String> = FeatureValues::NAMES.iter().map(|s| s.to_string()).collect();
    let columns: Vec<Vec<f64>> = names
        .iter()
        .map(|n| data.records.iter().map(|r| r.values.get(n).expect("catalog name")).collect())
        .collect();
    let devices: Vec<String> = data.records.iter().map(|r| r.device_id.clone()).collect();
    let y = build_targets(&data.labels, &devices, target);
    let stats = descriptive_stats(&names, &columns, &y);
    let corr = correlation_matrix(&columns)?;
    let prov = ctx.provenance(&format!("report target={}", target.as_str()), &data.inputs())?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let desc = csv_document(Some(&prov), |w| {
        w.write_record(["feature", "n_with", "mean_with", "std_with", "n_without", "mean_without", "std_without"])?;
        for s in &stats {
            w.write_record([
                s.feature.clone(),
                s.with_accidents.n.to_string(),
                opt(s.with_accidents.mean),
                opt(s.with_accidents.std),
                s.without_accidents.n.to_string(),
                opt(s.without_accidents.mean),
                opt(s.without_accidents.std),
            ])?;
        }
        Ok(())
    })?;
    let corr_bytes = csv_document(Some(&prov), |w| {
        let mut header = vec!["feature".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in names.iter().zip(&corr) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| opt(*v)));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    ctx.write("descriptive.csv", &desc)?;
    ctx.write("correlation.csv", &corr_bytes)?;
    Ok(())
}

#[derive(serde::Serialize)]
struct Truth {
    tool_version: String,
    seed: u64,
    n_drivers: usize,
    weeks: u32,
    start_date: String,
    timezone: String,
    /// Raw-unit planted coefficients per severity.
    planted: BTreeMap<String, BTreeMap<String, f64>>,
    /// Logistic projection of the union probability onto the `any` columns.
    any_pseudo_truth: BTreeMap<String, f64>,
    target_rates: BTreeMap<String, f64>,
    event_drivers: usize,
    profiles_sha256: String,
}

fn synth(
    ctx: &mut Ctx,
    seed: Option<u64>,
    n: Option<usize>,
    weeks: Option<u32>,
    event_drivers: usize,
    synth_config: &Option<PathBuf>,
) -> Result<()> {
    let config_path = synth_config.clone().or_else(|| ctx.cfg.synth_config.clone());
    let mut sc = match &config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            SynthConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default_config(),
    };
    if let Some(n) = n {
        sc.n_drivers = n;
    }
    if let Some(w) = weeks {
        sc.weeks = w;
    }
    if let Some(s) = seed {
        sc.seed = s;
    }
    sc.validate()?;
    ctx.cfg.seed = sc.seed;
    let calendar = ctx.cfg.calendar()?;
    let pop = generate_population(&sc, &calendar)?;
    let n_events = event_drivers.min(sc.n_drivers);
    let logs = (0..n_events)
        .into_par_iter()
        .map(|i| {
            let d = &pop.drivers[i];
            let events = generate_events(&sc, &calendar, i, &d.profile)?;
            Ok(DeviceLog::from_events(d.profile.device_id.clone(), events)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let any_cols = ctx.cfg.candidates_for(Target::Any);
    let rates = Target::ALL
        .iter()
        .map(|&t| {
            let k = pop.drivers.iter().filter(|d| pop.target_value(d, t) == 1).count();
            (t.as_str().to_string(), k as f64 / sc.n_drivers as f64)
        })
        .collect();
    let truth = Truth {
        tool_version: crate::TOOL_VERSION.to_string(),
        seed: sc.seed,
        n_drivers: sc.n_drivers,
        weeks: sc.weeks,
        start_date: sc.start_date.to_string(),
        timezone: sc.timezone.clone(),
        planted: pop.planted_raw.clone(),
        any_pseudo_truth: pop.any_pseudo_truth(&any_cols)?,
        target_rates: rates,
        event_drivers: n_events,
        profiles_sha256: pop.profiles_sha256(),
    };

    let mut inputs: Vec<&Path> = Vec::new();
    if let Some(p) = &config_path {
        inputs.push(p);
    }
    let prov = ctx.provenance(&format!("synth n={} weeks={}", sc.n_drivers, sc.weeks), &inputs)?;
    let claims = pop.claims();
    let mut truth_json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    truth_json.push('\n');
    ctx.write("events.jsonl", &events_jsonl(&logs, &prov))?;
    ctx.write("claims.csv", &write_claims(&claims, Some(&prov))?)?;
    ctx.write("labels.csv", &write_labels(&claims, Some(&prov))?)?;
    ctx.write("features.csv", &write_feature_records(&pop.oracle_records(), Some(&prov))?)?;
    ctx.write("truth.json", truth_json.as_bytes())?;
    ctx.write("synth_config.toml", sc.to_toml().as_bytes())?;
    Ok(())
}

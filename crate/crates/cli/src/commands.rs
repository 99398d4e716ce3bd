use std::fs;
use std::path::Path;
use std::time::Instant;

use loft_core::analysis::{reconstruction_errors, select_dim, spectrum, write_errors_csv, ReconstructionReport};
use loft_core::dataio::{
    read_fcov, read_features, read_fprj, read_head, write_fcov, write_fmat, write_fprj, write_head, FeatureMatrix,
    SyntheticModel, SyntheticScenario,
};
use loft_core::evaluator::{absorb as absorb_head, accuracy, mia_score, probe_train, LinearHead, MetricsTable, ProbeConfig};
use loft_core::matcore::{covariance, CovarianceSummary, Matrix};
use loft_core::objective::{Ablation, ObjectiveInputs};
use loft_core::optimizer::{self, FitOutcome, OptimizerConfig};
use loft_core::stiefel::StiefelPoint;
use serde::Serialize;

use crate::args::{AbsorbArgs, AnalyzeArgs, CovArgs, EvalArgs, FitArgs, ProbeArgs, SynthArgs};
use crate::error::{CliError, CliResult};
use crate::report::{write_json, FitConfigEcho, InputDigest, RunReport, TraceSummary, SCHEMA_VERSION};
use crate::Console;

pub fn cov(args: &CovArgs, console: &mut Console) -> CliResult<CovarianceSummary> {
    let centering = args.center.into();
    let mut parts = Vec::with_capacity(args.merge.len() + 1);
    if let Some(path) = &args.features {
        let mut features = read_features(path)?;
        if !args.labels.is_empty() {
            features = features
                .filter_labels(|l| args.labels.contains(&l))
                .map_err(|e| e.at_path(path))?;
        }
        parts.push(covariance(features.values(), centering).map_err(|e| e.at_path(path))?);
    } else if !args.labels.is_empty() {
        return Err(CliError::usage("--labels filters --features and needs it"));
    }
    for path in &args.merge {
        parts.push(read_fcov(path)?);
    }
    let summary = match parts.len() {
        1 => parts.pop().expect("one part"),
        _ => CovarianceSummary::merge(&parts, centering)?,
    };
    write_fcov(&args.out, &summary)?;
    console.say(format_args!(
        "n={} d={} trace={:.9e}",
        summary.count(),
        summary.dim(),
        summary.trace()
    ))?;
    Ok(summary)
}

/// A finished `fit`: the optimizer output and the report written for it.
#[derive(Debug, Clone)]
pub struct FitRun {
    pub outcome: FitOutcome,
    pub report: RunReport,
}

pub fn fit(args: &FitArgs, console: &mut Console) -> CliResult<FitRun> {
    let clock = Instant::now();
    let remain = read_fcov(&args.cov_rm)?;
    let forget = read_fcov(&args.cov_fg)?;
    let d = remain.dim();
    let mut inputs = ObjectiveInputs::new(forget.matrix().clone(), remain.matrix().clone())?;
    if let Some(path) = &args.cov_fgp {
        inputs = inputs.with_previous(read_fcov(path)?.matrix().clone())?;
    }
    let ablation = args.ablate.map_or(Ablation::None, Ablation::from);
    inputs = inputs.with_ablation(ablation);

    let (s, dim_source) = match (args.dim, args.variance_fraction) {
        (Some(s), fraction) => {
            if let Some(f) = fraction {
                console.warn(format_args!("--dim {s} overrides --variance-fraction {f}"))?;
            }
            (s, "flag")
        }
        (None, _) => {
            let fraction = args.variance_fraction_or_default();
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(CliError::usage(format!("--variance-fraction {fraction} must lie in (0, 1]")));
            }
            (select_dim(&remain, fraction)?, "variance-fraction")
        }
    };
    if s == 0 || s > d {
        return Err(CliError::usage(format!("--dim {s} must lie in 1..={d}")));
    }

    let config = OptimizerConfig {
        learning_rate: args.lr,
        weight_decay: args.wd,
        steps: args.steps,
        schedule: args.schedule.into(),
        seed: args.seed,
        init: args.init.into(),
        ..OptimizerConfig::default()
    };
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let outcome = match optimizer::fit(&inputs, &config, s) {
        Ok(outcome) => outcome,
        Err(failure) => {
            if let Some(log) = &args.log {
                write_text(log, &failure.trace.to_log())?;
            }
            return Err(failure.into());
        }
    };
    write_fprj(&args.out, &outcome.point)?;
    if let Some(log) = &args.log {
        write_text(log, &outcome.trace.to_log())?;
    }

    let mut digests = vec![
        InputDigest::of_file("cov_rm", &args.cov_rm)?,
        InputDigest::of_file("cov_fg", &args.cov_fg)?,
    ];
    if let Some(path) = &args.cov_fgp {
        digests.push(InputDigest::of_file("cov_fgp", path)?);
    }
    let report = RunReport {
        schema: SCHEMA_VERSION,
        config: FitConfigEcho {
            cov_rm: args.cov_rm.clone(),
            cov_fg: args.cov_fg.clone(),
            cov_fgp: args.cov_fgp.clone(),
            projector: args.out.clone(),
            dim_source: dim_source.to_owned(),
            variance_fraction: args.variance_fraction,
            ablation,
            optimizer: config,
        },
        inputs: digests,
        trace: TraceSummary::of(&outcome.trace, outcome.best_step).expect("a completed fit has records"),
        final_value: outcome.value,
        metrics: None,
        ambient_dim: d,
        subspace_dim: s,
        parameters: (d * s) as u64,
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    report.write(&report_path(args))?;

    let v = &outcome.value;
    let mut line = format!(
        "d={d} s={s} steps={} best_step={} J={:.6e} J_fg={:.6e} J_rm={:.6e}",
        report.trace.steps, outcome.best_step, v.total, v.forget, v.remain
    );
    if let Some(p) = v.previous {
        line += &format!(" J_fgp={p:.6e}");
    }
    line += &format!(" params={} wall={:.3}s", report.parameters, report.wall_seconds);
    console.say(line)?;
    Ok(FitRun { outcome, report })
}

/// Report location for a fit: `--report`, or the projector path with a
/// `.json` extension.
pub fn report_path(args: &FitArgs) -> std::path::PathBuf {
    args.report.clone().unwrap_or_else(|| args.out.with_extension("json"))
}

#[derive(Serialize)]
struct SplitReport<'a> {
    split: &'a str,
    #[serde(flatten)]
    report: &'a ReconstructionReport,
}

pub fn analyze(args: &AnalyzeArgs, console: &mut Console) -> CliResult<()> {
    if let Some(path) = &args.cov {
        let summary = read_fcov(path)?;
        let report = spectrum(summary.matrix(), args.top_k)?;
        console.say(&report)?;
        let selected = match args.variance_fraction {
            Some(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(CliError::usage(format!("--variance-fraction {f} must lie in (0, 1]")));
                }
                let s = select_dim(&summary, f)?;
                console.say(format_args!("dimension for {f} of the variance: {s}"))?;
                Some(s)
            }
            None => None,
        };
        if let Some(out) = &args.json {
            write_json(
                out,
                &serde_json::json!({ "spectrum": report, "selected_dim": selected }),
            )?;
        }
        return Ok(());
    }

    let projector_path = args
        .projector
        .as_ref()
        .ok_or_else(|| CliError::usage("--features needs --projector"))?;
    let u = read_fprj(projector_path)?;
    let shared_mean = match &args.mean_from {
        Some(path) => Some(read_fcov(path)?.mean().to_vec()),
        None => None,
    };
    let mut reports = Vec::with_capacity(args.features.len());
    for path in &args.features {
        let features = read_features(path)?;
        let mean = shared_mean.clone().unwrap_or_else(|| column_means(features.values()));
        let report = reconstruction_errors(&u, features.values(), &mean).map_err(|e| e.at_path(path))?;
        reports.push((split_name(path), report));
    }
    for (name, report) in &reports {
        console.say(format_args!("[{name}]\n{report}"))?;
    }
    let named: Vec<(&str, &ReconstructionReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    if let Some(out) = &args.csv {
        let file = fs::File::create(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
        write_errors_csv(std::io::BufWriter::new(file), &named).map_err(|e| e.at_path(out))?;
    }
    if let Some(out) = &args.json {
        let splits: Vec<SplitReport> = named
            .iter()
            .map(|(split, report)| SplitReport { split, report })
            .collect();
        write_json(out, &splits)?;
    }
    Ok(())
}

fn split_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn column_means(features: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; features.cols()];
    for i in 0..features.rows() {
        for (m, x) in mean.iter_mut().zip(features.row(i)) {
            *m += x;
        }
    }
    let n = features.rows().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn labelled(path: &Path) -> CliResult<(Matrix, Vec<u32>)> {
    let features = read_features(path)?;
    features.require_labels("evaluation").map_err(|e| e.at_path(path))?;
    let (values, labels) = features.into_parts();
    Ok((values, labels.expect("checked above")))
}

pub fn eval(args: &EvalArgs, console: &mut Console) -> CliResult<MetricsTable> {
    let head = read_head(&args.head)?;
    let u = args.projector.as_ref().map(read_fprj).transpose()?;
    let u = u.as_ref();
    let (rm_tr, rm_tr_labels) = labelled(&args.rm_train)?;
    let (fg_tr, fg_tr_labels) = labelled(&args.fg_train)?;
    let (rm_te, rm_te_labels) = labelled(&args.rm_test)?;
    let (fg_te, fg_te_labels) = labelled(&args.fg_test)?;
    let acc = |x: &Matrix, y: &[u32], path: &Path| accuracy(&head, u, x, y).map_err(|e| e.at_path(path));

    let mia = match (&args.calib_member, &args.calib_nonmember) {
        (Some(m), Some(n)) => {
            let members = read_features(m)?.into_parts().0;
            let nonmembers = read_features(n)?.into_parts().0;
            mia_score(&head, u, &fg_tr, &members, &nonmembers)?
        }
        (None, None) => mia_score(&head, u, &fg_tr, &rm_tr, &rm_te)?,
        _ => return Err(CliError::usage("--calib-member and --calib-nonmember go together")),
    };
    let mut table = MetricsTable::new(
        acc(&rm_tr, &rm_tr_labels, &args.rm_train)?,
        acc(&fg_tr, &fg_tr_labels, &args.fg_train)?,
        acc(&rm_te, &rm_te_labels, &args.rm_test)?,
        acc(&fg_te, &fg_te_labels, &args.fg_test)?,
        mia,
    );
    let reference = match &args.reference {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
            let reference: MetricsTable =
                serde_json::from_str(&text).map_err(|e| loft_core::Error::from(e).at_path(path))?;
            table = table.with_reference(&reference);
            Some(reference)
        }
        None => None,
    };
    console.say(table.render(reference.as_ref()))?;
    if let Some(out) = &args.out {
        write_json(out, &table)?;
    }
    if let Some(path) = &args.report {
        let mut report = RunReport::read(path)?;
        report.metrics = Some(table);
        report.write(path)?;
    }
    Ok(table)
}

pub fn absorb(args: &AbsorbArgs, console: &mut Console) -> CliResult<LinearHead> {
    let head = read_head(&args.head)?;
    let u: StiefelPoint = read_fprj(&args.projector)?;
    let absorbed = absorb_head(&head, &u)?;
    write_head(&args.out, &absorbed)?;
    console.say(format_args!(
        "classes={} d={} s={}",
        absorbed.classes(),
        absorbed.feature_dim(),
        u.subspace_dim()
    ))?;
    Ok(absorbed)
}

pub fn probe(args: &ProbeArgs, console: &mut Console) -> CliResult<LinearHead> {
    let mut combined: Option<FeatureMatrix> = None;
    for path in &args.features {
        let features = read_features(path)?;
        features.require_labels("probe training").map_err(|e| e.at_path(path))?;
        combined = Some(match combined {
            None => features,
            Some(acc) => acc.concat(&features).map_err(|e| e.at_path(path))?,
        });
    }
    let features = combined.ok_or_else(|| CliError::usage("--features is required"))?;
    let labels = features.require_labels("probe training")?;
    let config = ProbeConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
    };
    let head = probe_train(features.values(), labels, args.classes, &config)?;
    let train_acc = accuracy(&head, None, features.values(), labels)?;
    write_head(&args.out, &head)?;
    console.say(format_args!(
        "n={} d={} classes={} train_acc={train_acc:.2}",
        features.samples(),
        features.dim(),
        head.classes()
    ))?;
    Ok(head)
}

pub fn synth(args: &SynthArgs, console: &mut Console) -> CliResult<()> {
    let scenario = SyntheticScenario {
        regime: args.regime.into(),
        dim: args.dim,
        classes: args.classes,
        per_class: args.per_class,
        forget: args.forget.clone(),
        seed: args.seed,
        top_dim: args.top_dim,
        noise: args.noise,
    };
    scenario.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let model = SyntheticModel::new(&scenario)?;
    let train = model.sample(args.per_class, 0)?;
    write_fmat(&args.out_rm, &train.remain)?;
    write_fmat(&args.out_fg, &train.forget)?;
    console.say(format_args!(
        "train: rm={} fg={} d={}",
        train.remain.samples(),
        train.forget.samples(),
        args.dim
    ))?;
    if let (Some(n), Some(rm), Some(fg)) = (args.test_per_class, &args.out_rm_test, &args.out_fg_test) {
        let test = model.sample(n, 1)?;
        write_fmat(rm, &test.remain)?;
        write_fmat(fg, &test.forget)?;
        console.say(format_args!("test: rm={} fg={}", test.remain.samples(), test.forget.samples()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

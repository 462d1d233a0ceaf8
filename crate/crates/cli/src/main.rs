mod config;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use gwhp_core::container::FieldContainer;
use gwhp_core::dataset::{self, build_splits, preprocess, sample_stem, write_sample, TrainingPair};
use gwhp_core::eval::{evaluate_cases, evaluate_test_set, EvalCase, EvalReport};
use gwhp_core::lahm::{lahm_field, LahmParams};
use gwhp_core::sim::{solve_flow, Sample, SimParams, TransportConfig};
use gwhp_core::surrogate::{
    build_model, load_model, save_model, train, SurrogateModel, TrainEvent,
};
use gwhp_core::{ScalarField, VectorField};

use config::{read_config, read_json, DatagenConfig, LahmRunConfig, ScenarioFile, TrainRunConfig};
use manifest::RunManifest;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 1.
    Validation(String),
    /// Failure while running: exit code 2.
    Runtime(String),
}

impl From<gwhp_core::Error> for CliError {
    fn from(e: gwhp_core::Error) -> Self {
        use gwhp_core::Error::*;
        match e {
            InvalidGrid(_)
            | IndexOutOfRange { .. }
            | LengthMismatch { .. }
            | GridMismatch
            | InvalidParameter(_)
            | ShapeMismatch { .. }
            | InsufficientData(_)
            | Corrupt(_)
            | Version { .. }
            | Json(_) => Self::Validation(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "gwhp", version, about = "Groundwater heat pump plume toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate random scenarios into sample files.
    Datagen {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Grid, gradient range and solver settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Split, augment and train the surrogate.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model (or stored predictions) on the held-out samples.
    Eval {
        #[arg(long, required_unless_present = "predictions")]
        model: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Directory of predicted containers named like the samples.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write comparison images.
        #[arg(long)]
        render: bool,
    },
    /// Run the surrogate on one scenario.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the analytical plume on a grid.
    Lahm {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the HTTP service.
    Serve {
        #[command(flatten)]
        args: gwhp_service::ServeArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Datagen {
            count,
            seed,
            out,
            workers,
            config,
        } => datagen(count, seed, &out, workers, config.as_deref()),
        Command::Train { data, config, out } => train_cmd(&data, &config, &out),
        Command::Eval {
            model,
            data,
            predictions,
            out,
            render,
        } => eval_cmd(
            model.as_deref(),
            &data,
            predictions.as_deref(),
            &out,
            render,
        ),
        Command::Predict {
            model,
            scenario,
            out,
        } => predict(&model, &scenario, &out),
        Command::Lahm { params, out } => lahm(&params, &out),
        Command::Serve { args } => {
            let rt = tokio::runtime::Runtime::new()?;
            let mut m = RunManifest::new(
                "serve",
                &serde_json::json!({
                    "port": args.port,
                    "max_simulations": args.max_simulations,
                    "cors_origin": args.cors_origin,
                }),
            )?;
            m.inputs.extend(args.model.clone());
            // a server has no output directory; its manifest goes to the log
            eprintln!("{}", serde_json::to_string(&m)?);
            rt.block_on(gwhp_service::serve(args))
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))
}

fn parent_dir(file: &Path) -> Result<()> {
    match file.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(p) => out_dir(p),
        None => Ok(()),
    }
}

/// `<file>.manifest.json` next to a single-file output.
fn write_file_manifest(m: &RunManifest, file: &Path) -> Result<()> {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    fs::write(file.with_file_name(name), serde_json::to_vec_pretty(m)?)?;
    Ok(())
}

fn datagen(
    count: usize,
    seed: u64,
    out: &Path,
    workers: usize,
    config: Option<&Path>,
) -> Result<()> {
    let cfg: DatagenConfig = match config {
        Some(p) => read_config(p)?,
        None => DatagenConfig::default(),
    };
    cfg.grid.validate()?;
    cfg.sim.validate()?;
    cfg.transport.validate()?;
    if count == 0 {
        return Err(CliError::Validation("--count must be at least 1".into()));
    }
    out_dir(out)?;
    let mut m = RunManifest::new(
        "datagen",
        &serde_json::json!({"count": count, "config": cfg}),
    )?;
    m.seeds.insert("dataset".into(), seed);
    m.inputs.extend(config.map(Path::to_path_buf));

    let start = Instant::now();
    let results = dataset::generate_samples(
        count,
        seed,
        &cfg.grid,
        &cfg.gradient_range,
        &cfg.sim,
        &cfg.transport,
        workers,
    )?;
    m.timings
        .insert("simulate".into(), start.elapsed().as_secs_f64());
    let mut failures = vec![];
    let mut converged = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => {
                converged += s.report.converged as usize;
                m.outputs.push(write_sample(out, i as u64, &s)?);
            }
            Err(e) => {
                eprintln!("scenario {i} failed: {e}");
                failures.push(i);
            }
        }
    }
    m.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    m.write(out)?;
    eprintln!(
        "wrote {} samples to {} ({converged} reached steady state)",
        m.outputs.len(),
        out.display()
    );
    if !failures.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} of {count} scenarios failed: {failures:?}",
            failures.len()
        )));
    }
    Ok(())
}

fn train_cmd(data: &Path, config: &Path, out: &Path) -> Result<()> {
    let cfg: TrainRunConfig = read_config(config)?;
    cfg.model.validate()?;
    cfg.train.validate()?;
    out_dir(out)?;
    let mut m = RunManifest::new("train", &cfg)?;
    m.seeds.insert("split".into(), cfg.split.seed);
    m.seeds.insert("shuffle".into(), cfg.train.seed);
    m.seeds.insert("init".into(), cfg.init_seed);
    m.inputs = vec![data.to_path_buf(), config.to_path_buf()];

    let start = Instant::now();
    let samples = dataset::load_samples(data)?;
    let split = build_splits(&samples, &cfg.split)?;
    eprintln!(
        "{} samples: {} train, {} validation, {} test pairs",
        samples.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    let model = build_model(cfg.model.clone(), split.stats, cfg.init_seed)?;
    m.timings
        .insert("prepare".into(), start.elapsed().as_secs_f64());

    let ckpt_dir = out.join("checkpoints");
    if cfg.train.checkpoint_every > 0 {
        out_dir(&ckpt_dir)?;
    }
    let t0 = Instant::now();
    let (model, history) = train(model, &split, &cfg.train, |e| {
        match e {
            TrainEvent::Epoch(r) => {
                if r.epoch == 1 || r.epoch % 50 == 0 {
                    eprintln!(
                        "epoch {} train {:.4e} val {:?}",
                        r.epoch, r.train_loss, r.validation_loss
                    );
                }
            }
            TrainEvent::Checkpoint { epoch, model } => {
                save_model(model, ckpt_dir.join(format!("epoch_{epoch:06}.gwnn")))?
            }
        }
        Ok(())
    })?;
    m.timings.insert("train".into(), t0.elapsed().as_secs_f64());

    let model_path = out.join("model.gwnn");
    save_model(&model, &model_path)?;
    let history_path = out.join("history.json");
    fs::write(&history_path, serde_json::to_vec_pretty(&history)?)?;
    m.outputs = vec![model_path, history_path];
    m.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    m.write(out)?;
    eprintln!(
        "best epoch {} validation loss {:.4e}, model {}",
        history.best_epoch,
        history.best_loss,
        model.version_tag()?
    );
    Ok(())
}

/// Stems and samples of the data directory.
fn load_named(data: &Path) -> Result<Vec<(String, Sample)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(data)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", data.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "gwhp") && p.with_extension("json").exists())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Validation(format!(
            "no samples in {}",
            data.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let (meta, s) = dataset::read_sample(p)?;
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| sample_stem(meta.index));
            Ok((stem, s))
        })
        .collect()
}

/// Samples in the model's held-out set, or all when it records none.
fn held_out(
    model: Option<&SurrogateModel>,
    samples: Vec<(String, Sample)>,
) -> Vec<(String, Sample)> {
    match model.and_then(|m| m.info.split.as_ref()) {
        Some(split) => samples
            .into_iter()
            .filter(|(_, s)| split.test_sources.contains(&s.spec.geology.seed))
            .collect(),
        None => samples,
    }
}

fn eval_cmd(
    model_path: Option<&Path>,
    data: &Path,
    predictions: Option<&Path>,
    out: &Path,
    render: bool,
) -> Result<()> {
    out_dir(out)?;
    let model = model_path.map(load_model).transpose()?;
    let mut m = RunManifest::new("eval", &serde_json::json!({"render": render}))?;
    m.inputs = [Some(data), model_path, predictions]
        .into_iter()
        .flatten()
        .map(Path::to_path_buf)
        .collect();
    let start = Instant::now();
    let samples = held_out(model.as_ref(), load_named(data)?);
    if samples.is_empty() {
        return Err(CliError::Validation(
            "none of the model's test samples are in the data directory".into(),
        ));
    }
    let render_dir = render.then(|| out.join("renders"));
    if let Some(d) = &render_dir {
        out_dir(d)?;
    }
    let first = &samples[0].1;
    let template = LahmParams::for_scenario(
        &first.spec,
        &SimParams::default(),
        &TransportConfig::default(),
        1.0,
    );

    let report: EvalReport = match predictions {
        Some(dir) => {
            let mut cases = vec![];
            for (stem, s) in &samples {
                let path = dir.join(format!("{stem}.gwhp"));
                let c = FieldContainer::read(&path).map_err(|e| {
                    CliError::Validation(format!("prediction {}: {e}", path.display()))
                })?;
                let predicted =
                    ScalarField::new(s.spec.grid, c.channel_f64("temperature")?, "degC")?;
                cases.push(EvalCase {
                    source_id: s.spec.geology.seed,
                    predicted,
                    target: s.temperature.clone(),
                    velocity: Some(s.velocity.clone()),
                });
            }
            evaluate_cases(&cases, Some(&template), render_dir.as_deref(), &[])?
        }
        None => {
            let model = model
                .as_ref()
                .expect("clap requires --model without --predictions");
            let test: Vec<TrainingPair> = samples
                .iter()
                .map(|(_, s)| preprocess(s, &model.stats))
                .collect();
            evaluate_test_set(
                model,
                &test,
                &first.spec.grid,
                Some(&template),
                render_dir.as_deref(),
            )?
        }
    };
    m.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    let report_path = out.join("report.json");
    fs::write(&report_path, serde_json::to_vec_pretty(&report)?)?;
    m.outputs.push(report_path);
    m.outputs.extend(render_dir);
    m.write(out)?;
    println!(
        "samples {} aggregate relative error {:.4} (analytical plume {}) max abs error {:.3} K",
        report.samples.len(),
        report.aggregate_relative_error,
        report
            .lahm_aggregate_relative_error
            .map_or("n/a".into(), |v| format!("{v:.4}")),
        report.max_abs_error
    );
    Ok(())
}

fn predict(model_path: &Path, scenario: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let spec = read_json::<ScenarioFile>(scenario)?.into_spec();
    let sim = SimParams::default();
    spec.validate(TransportConfig::default().ambient_temperature)?;
    parent_dir(out)?;
    let mut m = RunManifest::new("predict", &spec)?;
    m.seeds.insert("geology".into(), spec.geology.seed);
    m.inputs = vec![model_path.to_path_buf(), scenario.to_path_buf()];

    let start = Instant::now();
    let flow = solve_flow(&spec, &sim)?;
    m.timings
        .insert("flow".into(), start.elapsed().as_secs_f64());
    let t1 = Instant::now();
    let t = model.infer(&flow.velocity)?;
    m.timings
        .insert("inference".into(), t1.elapsed().as_secs_f64());
    write_flow(out, &flow.velocity, &t)?;
    m.outputs.push(out.to_path_buf());
    write_file_manifest(&m, out)?;
    eprintln!(
        "max temperature {:.3} °C ({} ms inference)",
        t.max(),
        (t1.elapsed().as_secs_f64() * 1e3).round()
    );
    Ok(())
}

fn write_flow(out: &Path, v: &VectorField, t: &ScalarField) -> Result<()> {
    let g = t.grid();
    FieldContainer::new(g.nx, g.ny)?
        .with("qx", v.x())?
        .with("qy", v.y())?
        .with("temperature", t.values())?
        .write(out)?;
    Ok(())
}

fn lahm(params: &Path, out: &Path) -> Result<()> {
    let cfg: LahmRunConfig = read_config(params)?;
    parent_dir(out)?;
    let well = cfg
        .well_cell
        .unwrap_or_else(|| cfg.grid.center_cell_index());
    let mut m = RunManifest::new("lahm", &cfg)?;
    m.inputs.push(params.to_path_buf());
    let start = Instant::now();
    let t = lahm_field(&cfg.lahm, &cfg.grid, well, cfg.flow_angle_deg.to_radians())?;
    m.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    FieldContainer::new(cfg.grid.nx, cfg.grid.ny)?
        .with("temperature", t.values())?
        .write(out)?;
    m.outputs.push(out.to_path_buf());
    write_file_manifest(&m, out)?;
    Ok(())
}

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use sharechain::cascade::{CascadeError, CascadeModel};
use sharechain::chains::{ChainUniverse, PlatformSet};
use sharechain::config::{ConfigError, ExperimentConfig};
use sharechain::evaluation::{confusion_csv, evaluate_cascade};
use sharechain::features::{extract_all, read_jsonl, write_jsonl, FeatureError, FeatureKind, FeatureRecord, FeatureSubset};
use sharechain::separability::{self, lsr_csv, Metric, SeparabilityError};
use sharechain::simulator::synth::generate_source;
use sharechain::simulator::dataset::write_png;
use sharechain::simulator::{self, load_manifest, SimulatorError};

use crate::{Command, MetricArg};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::runtime(e.to_string()),
            _ => Self::usage(e.to_string()),
        }
    }
}

impl From<SimulatorError> for CliError {
    fn from(e: SimulatorError) -> Self {
        match e {
            SimulatorError::InvalidProfile(_) | SimulatorError::MissingProfile(_) | SimulatorError::InvalidArgument(_) => {
                Self::usage(e.to_string())
            }
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::InvalidArgument(_) => Self::usage(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl From<CascadeError> for CliError {
    fn from(e: CascadeError) -> Self {
        match e {
            CascadeError::InvalidArgument(_) | CascadeError::Training(_) => Self::usage(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl From<SeparabilityError> for CliError {
    fn from(e: SeparabilityError) -> Self {
        Self::usage(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::runtime(format!("`{}`: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn read_records(path: &Path) -> Result<Vec<FeatureRecord>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_jsonl(BufReader::new(file)).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("`{}`: {}", path.display(), err.message);
        err
    })
}

fn load_model(path: &Path, informed: Option<&str>) -> Result<CascadeModel> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let model = CascadeModel::from_json(&text)
        .map_err(|e| CliError::runtime(format!("`{}`: {e}", path.display())))?;
    match informed {
        None => Ok(model),
        Some(name) => {
            let stop = parse_informed(model.universe(), name)?;
            Ok(model.with_informed_stop(stop)?)
        }
    }
}

fn parse_informed(universe: &ChainUniverse, name: &str) -> Result<Option<sharechain::chains::PlatformId>> {
    if name.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    universe
        .platforms()
        .by_name(name)
        .map(Some)
        .ok_or_else(|| CliError::usage(format!("`{name}` is not a platform of the model")))
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthSources {
            out,
            count,
            width,
            height,
            seed,
        } => synth_sources(&out, count, width, height, seed),
        Command::Simulate {
            config,
            sources,
            out,
            seed,
        } => simulate(config.as_deref(), sources, out, seed),
        Command::Extract {
            features,
            manifest,
            split,
            out,
        } => extract(&features, &manifest, split, &out),
        Command::Train {
            config,
            train,
            val,
            out,
            informed,
        } => train_cmd(config.as_deref(), &train, &val, &out, informed.as_deref()),
        Command::Infer { model, informed, images } => infer(&model, informed.as_deref(), &images),
        Command::Evaluate {
            model,
            test,
            out,
            single_feature,
            informed,
            confusion_dir,
        } => evaluate(&model, &test, &out, single_feature, informed.as_deref(), confusion_dir.as_deref()),
        Command::Separability {
            features,
            metric,
            standardize,
            descriptors,
            platforms,
            out,
            csv,
        } => separability_cmd(
            &features,
            metric,
            standardize,
            descriptors.as_deref(),
            &platforms,
            &out,
            csv.as_deref(),
        ),
    }
}

fn synth_sources(out: &Path, count: usize, width: usize, height: usize, seed: u64) -> Result<()> {
    if count == 0 || width < 8 || height < 8 {
        return Err(CliError::usage("need count >= 1 and at least 8x8 pixels"));
    }
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    (0..count).into_par_iter().try_for_each(|i| {
        let raster = generate_source(width, height, sharechain::seeds::derive_seed(seed, i as u64));
        write_png(&out.join(format!("src_{i:04}.png")), &raster).map_err(CliError::from)
    })?;
    println!("wrote {count} sources to {}", out.display());
    Ok(())
}

fn simulate(config: Option<&Path>, sources: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let sources = sources
        .or_else(|| cfg.dataset.sources.clone())
        .ok_or_else(|| CliError::usage("no sources directory (use --sources or dataset.sources)"))?;
    let out = out
        .or_else(|| cfg.dataset.out.clone())
        .ok_or_else(|| CliError::usage("no output directory (use --out or dataset.out)"))?;
    if !sources.is_dir() {
        return Err(CliError::runtime(format!("sources directory `{}` does not exist", sources.display())));
    }
    let universe = cfg.universe()?;
    let profiles = cfg.profiles()?;
    let manifest = simulator::build_dataset(&sources, &profiles, &universe, &cfg.dataset_options(), &out)?;
    println!("wrote {} images to {}", manifest.entries.len(), out.display());
    Ok(())
}

fn extract(features: &str, manifest_path: &Path, split: Option<simulator::Split>, out: &Path) -> Result<()> {
    let subset: FeatureSubset = features.parse()?;
    let manifest = load_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| split.map_or(true, |s| e.split == s))
        .collect();
    let records = entries
        .par_iter()
        .map(|e| {
            let path = root.join(&e.path);
            let bytes = fs::read(&path).map_err(|err| io_error(&path, err))?;
            let mut rec = extract_all(&bytes, &subset)
                .map_err(|err| CliError::runtime(format!("`{}`: {err}", path.display())))?;
            rec.id = e.path.clone();
            rec.label = Some(e.label.clone());
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let file = File::create(out).map_err(|e| io_error(out, e))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, &records)?;
    w.flush().map_err(|e| io_error(out, e))?;
    println!("extracted {} records ({subset}) to {}", records.len(), out.display());
    Ok(())
}

fn train_cmd(config: Option<&Path>, train: &Path, val: &Path, out: &Path, informed: Option<&str>) -> Result<()> {
    let cfg = load_config(config)?;
    let universe = cfg.universe()?;
    let subset = cfg.feature_subset()?;
    let mut train_cfg = cfg.train_config()?;
    if let Some(name) = informed {
        train_cfg.informed_stop = parse_informed(&universe, name)?;
    }
    let train_records = read_records(train)?;
    let val_records = read_records(val)?;
    for (path, recs, what) in [(train, &train_records, "training"), (val, &val_records, "validation")] {
        if recs.is_empty() {
            return Err(CliError::usage(format!("{what} file `{}` contains no records", path.display())));
        }
    }
    let (model, warnings) = sharechain::cascade::train_cascade(&universe, &subset, &train_records, &val_records, &train_cfg)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_file(out, model.to_json().as_bytes())?;
    println!("trained {} blocks on {} records; model written to {}", model.blocks().len(), train_records.len(), out.display());
    Ok(())
}

fn infer_paths(images: &[String]) -> Result<Vec<String>> {
    let mut paths = Vec::new();
    for arg in images {
        if arg == "-" {
            for line in io::stdin().lock().lines() {
                let line = line.map_err(|e| CliError::runtime(format!("stdin: {e}")))?;
                let line = line.trim();
                if !line.is_empty() {
                    paths.push(line.to_string());
                }
            }
        } else {
            paths.push(arg.clone());
        }
    }
    Ok(paths)
}

fn infer(model_path: &Path, informed: Option<&str>, images: &[String]) -> Result<()> {
    let model = load_model(model_path, informed)?;
    let subset = FeatureSubset::new(model.features().iter().copied())?;
    let paths = infer_paths(images)?;
    let results: Vec<std::result::Result<String, String>> = paths
        .par_iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| e.to_string())?;
            let record = extract_all(&bytes, &subset).map_err(|e| e.to_string())?;
            let output = model.infer(&record).map_err(|e| e.to_string())?;
            Ok(format!(
                "{}\t{}\t{}",
                p,
                model.universe().format_label(&output.chain),
                u8::from(output.rejected)
            ))
        })
        .collect();
    let stdout = io::stdout();
    let mut w = stdout.lock();
    let mut failures = 0;
    for (p, r) in paths.iter().zip(results) {
        match r {
            Ok(line) => writeln!(w, "{line}").map_err(|e| CliError::runtime(format!("stdout: {e}")))?,
            Err(e) => {
                failures += 1;
                eprintln!("{p}: {e}");
            }
        }
    }
    if failures > 0 {
        return Err(CliError::runtime(format!("{failures} of {} images failed", paths.len())));
    }
    Ok(())
}

fn evaluate(
    model_path: &Path,
    test: &Path,
    out: &Path,
    single: Option<FeatureKind>,
    informed: Option<&str>,
    confusion_dir: Option<&Path>,
) -> Result<()> {
    let model = load_model(model_path, informed)?;
    let records = read_records(test)?;
    if records.is_empty() {
        return Err(CliError::usage(format!("test file `{}` contains no records", test.display())));
    }
    let report = evaluate_cascade(&model, &records, single)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(out, text.as_bytes())?;
    if let Some(dir) = confusion_dir {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for step in &report.steps {
            write_file(&dir.join(format!("confusion_block{}.csv", step.block)), confusion_csv(step).as_bytes())?;
        }
    }
    println!("mode {} on {} samples", report.mode, report.n_samples);
    println!("block\tclasses\tacc\tacc_cond\trejected\trandom");
    for s in &report.steps {
        println!(
            "F_-{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            s.block, s.label_space_size, s.acc_strict, s.acc_conditional, s.rejection_rate, s.random_guess
        );
    }
    Ok(())
}

fn separability_cmd(
    features: &Path,
    metric: MetricArg,
    standardize: bool,
    descriptors: Option<&str>,
    platforms: &str,
    out: &Path,
    csv: Option<&Path>,
) -> Result<()> {
    let platforms = PlatformSet::new(platforms.split(',').map(str::trim)).map_err(|e| CliError::usage(e.to_string()))?;
    let records = read_records(features)?;
    if records.is_empty() {
        return Err(CliError::usage(format!("`{}` contains no records", features.display())));
    }
    let kinds: Vec<FeatureKind> = match descriptors {
        Some(s) => s.parse::<FeatureSubset>()?.to_vec(),
        None => FeatureKind::ALL.into_iter().filter(|k| records.iter().all(|r| r.has(*k))).collect(),
    };
    if kinds.is_empty() {
        return Err(CliError::usage("no descriptor is present in every record"));
    }
    let mut matrix = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in &records {
        let mut row = Vec::new();
        for &k in &kinds {
            let v = r
                .vector(k)
                .ok_or_else(|| CliError::usage(format!("record `{}` lacks the {k} descriptor", r.id)))?;
            row.extend(v);
        }
        matrix.push(row);
        let label = r
            .label
            .as_deref()
            .ok_or_else(|| CliError::usage(format!("record `{}` has no label", r.id)))?;
        labels.push(
            platforms
                .parse_chain(label)
                .map_err(|e| CliError::usage(format!("record `{}`: {e}", r.id)))?,
        );
    }
    let metric = match metric {
        MetricArg::Lsr => Metric::Lsr,
        MetricArg::Ier => Metric::Ier,
    };
    let report = separability::report(&matrix, &labels, &platforms, metric, standardize)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(out, text.as_bytes())?;
    if let (Some(path), Some(values)) = (csv, report.per_sample_lsr.as_ref()) {
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let names: Vec<String> = labels.iter().map(|c| platforms.format_chain(c)).collect();
        write_file(path, lsr_csv(&ids, &names, values).as_bytes())?;
    }
    match (&report.ier, &report.per_sample_lsr) {
        (Some(ier), _) => println!("IER {}", ier.value()),
        (_, Some(v)) => println!("LSR over {} samples, {} groups", v.len(), report.groups.len()),
        _ => {}
    }
    Ok(())
}

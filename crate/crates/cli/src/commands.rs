use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use xscale_core::data::{load_csv, save_csv, Split};
use xscale_core::metrics::Report;
use xscale_core::model::Model;
use xscale_core::scoring::{pot_threshold, ScoredSeries};
use xscale_core::training::{fit, Detector};

use crate::config::RunConfig;
use crate::{plot, CliError, Common};

/// Loads the configuration, applies flag overrides, prepares the output
/// directory and the thread pool, and echoes the resolved configuration.
fn setup(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(c.config.as_deref())?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    fs::create_dir_all(&c.out)?;
    let echo = cfg.to_toml();
    log::info!("effective configuration:\n{echo}");
    fs::write(c.out.join("config.resolved.toml"), echo)?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn synth(c: &Common) -> Result<(), CliError> {
    let cfg = setup(c)?;
    let bench = cfg.benchmark();
    let (train, test) = bench.generate()?;
    save_csv(&train, &c.out.join("train.csv"))?;
    save_csv(&test, &c.out.join("test.csv"))?;
    let (train_spec, test_spec) = bench.specs();
    let echo = format!(
        "# generator specs, resolved\n[train]\n{}\n[test]\n{}",
        toml::to_string_pretty(&train_spec).expect("spec serializes"),
        toml::to_string_pretty(&test_spec).expect("spec serializes")
    );
    fs::write(c.out.join("synth_spec.toml"), echo)?;
    log::info!("wrote {} training and {} test rows", train.len(), test.len());
    Ok(())
}

pub fn train(c: &Common) -> Result<(), CliError> {
    let cfg = setup(c)?;
    let tc = cfg.train_config();
    tc.validate()?;
    let data = load_csv(cfg.data_path("train")?, None, Split::Train)?;
    let summary = Model::new(tc.model.clone(), tc.seed)?.summary();
    log::info!("{summary}");
    fs::write(c.out.join("model_summary.txt"), summary)?;
    let outcome = fit(&tc, &data)?;
    outcome.log.write_steps(create(&c.out.join("train_log.tsv"))?)?;
    outcome.log.write_epochs(create(&c.out.join("epochs.tsv"))?)?;
    outcome.log.write_timing(create(&c.out.join("timing.tsv"))?)?;
    outcome.detector.save(&c.out.join("checkpoint.bin"))?;
    log::info!("checkpoint written to {}", c.out.join("checkpoint.bin").display());
    Ok(())
}

pub fn score(c: &Common, checkpoint: &Path) -> Result<(), CliError> {
    let cfg = setup(c)?;
    let detector = Detector::load(checkpoint)?;
    let expected = cfg.train_config();
    if detector.config.model != expected.model {
        return Err(CliError::Validation(format!(
            "checkpoint {} was trained with a different [model] section than the configuration",
            checkpoint.display()
        )));
    }
    if detector.config.validation_fraction != expected.validation_fraction {
        return Err(CliError::Validation(format!(
            "checkpoint {} used validation_fraction {}, the configuration says {}",
            checkpoint.display(),
            detector.config.validation_fraction,
            expected.validation_fraction
        )));
    }
    let train = load_csv(cfg.data_path("train")?, None, Split::Train)?;
    let test_path = cfg.data_path("test")?;
    let labelled = csv_has_column(test_path, &cfg.data.label_column)?;
    let test = load_csv(test_path, labelled.then_some(cfg.data.label_column.as_str()), Split::Test)?;
    if train.channel_count() != detector.stats.len() || test.channel_count() != detector.stats.len() {
        return Err(CliError::Validation(format!(
            "checkpoint expects {} channels, data has {} (train) and {} (test)",
            detector.stats.len(),
            train.channel_count(),
            test.channel_count()
        )));
    }
    let aggregation = cfg.scoring.aggregation;
    let calibration = detector.calibration_scores(&train, aggregation)?;
    let pot = pot_threshold(&calibration, &cfg.pot)?;
    let scored = ScoredSeries::new(detector.score_dataset(&test)?, aggregation, pot.threshold);

    let mut w = create(&c.out.join("scores.csv"))?;
    writeln!(w, "index,score")?;
    for (t, s) in scored.scores.iter().enumerate() {
        writeln!(w, "{t},{s:?}")?;
    }
    w.flush()?;
    let mut w = create(&c.out.join("labels.csv"))?;
    writeln!(w, "# threshold={:?}", scored.threshold)?;
    writeln!(w, "index,label")?;
    for (t, l) in scored.labels.iter().enumerate() {
        writeln!(w, "{t},{l}")?;
    }
    w.flush()?;
    if scored.per_channel.len() > 1 {
        let mut w = create(&c.out.join("channel_scores.csv"))?;
        writeln!(w, "index,{}", test.names().join(","))?;
        for t in 0..test.len() {
            let row: Vec<String> = scored.per_channel.iter().map(|ch| format!("{:?}", ch[t])).collect();
            writeln!(w, "{t},{}", row.join(","))?;
        }
        w.flush()?;
    }
    fs::write(
        c.out.join("threshold.json"),
        serde_json::to_string_pretty(&pot).expect("threshold serializes") + "\n",
    )?;
    if cfg.scoring.plot {
        plot::render(&scored.scores, scored.threshold, test.labels(), &c.out.join("scores.png"))?;
    }
    let flagged = scored.labels.iter().filter(|&&l| l == 1).count();
    log::info!("threshold {:.6}: {flagged} of {} points flagged", scored.threshold, scored.labels.len());
    Ok(())
}

fn read_column<T: std::str::FromStr>(path: &Path, header: &str) -> Result<Vec<T>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == header)
        .ok_or_else(|| CliError::Validation(format!("{}: no column {header}", path.display())))?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let cell = record.get(col).unwrap_or("");
        out.push(cell.parse().map_err(|_| {
            CliError::Validation(format!("{}: row {}: cannot parse {cell:?}", path.display(), row + 1))
        })?);
    }
    Ok(out)
}

fn csv_has_column(path: &Path, column: &str) -> Result<bool, CliError> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(headers.iter().any(|h| h.trim() == column))
}

fn read_threshold(path: &Path) -> Result<Option<f64>, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .find_map(|l| l.strip_prefix("# threshold="))
        .and_then(|v| v.trim().parse().ok()))
}

pub fn eval(c: &Common, scores: Option<PathBuf>, predictions: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = setup(c)?;
    let scores_path = scores.unwrap_or_else(|| c.out.join("scores.csv"));
    let pred_path = predictions.unwrap_or_else(|| scores_path.with_file_name("labels.csv"));
    let scores: Vec<f64> = read_column(&scores_path, "score")?;
    let pred: Vec<u8> = read_column(&pred_path, "label")?;
    let threshold = read_threshold(&pred_path)?;
    let test = load_csv(cfg.data_path("test")?, Some(&cfg.data.label_column), Split::Test)?;
    let truth = test.labels().expect("label column requested");
    if scores.len() != truth.len() || pred.len() != truth.len() {
        return Err(CliError::Validation(format!(
            "lengths differ: {} scores, {} predicted labels, {} truth labels",
            scores.len(),
            pred.len(),
            truth.len()
        )));
    }
    let report = Report::evaluate(&scores, &pred, truth, threshold, cfg.metrics)?;
    fs::write(c.out.join("report.tsv"), report.to_tsv())?;
    fs::write(
        c.out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    print!("{}", report.to_tsv());
    Ok(())
}

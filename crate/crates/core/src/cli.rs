//! Command-line front end: `train`, `eval`, `grid`, `curve`, `sample`, `gen`.
//!
//! Exit codes: 0 success, 2 bad configuration or arguments, 3 i/o or empty
//! input, 4 dimension or data mismatch, 5 unsupported operation, 1 anything
//! else.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha1::{Digest, Sha1};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::oracle::{kr_map_1d, Cdf1D, Gmm1D, Normal1d};
use crate::train::{self, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_UNSUPPORTED: i32 = 5;

pub const CHECKPOINT_FILE: &str = "model.sosf";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GRID_FILE: &str = "grid.csv";

/// Maps a library error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::UnknownDataset(_) | Error::InvalidFractions(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::EmptyData => EXIT_IO,
        Error::DimensionMismatch { .. } | Error::InvalidData(_) | Error::Parse { .. } => EXIT_MISMATCH,
        Error::Unsupported(_) => EXIT_UNSUPPORTED,
        _ => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(name = "sosflow", version, about = "Sum-of-squares polynomial flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a JSON run configuration.
    Train {
        config: PathBuf,
        /// Override a config entry, e.g. `--set train.epochs=2`. Values are
        /// parsed as JSON, falling back to a plain string.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Mean log-likelihood and its standard error over a CSV file.
    Eval {
        checkpoint: PathBuf,
        data: PathBuf,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
    },
    /// Log-density on a regular grid (d ≤ 2).
    Grid {
        checkpoint: PathBuf,
        /// `lo,hi` for a 1D model or `lo1,hi1,lo2,hi2` for a 2D model.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bounds: Vec<f64>,
        #[arg(long)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Increasing map from the source to the data for a 1D model and/or a
    /// mixture oracle.
    Curve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `gmm3`, `gmm5`, or a JSON file with `weights`, `means`, `stds`.
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        hi: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw samples from a trained model.
    Sample {
        checkpoint: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as CSV.
    Gen {
        name: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Where the training rows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Generator {
        name: String,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// One `[lo, hi]` pair per dimension.
    pub bounds: Vec<[f64; 2]>,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

impl RunConfig {
    /// Parses a config document after applying `key.path=value` overrides.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.train.validate()?;
        if let Some(g) = &cfg.grid {
            check_grid(&g.bounds, g.resolution)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, overrides)
    }
}

fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override '{spec}' is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override '{key}': '{part}' is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::InvalidConfig("empty override key".into()))
}

fn check_grid(bounds: &[[f64; 2]], resolution: usize) -> Result<()> {
    if resolution == 0 {
        return Err(Error::InvalidConfig("grid resolution must be at least 1".into()));
    }
    if bounds.iter().any(|[lo, hi]| !(lo <= hi && lo.is_finite() && hi.is_finite())) {
        return Err(Error::InvalidConfig(format!("grid bounds {bounds:?} need lo <= hi")));
    }
    Ok(())
}

/// Hex SHA-1 of `blob <len>\0<bytes>`, the id git gives the same content.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: RunConfig,
    pub checkpoint: String,
    pub checkpoint_git_sha1: String,
    pub n_params: usize,
    pub best_epoch: usize,
    pub rows: usize,
    pub rejected_rows: usize,
}

fn load_dataset(spec: &DatasetSpec) -> Result<(Dataset, usize)> {
    match spec {
        DatasetSpec::Generator { name, n, seed } => Ok((data::gen(name, *n, *seed)?, 0)),
        DatasetSpec::Csv { path, delimiter } => {
            let (ds, report) = data::load_csv(path, delimiter_byte(*delimiter)?)?;
            Ok((ds, report.rejected_lines.len()))
        }
    }
}

fn delimiter_byte(c: char) -> Result<u8> {
    u8::try_from(c).map_err(|_| Error::InvalidConfig(format!("delimiter '{c}' is not a single byte")))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Trains per `config` and writes the checkpoint, metrics, manifest and
/// optional grid into its output directory.
pub fn cmd_train(config: &RunConfig) -> Result<Manifest> {
    let (ds, rejected) = load_dataset(&config.dataset)?;
    let outcome = train::fit_with_history(&ds.rows, &config.train)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let bytes = train::to_bytes(&outcome.model);
    let ckpt = dir.join(CHECKPOINT_FILE);
    fs::write(&ckpt, &bytes).map_err(|e| Error::io(&ckpt, e))?;

    let mut metrics = String::from("epoch,train_nll,val_nll\n");
    for m in &outcome.history {
        let val = m.val_nll.map(|v| format!("{v:?}")).unwrap_or_default();
        metrics.push_str(&format!("{},{:?},{}\n", m.epoch, m.train_nll, val));
    }
    write_out(Some(&dir.join(METRICS_FILE)), &metrics)?;

    if let Some(g) = &config.grid {
        let csv = density_grid(&outcome.model, &g.bounds, g.resolution)?;
        write_out(Some(&dir.join(GRID_FILE)), &csv)?;
    }

    let manifest = Manifest {
        config: config.clone(),
        checkpoint: CHECKPOINT_FILE.into(),
        checkpoint_git_sha1: git_blob_hash(&bytes),
        n_params: outcome.model.param_len(),
        best_epoch: outcome.best_epoch,
        rows: ds.n(),
        rejected_rows: rejected,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_out(Some(&dir.join(MANIFEST_FILE)), &(json + "\n"))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub mean_log_likelihood: f64,
    pub std_error: f64,
}

pub fn evaluate(model: &FlowModel, rows: &Array2<f64>) -> Result<EvalSummary> {
    if rows.ncols() != model.d() {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            got: rows.ncols(),
        });
    }
    let lp = model.log_prob_batch(rows)?;
    let n = lp.len();
    let mean = lp.sum() / n as f64;
    let var = if n > 1 {
        lp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(EvalSummary {
        n,
        mean_log_likelihood: mean,
        std_error: (var / n as f64).sqrt(),
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn fmt_logq(model: &FlowModel, x: &[f64]) -> String {
    match model.log_prob(x) {
        Ok(v) => format!("{v:?}"),
        // Far outside the data the polynomial stack overflows; the density is 0 to
        // working precision there.
        Err(Error::NonFinite(_)) | Err(Error::DomainError(_)) => "-inf".into(),
        Err(e) => format!("error: {e}"),
    }
}

/// CSV `x,logq` (1D) or `x1,x2,logq` (2D, `x1` varying slowest).
pub fn density_grid(model: &FlowModel, bounds: &[[f64; 2]], resolution: usize) -> Result<String> {
    if model.d() > 2 {
        return Err(Error::Unsupported(format!("density grids need d <= 2, model has d = {}", model.d())));
    }
    if bounds.len() != model.d() {
        return Err(Error::DimensionMismatch {
            expected: model.d(),
            got: bounds.len(),
        });
    }
    check_grid(bounds, resolution)?;
    let mut out = String::new();
    if model.d() == 1 {
        out.push_str("x,logq\n");
        for x in linspace(bounds[0][0], bounds[0][1], resolution) {
            out.push_str(&format!("{x:?},{}\n", fmt_logq(model, &[x])));
        }
    } else {
        out.push_str("x1,x2,logq\n");
        let xs = linspace(bounds[0][0], bounds[0][1], resolution);
        let ys = linspace(bounds[1][0], bounds[1][1], resolution);
        for &a in &xs {
            for &b in &ys {
                out.push_str(&format!("{a:?},{b:?},{}\n", fmt_logq(model, &[a, b])));
            }
        }
    }
    Ok(out)
}

/// Resolves `gmm3`, `gmm5` or a JSON mixture file.
pub fn oracle_mixture(spec: &str) -> Result<Gmm1D> {
    match spec {
        "gmm3" => Ok(data::gmm3()),
        "gmm5" => Ok(data::gmm5()),
        path => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let g: Gmm1D =
                serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("mixture {path}: {e}")))?;
            g.validate()?;
            Ok(g)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub z: Vec<f64>,
    pub model: Option<Vec<f64>>,
    pub oracle: Option<Vec<f64>>,
}

impl Curve {
    /// Largest `|T_model − T_oracle|` when both are present.
    pub fn sup_diff(&self) -> Option<f64> {
        let (m, o) = (self.model.as_ref()?, self.oracle.as_ref()?);
        Some(m.iter().zip(o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("z,T");
        if self.model.is_some() && self.oracle.is_some() {
            out.push_str(",T_oracle");
        }
        out.push('\n');
        for (i, z) in self.z.iter().enumerate() {
            let first = self.model.as_ref().or(self.oracle.as_ref()).expect("one curve")[i];
            out.push_str(&format!("{z:?},{first:?}"));
            if let (Some(_), Some(o)) = (&self.model, &self.oracle) {
                out.push_str(&format!(",{:?}", o[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Samples the source-to-data map of a 1D model and/or the exact
/// standard-normal-to-mixture map on `points` evenly spaced `z`.
pub fn transform_curve(
    model: Option<&FlowModel>,
    oracle: Option<&Gmm1D>,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<Curve> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidConfig(format!("curve range [{lo}, {hi}] needs lo <= hi")));
    }
    if points == 0 {
        return Err(Error::InvalidConfig("curve needs at least 1 point".into()));
    }
    if model.is_none() && oracle.is_none() {
        return Err(Error::InvalidConfig("curve needs a checkpoint, an oracle, or both".into()));
    }
    let z = linspace(lo, hi, points);
    let model_curve = match model {
        Some(m) if m.d() != 1 => {
            return Err(Error::Unsupported(format!("curves need a 1D model, got d = {}", m.d())));
        }
        Some(m) => Some(z.iter().map(|&v| m.inverse(&[v]).map(|x| x[0])).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    let oracle_curve = match oracle {
        Some(g) => {
            let src = Cdf1D::new(Normal1d::new(0.0, 1.0)?);
            let tgt = Cdf1D::new(g.clone());
            Some(z.iter().map(|&v| kr_map_1d(&src, &tgt, v)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    Ok(Curve {
        z,
        model: model_curve,
        oracle: oracle_curve,
    })
}

fn matrix_csv(rows: &Array2<f64>) -> String {
    let header: Vec<String> = (1..=rows.ncols()).map(|j| format!("x{j}")).collect();
    let mut out = header.join(",") + "\n";
    for row in rows.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, overrides } => {
            let cfg = RunConfig::load(&config, &overrides)?;
            let m = cmd_train(&cfg)?;
            eprintln!(
                "wrote {} (best epoch {}, {} params)",
                cfg.output_dir.join(CHECKPOINT_FILE).display(),
                m.best_epoch,
                m.n_params
            );
            if m.rejected_rows > 0 {
                eprintln!("skipped {} rows with non-finite values", m.rejected_rows);
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            data,
            delimiter,
        } => {
            let model = train::load(&checkpoint)?;
            let (ds, report) = data::load_csv(&data, delimiter_byte(delimiter)?)?;
            if !report.rejected_lines.is_empty() {
                eprintln!("skipped {} rows with non-finite values", report.rejected_lines.len());
            }
            let s = evaluate(&model, &ds.rows)?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
            Ok(())
        }
        Command::Grid {
            checkpoint,
            bounds,
            resolution,
            out,
        } => {
            if bounds.len() % 2 != 0 || bounds.is_empty() {
                return Err(Error::InvalidConfig("--bounds takes lo,hi pairs".into()));
            }
            let pairs: Vec<[f64; 2]> = bounds.chunks(2).map(|c| [c[0], c[1]]).collect();
            check_grid(&pairs, resolution)?;
            let model = train::load(&checkpoint)?;
            write_out(out.as_deref(), &density_grid(&model, &pairs, resolution)?)
        }
        Command::Curve {
            checkpoint,
            oracle,
            lo,
            hi,
            points,
            out,
        } => {
            if !(lo <= hi) {
                return Err(Error::InvalidConfig(format!("curve range [{lo}, {hi}] needs lo <= hi")));
            }
            let model = checkpoint.map(train::load).transpose()?;
            let mixture = oracle.as_deref().map(oracle_mixture).transpose()?;
            let curve = transform_curve(model.as_ref(), mixture.as_ref(), lo, hi, points)?;
            write_out(out.as_deref(), &curve.to_csv())?;
            if let Some(d) = curve.sup_diff() {
                eprintln!("sup_diff={d:?}");
            }
            Ok(())
        }
        Command::Sample {
            checkpoint,
            n,
            seed,
            out,
        } => {
            let model = train::load(&checkpoint)?;
            write_out(out.as_deref(), &matrix_csv(&model.sample(n, seed)?))
        }
        Command::Gen { name, n, seed, out } => {
            let ds = data::gen(&name, n, seed)?;
            match out {
                Some(p) => ds.save_csv(p),
                None => ds.write_csv(io::stdout()),
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overrides_and_validation() {
        let text = r#"{"dataset": {"kind": "generator", "name": "gmm3", "n": 100},
                       "output_dir": "out", "train": {"epochs": 3}}"#;
        let cfg = RunConfig::from_json(text, &["train.epochs=2".into(), "output_dir=elsewhere".into()]).unwrap();
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);

        let bad = r#"{"dataset": {"kind": "generator", "name": "gmm3", "n": 100}, "output_dir": "o", "colour": 1}"#;
        assert!(matches!(RunConfig::from_json(bad, &[]), Err(Error::InvalidConfig(_))));
        let bad_ds = r#"{"dataset": {"kind": "csv", "path": "a.csv", "sep": ";"}, "output_dir": "o"}"#;
        assert!(RunConfig::from_json(bad_ds, &[]).is_err());
        let err = RunConfig::from_json("{\"dataset\": ", &[]).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert!(RunConfig::from_json(text, &["train.learning_rate=-1".into()]).is_err());
        assert!(RunConfig::from_json(text, &["novalue".into()]).is_err());
    }

    #[test]
    fn blob_hash_matches_git() {
        // `printf 'hello\n' | git hash-object --stdin`
        assert_eq!(git_blob_hash(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
        assert_eq!(git_blob_hash(b""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidConfig("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::EmptyData), EXIT_IO);
        assert_eq!(exit_code(&Error::DimensionMismatch { expected: 1, got: 2 }), EXIT_MISMATCH);
        assert_eq!(exit_code(&Error::Unsupported("x".into())), EXIT_UNSUPPORTED);
        assert_eq!(exit_code(&Error::NotInvertible), EXIT_OTHER);
    }

    #[test]
    fn oracle_curve_is_symmetric() {
        let g = data::gmm3();
        let c = transform_curve(None, Some(&g), -2.0, 2.0, 5).unwrap();
        let o = c.oracle.as_ref().unwrap();
        assert!(o[2].abs() < 1e-9);
        assert!((o[0] + o[4]).abs() < 1e-8);
        assert!(c.sup_diff().is_none());
        assert!(c.to_csv().starts_with("z,T\n"));
        assert!(transform_curve(None, Some(&g), 1.0, 0.0, 5).is_err());
    }

    #[test]
    fn identity_grid_is_normal_log_pdf() {
        let m = FlowModel::new(1, &crate::flow::FlowShape::default(), 0).unwrap();
        let csv = density_grid(&m, &[[-3.0, 3.0]], 7).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,logq");
        for (i, line) in lines[1..].iter().enumerate() {
            let (x, lq) = line.split_once(',').unwrap();
            let x: f64 = x.parse().unwrap();
            assert_eq!(x, -3.0 + i as f64);
            let lq: f64 = lq.parse().unwrap();
            assert!((lq - crate::special::normal_ln_pdf(x)).abs() < 1e-12);
        }
        assert!(matches!(density_grid(&m, &[[-3.0, 3.0]], 0), Err(Error::InvalidConfig(_))));
        let m3 = FlowModel::new(3, &crate::flow::FlowShape::default(), 0).unwrap();
        assert!(matches!(density_grid(&m3, &[[0.0, 1.0]; 3], 4), Err(Error::Unsupported(_))));
    }
}

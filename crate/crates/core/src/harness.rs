//! Experiment configs, CSV tables, manifests and the deterministic trial runner.
//!
//! A run reads one JSON config, writes CSV/JSON artifacts into an output
//! directory and finishes with `manifest.json` listing them. Trials fan out
//! over a rayon pool, results are collected in trial order and reduced
//! sequentially, so artifacts are byte-identical for any thread count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensembles::{
    read_instance, write_instance, EnsembleSpec, EnsembleVariant, HermitianMatrix, Instance, SignKind,
};
use crate::error::{Error, Result};
use crate::lowenergy::{
    chebyshev_witness, chebyshev_witness_dense, circuit_lower_bound, dos_proxy_rows, product_state_baseline,
    qpe_experiment, DosProxyQuery, QpeKernel, QpeModel, WitnessConfig,
};
use crate::spectral::{
    eigenvalues, low_energy_fraction, normalized_trace_power, resolvent_trace_moment, schatten_p_norm, semicircle_cdf,
    semicircle_mass, semicircle_resolvent_moment, spectrum_csv, ResolventQuery, Spectrum, SpectrumSummary,
};
use crate::stats::Estimate;
use crate::universality::{
    evaluate_bounds, lindeberg_telescope_experiment, moment_matching_check, moment_records, norm_tail_experiment,
    norm_tail_experiment_at, resolvent_concentration_experiment_q, resolvent_records, sample_paired_spectra, BoundKind,
    MomentMode, UniversalityBoundInputs,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "PAULILAB_OUT";

/// Seventeen significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format_float(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A record type that renders as one CSV row.
pub trait TableRow {
    fn columns() -> Vec<&'static str>;
    fn cells(&self) -> Vec<Cell>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn from_rows<R: TableRow>(rows: &[R]) -> Self {
        let mut t = Table::new(&R::columns());
        for r in rows {
            t.push(r.cells());
        }
        t
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(Cell::render).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Evaluates `f(0..count)` on the current rayon pool and returns results in index order.
pub fn run_trials<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Runs `f` inside a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Resource(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Moments,
    Resolvent,
    NormTail,
    Telescope,
    Concentration,
    MomentMatching,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpeSettings {
    #[serde(default)]
    pub resolution: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default)]
    pub kernel: QpeKernel,
}

fn default_repeats() -> usize {
    1
}

fn default_shots() -> usize {
    10_000
}

impl Default for QpeSettings {
    fn default() -> Self {
        QpeSettings {
            resolution: 0.0,
            repeats: default_repeats(),
            shots: default_shots(),
            kernel: QpeKernel::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DosSettings {
    pub bins: usize,
    pub range: [f64; 2],
    /// Proxy cutoff; no proxy table without it.
    pub e0: Option<f64>,
    /// Proxy grid spacing; `2 eps/sqrt(p)` from the first epsilon when absent.
    pub spacing: Option<f64>,
}

impl Default for DosSettings {
    fn default() -> Self {
        DosSettings {
            bins: 80,
            range: [-3.0, 3.0],
            e0: None,
            spacing: None,
        }
    }
}

/// One experiment run. `seed` is mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<String>,
    pub seed: u64,
    #[serde(default)]
    pub ensemble: Option<EnsembleVariant>,
    /// Instance file used instead of sampling from `ensemble`.
    #[serde(default)]
    pub instance: Option<PathBuf>,
    /// Number of instances; instance `k` uses seed `seed + k`.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub study: Option<Study>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub p: Vec<u32>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub omega: Vec<f64>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub q: Option<u32>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub moment_mode: Option<MomentMode>,
    #[serde(default)]
    pub qpe: Option<QpeSettings>,
    #[serde(default)]
    pub witness: Option<WitnessConfig>,
    #[serde(default)]
    pub dos: Option<DosSettings>,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical JSON without the execution knobs (`threads`, `output_dir`).
    pub fn canonical_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("threads");
            o.remove("output_dir");
        }
        Ok(serde_json::to_string(&v)?)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?.as_bytes())))
    }

    fn trials(&self, default: usize) -> usize {
        self.trials.unwrap_or(default)
    }

    fn require_n(&self) -> Result<usize> {
        self.n
            .or(match self.ensemble {
                Some(EnsembleVariant::PauliStrings { n, .. }) | Some(EnsembleVariant::KLocal { n, .. }) => Some(n),
                _ => None,
            })
            .ok_or_else(|| Error::config("this experiment needs `n`"))
    }

    fn first<T: Copy>(v: &[T], name: &str) -> Result<T> {
        v.first()
            .copied()
            .ok_or_else(|| Error::config(format!("this experiment needs a nonempty `{name}` list")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Sample,
    Spectrum,
    Pnorm,
    Resolvent,
    Dos,
    Universality,
    Qpe,
    Witness,
    Bound,
    Baseline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Spectrum => "spectrum",
            Command::Pnorm => "pnorm",
            Command::Resolvent => "resolvent",
            Command::Dos => "dos",
            Command::Universality => "universality",
            Command::Qpe => "qpe",
            Command::Witness => "witness",
            Command::Bound => "bound",
            Command::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub command: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub wall_time: f64,
    pub files: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

/// Writes files into one directory atomically (temp file + rename) and
/// removes everything it wrote if the run fails.
struct OutputWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputWriter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if self.written.iter().any(|w| w == name) {
            return Err(Error::config(format!("output file {name} written twice")));
        }
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let res = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, self.dir.join(name))
        })();
        if let Err(e) = res {
            let _ = fs::remove_file(&tmp);
            return Err(e.into());
        }
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_table(&mut self, name: &str, t: &Table) -> Result<()> {
        self.write(name, t.to_csv().as_bytes())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn cleanup(&self) {
        for name in &self.written {
            let _ = fs::remove_file(self.dir.join(name));
        }
    }
}

/// Files written by a successful run (manifest last).
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub manifest: Manifest,
}

/// Runs `command` with `cfg`, writing into `out`, on a pool of `threads` workers.
pub fn run(command: Command, cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let mut w = OutputWriter::new(out)?;
    let res = with_threads(threads, || dispatch(command, cfg, &mut w)).and_then(|r| r);
    let finish = res.and_then(|_| {
        let manifest = Manifest {
            experiment: cfg.experiment.clone().unwrap_or_else(|| command.name().to_string()),
            command: command.name().to_string(),
            params: serde_json::from_str(&cfg.canonical_json()?)?,
            seed: cfg.seed,
            config_hash: cfg.hash()?,
            version: VERSION.to_string(),
            wall_time: start.elapsed().as_secs_f64(),
            files: w.written.clone(),
        };
        w.write_json(MANIFEST, &manifest)?;
        Ok(manifest)
    });
    match finish {
        Ok(manifest) => Ok(RunOutput {
            dir: out.to_path_buf(),
            files: w.written.clone(),
            manifest,
        }),
        Err(e) => {
            w.cleanup();
            Err(e)
        }
    }
}

fn ensemble_spec(cfg: &ExperimentConfig, k: usize) -> Result<EnsembleSpec> {
    let variant = cfg
        .ensemble
        .ok_or_else(|| Error::config("config needs `ensemble` or `instance`"))?;
    let spec = EnsembleSpec {
        variant,
        seed: cfg.seed.wrapping_add(k as u64),
    };
    spec.validate().map_err(|e| Error::config(e.to_string()))?;
    Ok(spec)
}

/// Instances named by the config: the instance file, or `count` (else `default`) samples.
fn load_instances(cfg: &ExperimentConfig, default: usize) -> Result<Vec<(Option<EnsembleSpec>, Instance)>> {
    if let Some(path) = &cfg.instance {
        let f =
            fs::File::open(path).map_err(|e| Error::config(format!("cannot open instance {}: {e}", path.display())))?;
        let inst = read_instance(&mut std::io::BufReader::new(f))?;
        return Ok(vec![(None, inst)]);
    }
    let count = cfg.count.unwrap_or(default);
    if count == 0 {
        return Err(Error::config("`count` must be at least 1"));
    }
    run_trials(count, |k| {
        let spec = ensemble_spec(cfg, k)?;
        Ok((Some(spec), spec.sample()?))
    })
}

fn spectra(instances: &[(Option<EnsembleSpec>, Instance)]) -> Result<Vec<Spectrum>> {
    run_trials(instances.len(), |k| eigenvalues(&instances[k].1.to_dense()?))
}

fn dispatch(command: Command, cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    match command {
        Command::Sample => cmd_sample(cfg, w),
        Command::Spectrum => cmd_spectrum(cfg, w),
        Command::Pnorm => cmd_pnorm(cfg, w),
        Command::Resolvent => cmd_resolvent(cfg, w),
        Command::Dos => cmd_dos(cfg, w),
        Command::Universality => cmd_universality(cfg, w),
        Command::Qpe => cmd_qpe(cfg, w),
        Command::Witness => cmd_witness(cfg, w),
        Command::Bound => cmd_bound(cfg, w),
        Command::Baseline => cmd_baseline(cfg, w),
    }
}

fn cmd_sample(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let count = cfg.count.unwrap_or(1);
    if count == 0 {
        return Err(Error::config("`count` must be at least 1"));
    }
    for k in 0..count {
        let spec = ensemble_spec(cfg, k)?;
        let inst = spec.sample()?;
        let ext = match inst {
            Instance::Matrix(HermitianMatrix::Dense(_)) => "bin",
            _ => "json",
        };
        let mut buf = Vec::new();
        write_instance(&mut buf, &inst, Some(&spec))?;
        w.write(&format!("instance_{k:04}.{ext}"), &buf)?;
    }
    Ok(())
}

fn default_ps(cfg: &ExperimentConfig) -> Vec<u32> {
    if cfg.p.is_empty() {
        vec![2, 4, 8]
    } else {
        cfg.p.clone()
    }
}

fn cmd_spectrum(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let inst = load_instances(cfg, 1)?;
    let specs = spectra(&inst)?;
    let ps = default_ps(cfg);
    let single = specs.len() == 1;
    for (k, s) in specs.iter().enumerate() {
        let stem = if single {
            "spectrum".to_string()
        } else {
            format!("spectrum_{k:04}")
        };
        w.write(&format!("{stem}.csv"), spectrum_csv(s).as_bytes())?;
        w.write_json(&format!("{stem}.json"), &SpectrumSummary::new(s, &ps))?;
    }
    Ok(())
}

fn cmd_pnorm(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let inst = load_instances(cfg, 1)?;
    let specs = spectra(&inst)?;
    let ps = default_ps(cfg);
    let mut per = Table::new(&["instance", "p", "norm"]);
    for (k, s) in specs.iter().enumerate() {
        for &p in &ps {
            per.push(vec![
                Cell::from(k),
                Cell::from(p as usize),
                Cell::from(schatten_p_norm(s, p as f64)),
            ]);
        }
        per.push(vec![
            Cell::from(k),
            Cell::from("inf"),
            Cell::from(schatten_p_norm(s, f64::INFINITY)),
        ]);
    }
    w.write_table("pnorm.csv", &per)?;
    let mut summary = Table::new(&[
        "p",
        "instances",
        "expected_trace_power",
        "std_error",
        "p_norm",
        "p_norm_se",
    ]);
    for &p in &ps {
        let xs: Vec<f64> = specs.iter().map(|s| normalized_trace_power(s, p as f64)).collect();
        let e = Estimate::from_samples(&xs);
        let r = e.pth_root(p as f64);
        summary.push(vec![
            Cell::from(p as usize),
            Cell::from(xs.len()),
            Cell::from(e.mean),
            Cell::from(e.std_error),
            Cell::from(r.mean),
            Cell::from(r.std_error),
        ]);
    }
    w.write_table("pnorm_summary.csv", &summary)
}

fn cmd_resolvent(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let inst = load_instances(cfg, 1)?;
    let specs = spectra(&inst)?;
    let ps = if cfg.p.is_empty() { vec![2] } else { cfg.p.clone() };
    let etas = if cfg.eta.is_empty() { vec![0.3] } else { cfg.eta.clone() };
    let omegas = if cfg.omega.is_empty() {
        vec![0.0]
    } else {
        cfg.omega.clone()
    };
    let mut t = Table::new(&["instance", "p", "eta", "omega", "moment", "semicircle"]);
    for &p in &ps {
        for &eta in &etas {
            for &omega in &omegas {
                let q = ResolventQuery::new(omega, eta, p).map_err(|e| Error::config(e.to_string()))?;
                let sc = semicircle_resolvent_moment(&q)?;
                for (k, s) in specs.iter().enumerate() {
                    t.push(vec![
                        Cell::from(k),
                        Cell::from(p as usize),
                        Cell::from(eta),
                        Cell::from(omega),
                        Cell::from(resolvent_trace_moment(s, &q)),
                        Cell::from(sc),
                    ]);
                }
            }
        }
    }
    w.write_table("resolvent.csv", &t)
}

fn cmd_dos(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let inst = load_instances(cfg, cfg.trials.unwrap_or(1))?;
    let specs = spectra(&inst)?;
    let settings = cfg.dos.unwrap_or_default();
    let [lo, hi] = settings.range;
    if settings.bins == 0 || !(hi > lo) {
        return Err(Error::config("dos needs bins >= 1 and range[0] < range[1]"));
    }
    let width = (hi - lo) / settings.bins as f64;
    let mut counts = vec![0usize; settings.bins];
    let mut total = 0usize;
    for s in &specs {
        for &x in s.eigenvalues() {
            total += 1;
            if x >= lo && x < hi {
                counts[(((x - lo) / width) as usize).min(settings.bins - 1)] += 1;
            }
        }
    }
    let mut hist = Table::new(&["bin_lo", "bin_hi", "mass", "density", "semicircle_mass"]);
    for (b, &c) in counts.iter().enumerate() {
        let a = lo + b as f64 * width;
        let z = a + width;
        let mass = c as f64 / total as f64;
        hist.push(vec![
            Cell::from(a),
            Cell::from(z),
            Cell::from(mass),
            Cell::from(mass / width),
            Cell::from(semicircle_mass(a, z)),
        ]);
    }
    w.write_table("dos_histogram.csv", &hist)?;

    if !cfg.epsilon.is_empty() {
        let mut t = Table::new(&[
            "epsilon",
            "threshold",
            "pooled_fraction",
            "std_error",
            "semicircle_mass",
        ]);
        for &eps in &cfg.epsilon {
            let fr: Vec<f64> = specs.iter().map(|s| low_energy_fraction(s, eps)).collect();
            let e = Estimate::from_samples(&fr);
            let thr = -2.0 * (1.0 - eps);
            t.push(vec![
                Cell::from(eps),
                Cell::from(thr),
                Cell::from(e.mean),
                Cell::from(e.std_error),
                Cell::from(semicircle_cdf(thr)),
            ]);
        }
        w.write_table("low_energy.csv", &t)?;
    }

    if let Some(e0) = settings.e0 {
        let p = ExperimentConfig::first(&cfg.p, "p")?;
        let eta = ExperimentConfig::first(&cfg.eta, "eta")?;
        let spacing = match settings.spacing {
            Some(s) => s,
            None => 2.0 * ExperimentConfig::first(&cfg.epsilon, "epsilon")? / (p as f64).sqrt(),
        };
        let q = DosProxyQuery { e0, eta, spacing, p };
        q.validate().map_err(|e| Error::config(e.to_string()))?;
        w.write_table("dos_proxy.csv", &Table::from_rows(&dos_proxy_rows(&specs, &q)?))?;
    }
    Ok(())
}

fn cmd_universality(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let study = cfg.study.unwrap_or(Study::Moments);
    let trials = cfg.trials(100);
    match study {
        Study::Moments | Study::Resolvent => {
            let n = cfg.require_n()?;
            if cfg.m.is_empty() {
                return Err(Error::config("universality needs an `m` grid"));
            }
            let ps = if cfg.p.is_empty() { vec![2] } else { cfg.p.clone() };
            let paired = sample_paired_spectra(n, &cfg.m, trials, cfg.seed)?;
            let mut rows = Vec::new();
            if study == Study::Moments {
                for &p in &ps {
                    rows.extend(moment_records(&paired, p).map_err(|e| Error::config(e.to_string()))?);
                }
                w.write_table("universality_moments.csv", &Table::from_rows(&rows))
            } else {
                let etas = if cfg.eta.is_empty() { vec![0.3] } else { cfg.eta.clone() };
                let omegas = if cfg.omega.is_empty() {
                    vec![0.0]
                } else {
                    cfg.omega.clone()
                };
                for &p in &ps {
                    for &eta in &etas {
                        rows.extend(
                            resolvent_records(&paired, p, eta, &omegas).map_err(|e| Error::config(e.to_string()))?,
                        );
                    }
                }
                w.write_table("universality_resolvent.csv", &Table::from_rows(&rows))
            }
        }
        Study::NormTail => {
            let n = cfg.require_n()?;
            let eps = if cfg.epsilon.is_empty() {
                vec![0.5]
            } else {
                cfg.epsilon.clone()
            };
            let mut rows = Vec::new();
            for &e in &eps {
                if cfg.m.is_empty() {
                    rows.push(norm_tail_experiment(n, e, trials, cfg.seed)?);
                } else {
                    for &m in &cfg.m {
                        rows.push(norm_tail_experiment_at(n, m, e, trials, cfg.seed)?);
                    }
                }
            }
            w.write_table("norm_tail.csv", &Table::from_rows(&rows))
        }
        Study::Telescope => {
            let n = cfg.require_n()?;
            let m = ExperimentConfig::first(&cfg.m, "m")?;
            let p = ExperimentConfig::first(&cfg.p, "p")?;
            let rows = lindeberg_telescope_experiment(n, m, p, trials, cfg.seed)?;
            w.write_table("telescope.csv", &Table::from_rows(&rows))
        }
        Study::Concentration => {
            let n = cfg.require_n()?;
            let p = ExperimentConfig::first(&cfg.p, "p")?;
            let eta = ExperimentConfig::first(&cfg.eta, "eta")?;
            let omega = cfg.omega.first().copied().unwrap_or(0.0);
            let q = cfg.q.unwrap_or(2);
            if cfg.m.is_empty() {
                return Err(Error::config("concentration needs an `m` grid"));
            }
            let rows = cfg
                .m
                .iter()
                .map(|&m| resolvent_concentration_experiment_q(n, m, p, q, omega, eta, trials, cfg.seed))
                .collect::<Result<Vec<_>>>()?;
            w.write_table("concentration.csv", &Table::from_rows(&rows))
        }
        Study::MomentMatching => {
            let dim = cfg.dim.unwrap_or(3);
            let mode = cfg.moment_mode.unwrap_or(MomentMode::Exhaustive);
            let mut t = Table::new(&["signs", "dim", "k", "instances", "max_deviation"]);
            for (kind, name) in [(SignKind::Complex, "complex"), (SignKind::Real, "real")] {
                for k in 1..=3 {
                    let r = moment_matching_check(dim, k, kind, mode)?;
                    t.push(vec![
                        Cell::from(name),
                        Cell::from(r.dim),
                        Cell::from(r.k),
                        Cell::from(r.instances),
                        Cell::from(r.max_deviation),
                    ]);
                }
            }
            w.write_table("moment_matching.csv", &t)
        }
    }
}

fn cmd_qpe(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let inst = load_instances(cfg, 1)?;
    let specs = spectra(&inst)?;
    let settings = cfg.qpe.unwrap_or_default();
    let eps = ExperimentConfig::first(&cfg.epsilon, "epsilon")?;
    let mut records = Vec::new();
    for (k, s) in specs.iter().enumerate() {
        let model = QpeModel {
            resolution: settings.resolution,
            repeats: settings.repeats,
            seed: crate::rng::SeedTree::new(cfg.seed).child(k as u64).key(),
            kernel: settings.kernel,
        };
        model.validate().map_err(|e| Error::config(e.to_string()))?;
        records.push(qpe_experiment(s, eps, &model, settings.shots)?);
    }
    let mut t = Table::new(&[
        "instance",
        "instance_hash",
        "epsilon",
        "shots",
        "successes",
        "success_rate",
        "ci95_lo",
        "ci95_hi",
        "predicted",
        "single_shot",
        "degenerate",
    ]);
    for (k, r) in records.iter().enumerate() {
        t.push(vec![
            Cell::from(k),
            Cell::from(r.instance_hash.as_str()),
            Cell::from(r.epsilon),
            Cell::from(r.shots),
            Cell::from(r.successes),
            Cell::from(r.success_rate),
            Cell::from(r.ci95[0]),
            Cell::from(r.ci95[1]),
            Cell::from(r.predicted),
            Cell::from(r.single_shot),
            Cell::from(r.degenerate),
        ]);
    }
    w.write_table("qpe.csv", &t)?;
    w.write_json("qpe.json", &records)
}

fn cmd_witness(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let inst = load_instances(cfg, 1)?;
    let eps = ExperimentConfig::first(&cfg.epsilon, "epsilon")?;
    let wc = cfg.witness.unwrap_or_default();
    let results = run_trials(inst.len(), |k| match &inst[k].1 {
        Instance::Pauli(h) => chebyshev_witness(h, eps, &wc),
        other => chebyshev_witness_dense(&other.to_dense()?, eps, &wc),
    })?;
    #[derive(Serialize)]
    struct Out<'a> {
        epsilon: f64,
        d: usize,
        beta: f64,
        energy: f64,
        lambda_min: f64,
        ratio: f64,
        success: bool,
        trace: f64,
        min_eigenvalue: f64,
        verification_cost_log10: Option<f64>,
        coefficients: &'a [f64],
    }
    let json: Vec<Out> = results
        .iter()
        .map(|r| Out {
            epsilon: r.epsilon,
            d: r.d,
            beta: r.beta,
            energy: r.energy,
            lambda_min: r.lambda_min,
            ratio: r.ratio,
            success: r.success,
            trace: r.trace,
            min_eigenvalue: r.min_eigenvalue,
            verification_cost_log10: r.verification_cost_log10,
            coefficients: &r.coefficients,
        })
        .collect();
    let mut t = Table::new(&[
        "instance",
        "epsilon",
        "d",
        "beta",
        "energy",
        "lambda_min",
        "ratio",
        "success",
        "trace",
        "min_eigenvalue",
    ]);
    for (k, r) in results.iter().enumerate() {
        t.push(vec![
            Cell::from(k),
            Cell::from(r.epsilon),
            Cell::from(r.d),
            Cell::from(r.beta),
            Cell::from(r.energy),
            Cell::from(r.lambda_min),
            Cell::from(r.ratio),
            Cell::from(r.success),
            Cell::from(r.trace),
            Cell::from(r.min_eigenvalue),
        ]);
    }
    w.write_table("witness.csv", &t)?;
    w.write_json("witness.json", &json)
}

fn cmd_bound(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let n = cfg.n.unwrap_or(20);
    if cfg.m.is_empty() || cfg.epsilon.is_empty() {
        return Err(Error::config("bound needs `epsilon` and `m` lists"));
    }
    let mut rows = Vec::new();
    for &e in &cfg.epsilon {
        for &m in &cfg.m {
            rows.push(circuit_lower_bound(e, m, n).map_err(|e| Error::config(e.to_string()))?);
        }
    }
    w.write_table("lower_bound.csv", &Table::from_rows(&rows))?;
    if !cfg.p.is_empty() {
        let eta = cfg.eta.first().copied().unwrap_or(1.0);
        let q = cfg.q.unwrap_or(2);
        let mut t = Table::new(&["n", "m", "p", "eta", "bound", "value"]);
        for &m in &cfg.m {
            for &p in &cfg.p {
                let inp = UniversalityBoundInputs::for_pauli(n, m, p, eta, q);
                for kind in BoundKind::ALL {
                    let v = evaluate_bounds(&inp, kind).map_err(|e| Error::config(e.to_string()))?;
                    t.push(vec![
                        Cell::from(n),
                        Cell::from(m),
                        Cell::from(p as usize),
                        Cell::from(eta),
                        Cell::from(kind.name()),
                        Cell::from(v),
                    ]);
                }
            }
        }
        w.write_table("universality_bounds.csv", &t)?;
    }
    Ok(())
}

fn cmd_baseline(cfg: &ExperimentConfig, w: &mut OutputWriter) -> Result<()> {
    let inst = load_instances(cfg, 1)?;
    let restarts = cfg.restarts.unwrap_or(8);
    let rows = run_trials(inst.len(), |k| {
        let Instance::Pauli(h) = &inst[k].1 else {
            return Err(Error::config("baseline needs a Pauli-sum instance"));
        };
        let r = product_state_baseline(h, restarts, crate::rng::SeedTree::new(cfg.seed).child(k as u64).key())?;
        let lmin = eigenvalues(&h.to_dense()?)?.lambda_min();
        Ok(vec![
            Cell::from(k),
            Cell::from(r.energy),
            Cell::from(lmin),
            Cell::from(r.energy / lmin),
            Cell::from(r.sweeps),
            Cell::from(r.converged),
        ])
    })?;
    let mut t = Table::new(&[
        "instance",
        "product_energy",
        "lambda_min",
        "ratio",
        "sweeps",
        "converged",
    ]);
    for r in rows {
        t.push(r);
    }
    w.write_table("baseline.csv", &t)
}

//! Command implementations for the `sbamdt` binary.
//!
//! Every command reads a flat `key = value` config file. Blank lines and
//! lines starting with `#` or `;` are ignored, as are `[section]` headers.
//! Unknown keys are rejected. Recognized keys:
//!
//! | key | commands | default |
//! |-----|----------|---------|
//! | `seed` | all | 0 |
//! | `out` | all | `.` |
//! | `scenario` (`ushape`, `square`) | simulate | `ushape` |
//! | `n_train`, `n_test` | simulate | 500, 200 |
//! | `sigma`, `n_unstructured` | simulate | 0.1, 10 |
//! | `gp_length_scale`, `gp_variance` | simulate | 0.5, 1 |
//! | `train` | fit | required |
//! | `variant` (`sk`, `s2`) | fit | `sk` |
//! | `ablation` (`full`, `hard_only`, `no_multivariate`) | fit | `full` |
//! | `n_trees`, `n_iter`, `burn_in`, `thin`, `n_chains` | fit | 30, 2000, 1000, 5, 1 |
//! | `n_knots`, `embed_dim`, `grid_size` | fit | min(100, n), min(3, t-1), 100 |
//! | `q`, `gamma`, `delta`, `max_depth`, `p_m` | fit | 8, 0.95, 2, 30, d/(d+p) |
//! | `nu`, `alpha_mu`, `s_a`, `s_b`, `alpha_g`, `beta_g` | fit | 3, 3, 1, 2, 1, 0.5 |
//! | `alpha_proposal_shape` | fit | 20 |
//! | `base_levels` (comma list) | fit | `0.5,1,2` |
//! | `p_grow`, `p_prune`, `p_change` | fit | 0.4, 0.4, 0.2 |
//! | `model` | predict, report, diag | required |
//! | `test` | predict, report, diag | required |
//! | `write_draws` | predict | false |
//! | `truth` (`y`, `f_true`) | report | `y` |
//! | `grid_n`, `grid_unstructured` (`median`, `structured`) | report | 0, `median` |
//! | `diag_points`, `mc_draws` | diag | 4, 100000 |
//!
//! `SBAMDT_THREADS` in the environment caps the number of chains run at once.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sbamdt::data::PointSet;
use sbamdt::gp_diag::{
    prior_cov_given_t, prior_cov_given_ta, prior_cov_monte_carlo, CovarianceReport,
};
use sbamdt::io::{
    read_dataset, read_model, read_table, write_draws, write_json, write_labeled, write_model,
    write_predictions, Table,
};
use sbamdt::metrics::report;
use sbamdt::model::quantile;
use sbamdt::priors::MoveProbs;
use sbamdt::sampler::MoveStats;
use sbamdt::synthdata::{assemble, Scenario, SyntheticSpec};
use sbamdt::{fit, Ablation, FitConfig, Variant};

pub const THREADS_ENV: &str = "SBAMDT_THREADS";

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out",
    "scenario",
    "n_train",
    "n_test",
    "sigma",
    "n_unstructured",
    "gp_length_scale",
    "gp_variance",
    "train",
    "variant",
    "ablation",
    "n_trees",
    "n_iter",
    "burn_in",
    "thin",
    "n_chains",
    "n_knots",
    "embed_dim",
    "grid_size",
    "q",
    "gamma",
    "delta",
    "max_depth",
    "p_m",
    "nu",
    "alpha_mu",
    "s_a",
    "s_b",
    "alpha_g",
    "beta_g",
    "alpha_proposal_shape",
    "base_levels",
    "p_grow",
    "p_prune",
    "p_change",
    "model",
    "test",
    "write_draws",
    "truth",
    "grid_n",
    "grid_unstructured",
    "diag_points",
    "mc_draws",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] sbamdt::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 1 for bad input or configuration, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Model(e) if e.is_validation() => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Parsed key-value settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl FromStr for Config {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty()
                || line.starts_with('#')
                || line.starts_with(';')
                || line.starts_with('[')
            {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", n + 1))
            })?;
            let k = k.trim().to_ascii_lowercase();
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(CliError::Config(format!(
                    "line {}: unknown key `{k}`",
                    n + 1
                )));
            }
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key `{k}`",
                    n + 1
                )));
            }
        }
        Ok(Self { entries })
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    /// Sets `key`, replacing any value from the file.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        self.raw(key)
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Config(format!("`{key}` is required")))
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = PathBuf::from(self.raw("out").unwrap_or("."));
        fs::create_dir_all(&dir).map_err(|source| CliError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(dir)
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)], default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => options
                .iter()
                .find(|(name, _)| name.eq_ignore_ascii_case(v))
                .map(|(_, t)| *t)
                .ok_or_else(|| {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    CliError::Config(format!(
                        "`{key}` must be one of {}, got `{v}`",
                        names.join(", ")
                    ))
                }),
        }
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let scenario = self.choice(
            "scenario",
            &[("ushape", Scenario::UShape), ("square", Scenario::Square)],
            Scenario::UShape,
        )?;
        let (n_train, n_test, seed) = (
            self.get_or("n_train", 500)?,
            self.get_or("n_test", 200)?,
            self.get_or("seed", 0)?,
        );
        let mut spec = match scenario {
            Scenario::UShape => SyntheticSpec::ushape(n_train, n_test, seed),
            Scenario::Square => SyntheticSpec::square(n_train, n_test, seed),
        };
        spec.sigma = self.get_or("sigma", spec.sigma)?;
        if scenario == Scenario::UShape {
            spec.n_unstructured = self.get_or("n_unstructured", spec.n_unstructured)?;
        }
        spec.gp_length_scale = self.get_or("gp_length_scale", spec.gp_length_scale)?;
        spec.gp_variance = self.get_or("gp_variance", spec.gp_variance)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let d = FitConfig::default();
        let base_levels = match self.raw("base_levels") {
            None => d.base_levels.clone(),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Config(format!("`base_levels`: cannot parse `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let threads_env = std::env::var(THREADS_ENV).ok();
        let max_threads = threads_env
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(format!("{THREADS_ENV}: cannot parse `{v}`")))
            })
            .transpose()?;
        let cfg = FitConfig {
            variant: self.choice(
                "variant",
                &[("sk", Variant::Sk), ("s2", Variant::S2)],
                d.variant,
            )?,
            ablation: self.choice(
                "ablation",
                &[
                    ("full", Ablation::Full),
                    ("hard_only", Ablation::HardOnly),
                    ("no_multivariate", Ablation::NoMultivariate),
                ],
                d.ablation,
            )?,
            n_trees: self.get_or("n_trees", d.n_trees)?,
            n_iter: self.get_or("n_iter", d.n_iter)?,
            burn_in: self.get_or("burn_in", d.burn_in)?,
            thin: self.get_or("thin", d.thin)?,
            seed: self.get_or("seed", d.seed)?,
            n_chains: self.get_or("n_chains", d.n_chains)?,
            max_threads,
            n_knots: self.get("n_knots")?,
            embed_dim: self.get("embed_dim")?,
            grid_size: self.get_or("grid_size", d.grid_size)?,
            q: self.get_or("q", d.q)?,
            gamma: self.get_or("gamma", d.gamma)?,
            delta: self.get_or("delta", d.delta)?,
            max_depth: self.get_or("max_depth", d.max_depth)?,
            p_m: self.get("p_m")?,
            nu: self.get_or("nu", d.nu)?,
            alpha_mu: self.get_or("alpha_mu", d.alpha_mu)?,
            s_a: self.get_or("s_a", d.s_a)?,
            s_b: self.get_or("s_b", d.s_b)?,
            alpha_g: self.get_or("alpha_g", d.alpha_g)?,
            beta_g: self.get_or("beta_g", d.beta_g)?,
            alpha_proposal_shape: self.get_or("alpha_proposal_shape", d.alpha_proposal_shape)?,
            base_levels,
            moves: MoveProbs {
                grow: self.get_or("p_grow", d.moves.grow)?,
                prune: self.get_or("p_prune", d.moves.prune)?,
                change: self.get_or("p_change", d.moves.change)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Writes `train.csv` and `test.csv`.
pub fn cmd_simulate(cfg: &Config) -> Result<Vec<PathBuf>> {
    let spec = cfg.synthetic_spec()?;
    let dir = cfg.out_dir()?;
    let (train, test) = assemble(&spec)?;
    let paths = vec![out_file(&dir, "train.csv"), out_file(&dir, "test.csv")];
    write_labeled(&paths[0], &train)?;
    write_labeled(&paths[1], &test)?;
    Ok(paths)
}

/// Fits a model to `train` and writes it to the output directory.
pub fn cmd_fit(cfg: &Config) -> Result<MoveStats> {
    let fit_cfg = cfg.fit_config()?;
    let data = read_dataset(&cfg.path("train")?)?;
    let dir = cfg.out_dir()?;
    let model = fit(&data, &fit_cfg)?;
    write_model(&dir, &model)?;
    Ok(model.total_stats())
}

/// Human-readable acceptance summary.
pub fn format_stats(s: &MoveStats) -> String {
    let rate = |a: u64, p: u64| if p == 0 { 0.0 } else { a as f64 / p as f64 };
    let mut out = format!(
        "grow {}/{} ({:.3})\nprune {}/{} ({:.3})\nchange {}/{} ({:.3})",
        s.grow_accepted,
        s.grow_proposed,
        rate(s.grow_accepted, s.grow_proposed),
        s.prune_accepted,
        s.prune_proposed,
        rate(s.prune_accepted, s.prune_proposed),
        s.change_accepted,
        s.change_proposed,
        rate(s.change_accepted, s.change_proposed),
    );
    if s.alpha_proposed > 0 {
        out.push_str(&format!(
            "\nalpha {}/{} ({:.3})",
            s.alpha_accepted,
            s.alpha_proposed,
            rate(s.alpha_accepted, s.alpha_proposed)
        ));
    }
    if s.jitter_events > 0 {
        out.push_str(&format!("\njitter {}", s.jitter_events));
    }
    out
}

fn test_table(cfg: &Config) -> Result<Table> {
    Ok(read_table(&cfg.path("test")?)?)
}

/// Writes `predictions.csv` and, if `write_draws` is set, `draws.csv`.
pub fn cmd_predict(cfg: &Config) -> Result<Vec<PathBuf>> {
    let model = read_model(&cfg.path("model")?)?;
    let Table {
        structured: s,
        unstructured: x,
        ..
    } = test_table(cfg)?;
    let want_draws: bool = cfg.get_or("write_draws", false)?;
    let dir = cfg.out_dir()?;
    let draws = model.predict(&s, &x)?;
    let mut paths = vec![out_file(&dir, "predictions.csv")];
    write_predictions(&paths[0], &draws)?;
    if want_draws {
        paths.push(out_file(&dir, "draws.csv"));
        write_draws(&paths[1], &draws)?;
    }
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub truth: String,
    pub n: usize,
    pub rmspe: f64,
    pub mape: f64,
    pub crps: f64,
    pub importance: Vec<f64>,
}

/// Writes `metrics.json`, `pointwise.csv`, `importance.csv` and, when
/// `grid_n > 0`, `surfaces.csv`.
pub fn cmd_report(cfg: &Config) -> Result<Metrics> {
    let model = read_model(&cfg.path("model")?)?;
    let Table {
        structured: s,
        unstructured: x,
        y,
        f_true,
    } = test_table(cfg)?;
    let use_f = cfg.choice("truth", &[("y", false), ("f_true", true)], false)?;
    let truth = if use_f {
        f_true.ok_or_else(|| sbamdt::Error::MissingColumn("f_true".into()))?
    } else {
        y.ok_or_else(|| sbamdt::Error::MissingColumn("y".into()))?
    };
    let grid_n: usize = cfg.get_or("grid_n", 0)?;
    let copy_structured = cfg.choice(
        "grid_unstructured",
        &[("median", false), ("structured", true)],
        false,
    )?;
    if copy_structured && x.dim() != s.dim() {
        return Err(CliError::Config(
            "`grid_unstructured = structured` needs as many unstructured as structured columns"
                .into(),
        ));
    }
    let dir = cfg.out_dir()?;
    let draws = model.predict(&s, &x)?;
    let mean = draws.mean();
    let y_draws: Vec<&[f64]> = (0..draws.n_points).map(|i| draws.y_draws(i)).collect();
    let rep = report(&mean, &y_draws, &truth)?;
    let importance = model.feature_importance();
    let metrics = Metrics {
        truth: if use_f { "f_true" } else { "y" }.into(),
        n: truth.len(),
        rmspe: rep.rmspe,
        mape: rep.mape,
        crps: rep.crps,
        importance: importance.clone(),
    };
    write_json(&out_file(&dir, "metrics.json"), &metrics)?;

    let mut pw = csv_writer(&out_file(&dir, "pointwise.csv"))?;
    write_row(&mut pw, &["id", "truth", "mean", "abs_error", "crps"])?;
    for i in 0..truth.len() {
        write_row(
            &mut pw,
            &[
                i.to_string(),
                truth[i].to_string(),
                mean[i].to_string(),
                (mean[i] - truth[i]).abs().to_string(),
                rep.crps_per_point[i].to_string(),
            ],
        )?;
    }
    flush(pw, &dir)?;

    let mut iw = csv_writer(&out_file(&dir, "importance.csv"))?;
    write_row(&mut iw, &["feature", "mean_splits"])?;
    for (j, v) in importance.iter().enumerate() {
        let name = if j == 0 {
            "structured".to_string()
        } else {
            format!("x_{j}")
        };
        write_row(&mut iw, &[name, v.to_string()])?;
    }
    flush(iw, &dir)?;

    if grid_n > 0 {
        write_surface(
            &model,
            &s,
            &x,
            grid_n,
            copy_structured,
            &out_file(&dir, "surfaces.csv"),
        )?;
    }
    Ok(metrics)
}

/// Posterior mean and sd of `f` on a `grid_n × grid_n` grid spanning the
/// test points' first two structured coordinates. Unstructured features
/// are held at their test medians or copied from the grid coordinates.
fn write_surface(
    model: &sbamdt::FittedModel,
    s: &PointSet,
    x: &PointSet,
    grid_n: usize,
    copy_structured: bool,
    path: &Path,
) -> Result<()> {
    let d = s.dim();
    let range = |j: usize| {
        let c = s.column(j);
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let medians: Vec<f64> = (0..s.dim()).map(|j| quantile(&s.column(j), 0.5)).collect();
    let x_medians: Vec<f64> = (0..x.dim()).map(|j| quantile(&x.column(j), 0.5)).collect();
    let (r0, r1) = (range(0), if d > 1 { range(1) } else { (0.0, 0.0) });
    let step = |(lo, hi): (f64, f64), k: usize| {
        if grid_n == 1 {
            lo
        } else {
            lo + (hi - lo) * k as f64 / (grid_n - 1) as f64
        }
    };
    let mut gs = Vec::new();
    let mut gx = Vec::new();
    let n_second = if d > 1 { grid_n } else { 1 };
    for a in 0..grid_n {
        for b in 0..n_second {
            let mut row = medians.clone();
            row[0] = step(r0, a);
            if d > 1 {
                row[1] = step(r1, b);
            }
            if copy_structured {
                gx.extend_from_slice(&row);
            } else {
                gx.extend_from_slice(&x_medians);
            }
            gs.extend(row);
        }
    }
    let gs = PointSet::new(d, gs)?;
    let gx = if x.dim() == 0 {
        PointSet::empty()
    } else {
        PointSet::new(x.dim(), gx)?
    };
    let draws = model.predict(&gs, &gx)?;
    let (mean, sd) = (draws.mean(), draws.sd());
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (1..=d).map(|j| format!("s_{j}")).collect();
    header.extend(["mean".into(), "sd".into()]);
    write_row(&mut w, &header)?;
    for i in 0..gs.len() {
        let mut row: Vec<String> = gs.row(i).iter().map(f64::to_string).collect();
        row.push(mean[i].to_string());
        row.push(sd[i].to_string());
        write_row(&mut w, &row)?;
    }
    flush(w, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagOutput {
    pub given_trees_and_decisions: CovarianceReport,
    pub given_trees: CovarianceReport,
}

/// Compares the analytic prior covariance of the last posterior sample's
/// trees against Monte Carlo at the first `diag_points` test rows; writes
/// `diag_given_ta.json` and `diag_given_t.json`.
pub fn cmd_diag(cfg: &Config) -> Result<DiagOutput> {
    let model = read_model(&cfg.path("model")?)?;
    let Table {
        structured: s,
        unstructured: x,
        ..
    } = test_table(cfg)?;
    let k: usize = cfg.get_or("diag_points", 4)?;
    let n_draws: usize = cfg.get_or("mc_draws", 100_000)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    if k == 0 || k > s.len() {
        return Err(CliError::Config(format!(
            "`diag_points` must lie in [1, {}]",
            s.len()
        )));
    }
    let dir = cfg.out_dir()?;
    let rows: Vec<usize> = (0..k).collect();
    let (s, x) = (
        s.select(&rows),
        if x.dim() == 0 { x } else { x.select(&rows) },
    );
    let feats = sbamdt::model::model_features(model.config.ablation, &s, &x);
    let pts = model.knots.prepare(&s, &feats)?;
    let state = model
        .snapshots()
        .last()
        .ok_or_else(|| CliError::Config("model has no posterior samples".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_ta = prior_cov_given_ta(&state.trees, &model.knots, &pts, &model.hyper)?;
    let mc_ta = prior_cov_monte_carlo(
        &state.trees,
        None,
        &model.knots,
        &pts,
        &model.hyper,
        n_draws,
        &mut rng,
    )?;
    let a_t = prior_cov_given_t(&state.trees, &state.p_a, &model.knots, &pts, &model.hyper)?;
    let mc_t = prior_cov_monte_carlo(
        &state.trees,
        Some(&state.p_a),
        &model.knots,
        &pts,
        &model.hyper,
        n_draws,
        &mut rng,
    )?;
    let out = DiagOutput {
        given_trees_and_decisions: CovarianceReport::new(&a_ta, &mc_ta)?,
        given_trees: CovarianceReport::new(&a_t, &mc_t)?,
    };
    write_json(
        &out_file(&dir, "diag_given_ta.json"),
        &out.given_trees_and_decisions,
    )?;
    write_json(&out_file(&dir, "diag_given_t.json"), &out.given_trees)?;
    Ok(out)
}

type CsvOut = csv::Writer<std::io::BufWriter<fs::File>>;

fn csv_writer(path: &Path) -> Result<CsvOut> {
    let f = fs::File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(std::io::BufWriter::new(f)))
}

fn write_row<S: AsRef<str>>(w: &mut CsvOut, row: &[S]) -> Result<()> {
    w.write_record(row.iter().map(AsRef::as_ref))
        .map_err(|e| CliError::Model(sbamdt::Error::Io(std::io::Error::other(e))))
}

fn flush(mut w: CsvOut, dir: &Path) -> Result<()> {
    w.flush().map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

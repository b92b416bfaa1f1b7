//! CSV datasets and on-disk model files.
//!
//! Datasets use the columns `s_1..s_d`, `x_1..x_p`, `y` and optionally
//! `f_true`. A fitted model is a directory holding `model.json` (everything
//! except the posterior samples) and `snapshots.ndjson` (one kept state per
//! line, tagged with its chain). Floats are written in shortest round-trip
//! form, so reading back is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PointSet};
use crate::error::{Error, Result};
use crate::knots::{KnotParts, KnotSystem};
use crate::model::{quantile, Ablation, FitConfig, FittedModel, PredictiveDraws, Scaling, Variant};
use crate::priors::Hyperparams;
use crate::sampler::{MoveStats, PosteriorState, StateSnapshot};
use crate::synthdata::LabeledDataset;

pub const HEADER_FILE: &str = "model.json";
pub const SNAPSHOT_FILE: &str = "snapshots.ndjson";

/// Columns read from a dataset file; `y` and `f_true` may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub structured: PointSet,
    pub unstructured: PointSet,
    pub y: Option<Vec<f64>>,
    pub f_true: Option<Vec<f64>>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.structured.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The dataset, failing if there is no `y` column.
    pub fn dataset(&self) -> Result<Dataset> {
        let y = self
            .y
            .clone()
            .ok_or_else(|| Error::MissingColumn("y".into()))?;
        Dataset::new(self.structured.clone(), self.unstructured.clone(), y)
    }
}

fn indexed(header: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    let mut cols: Vec<(usize, usize)> = Vec::new();
    for (pos, name) in header.iter().enumerate() {
        if let Some(k) = name.trim().strip_prefix(prefix) {
            let k: usize = k.parse().map_err(|_| Error::Parse {
                context: "header".into(),
                message: format!("bad column name `{name}`"),
            })?;
            cols.push((k, pos));
        }
    }
    cols.sort_unstable();
    for (want, (k, _)) in (1..).zip(&cols) {
        if *k != want {
            return Err(Error::MissingColumn(format!("{prefix}{want}")));
        }
    }
    Ok(cols.into_iter().map(|(_, p)| p).collect())
}

/// Reads a dataset CSV. At least one `s_` column is required.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    let s_cols = indexed(&header, "s_")?;
    let x_cols = indexed(&header, "x_")?;
    if s_cols.is_empty() {
        return Err(Error::MissingColumn("s_1".into()));
    }
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let (y_col, f_col) = (find("y"), find("f_true"));
    let (mut s, mut x, mut y, mut f) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |pos: usize| -> Result<f64> {
            let raw = rec.get(pos).ok_or_else(|| Error::Parse {
                context: format!("line {line}"),
                message: format!("missing field {}", pos + 1),
            })?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                context: format!("line {line}"),
                message: format!("`{raw}` in column `{}` is not a number", &header[pos]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    context: format!("line {line}"),
                    message: format!("non-finite value in column `{}`", &header[pos]),
                });
            }
            Ok(v)
        };
        for &c in &s_cols {
            s.push(get(c)?);
        }
        for &c in &x_cols {
            x.push(get(c)?);
        }
        if let Some(c) = y_col {
            y.push(get(c)?);
        }
        if let Some(c) = f_col {
            f.push(get(c)?);
        }
    }
    Ok(Table {
        structured: PointSet::new(s_cols.len(), s)?,
        unstructured: if x_cols.is_empty() {
            PointSet::empty()
        } else {
            PointSet::new(x_cols.len(), x)?
        },
        y: y_col.map(|_| y),
        f_true: f_col.map(|_| f),
    })
}

/// Reads a dataset CSV that must contain `y`.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_table(path)?.dataset()
}

fn csv_err(e: csv::Error) -> Error {
    let context = e
        .position()
        .map_or_else(|| "csv".to_string(), |p| format!("line {}", p.line()));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            context,
            message: format!("{kind:?}"),
        },
    }
}

/// Writes a dataset CSV; `f_true` is included when given.
pub fn write_table(path: &Path, data: &Dataset, f_true: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = (1..=data.d_structured())
        .map(|k| format!("s_{k}"))
        .collect();
    header.extend((1..=data.n_unstructured()).map(|k| format!("x_{k}")));
    header.push("y".into());
    if f_true.is_some() {
        header.push("f_true".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = data
            .structured
            .row(i)
            .iter()
            .map(|v| v.to_string())
            .collect();
        if data.n_unstructured() > 0 {
            row.extend(data.unstructured.row(i).iter().map(|v| v.to_string()));
        }
        row.push(data.y[i].to_string());
        if let Some(f) = f_true {
            row.push(f[i].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labeled(path: &Path, data: &LabeledDataset) -> Result<()> {
    write_table(path, &data.data, Some(&data.f_true))
}

/// Everything about a fitted model except its posterior samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub variant: Variant,
    pub ablation: Ablation,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub scaling: Scaling,
    pub knot_rows: Vec<usize>,
    pub knots: KnotParts,
    pub d_structured: usize,
    pub n_unstructured: usize,
    pub n_chains: usize,
    pub config: FitConfig,
    pub stats: Vec<MoveStats>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotLine {
    chain: usize,
    #[serde(flatten)]
    state: StateSnapshot,
}

/// Writes `model.json` and `snapshots.ndjson` into `dir`.
pub fn write_model(dir: &Path, model: &FittedModel) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let header = ModelHeader {
        variant: model.config.variant,
        ablation: model.config.ablation,
        seed: model.config.seed,
        hyperparams: model.hyper.clone(),
        scaling: model.scaling,
        knot_rows: model.knot_rows.clone(),
        knots: model.knots.parts(),
        d_structured: model.d_structured,
        n_unstructured: model.n_unstructured,
        n_chains: model.chains.len(),
        config: model.config.clone(),
        stats: model.stats.clone(),
    };
    let mut w = BufWriter::new(File::create(dir.join(HEADER_FILE))?);
    serde_json::to_writer_pretty(&mut w, &header)?;
    writeln!(w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(SNAPSHOT_FILE))?);
    for (chain, states) in model.chains.iter().enumerate() {
        for s in states {
            serde_json::to_writer(
                &mut w,
                &SnapshotLine {
                    chain,
                    state: s.to_snapshot(),
                },
            )?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a model written by [`write_model`].
pub fn read_model(dir: &Path) -> Result<FittedModel> {
    let header: ModelHeader =
        serde_json::from_reader(BufReader::new(File::open(dir.join(HEADER_FILE))?))?;
    let knots = KnotSystem::from_parts(header.knots)?;
    let mut chains: Vec<Vec<PosteriorState>> = vec![Vec::new(); header.n_chains];
    let reader = BufReader::new(File::open(dir.join(SNAPSHOT_FILE))?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SnapshotLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: format!("{SNAPSHOT_FILE} line {}", i + 1),
            message: e.to_string(),
        })?;
        let slot = chains.get_mut(rec.chain).ok_or_else(|| Error::Parse {
            context: format!("{SNAPSHOT_FILE} line {}", i + 1),
            message: format!("chain {} out of range", rec.chain),
        })?;
        slot.push(PosteriorState::from_snapshot(&rec.state, &knots)?);
    }
    Ok(FittedModel {
        config: header.config,
        hyper: header.hyperparams,
        knots,
        knot_rows: header.knot_rows,
        scaling: header.scaling,
        chains,
        stats: header.stats,
        d_structured: header.d_structured,
        n_unstructured: header.n_unstructured,
    })
}

/// Writes `id,mean,sd,q05,q95` summaries of the posterior draws of `f`.
pub fn write_predictions(path: &Path, draws: &PredictiveDraws) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["id", "mean", "sd", "q05", "q95"])
        .map_err(csv_err)?;
    let (mean, sd) = (draws.mean(), draws.sd());
    for i in 0..draws.n_points {
        let f = draws.f_draws(i);
        w.write_record([
            i.to_string(),
            mean[i].to_string(),
            sd[i].to_string(),
            quantile(f, 0.05).to_string(),
            quantile(f, 0.95).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the predictive response draws, one row per point.
pub fn write_draws(path: &Path, draws: &PredictiveDraws) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["id".to_string()];
    header.extend((1..=draws.n_draws).map(|s| format!("draw_{s}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..draws.n_points {
        let mut row = vec![i.to_string()];
        row.extend(draws.y_draws(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_draws`]; row `i` holds point `i`'s draws.
pub fn read_draws(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| Error::Parse {
                    context: format!("line {line}"),
                    message: format!("`{v}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

/// Serializes `value` as pretty JSON into `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let s = PointSet::from_rows(&[[0.1, 1.0 / 3.0], [-2.5e-17, 7.0]]).unwrap();
        let x = PointSet::from_rows(&[[std::f64::consts::PI], [1e300]]).unwrap();
        let d = Dataset::new(s, x, vec![0.2 + 0.1, -1.0]).unwrap();
        let p = dir.path().join("d.csv");
        write_table(&p, &d, Some(&[1.5, 2.0 / 7.0])).unwrap();
        let t = read_table(&p).unwrap();
        assert_eq!(t.dataset().unwrap(), d);
        assert_eq!(t.f_true.unwrap(), vec![1.5, 2.0 / 7.0]);
    }

    #[test]
    fn parse_errors_name_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "s_1,x_1,y\n0,1,2\n0,abc,2\n");
        let e = read_table(&p).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("x_1"), "{e}");
        let p = write(dir.path(), "b.csv", "s_1,x_1\n0,1\n");
        let e = read_dataset(&p).unwrap_err();
        assert!(matches!(e, Error::MissingColumn(ref c) if c == "y"));
        let p = write(dir.path(), "c.csv", "s_1,s_3,y\n0,1,2\n");
        assert!(matches!(read_table(&p).unwrap_err(), Error::MissingColumn(ref c) if c == "s_2"));
        let p = write(dir.path(), "d.csv", "s_1,y\n0,1\n0\n");
        assert!(read_table(&p).is_err());
    }

    #[test]
    fn columns_may_appear_in_any_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "y,x_2,s_1,x_1\n1,2,3,4\n");
        let t = read_table(&p).unwrap();
        assert_eq!(t.structured.row(0), &[3.0]);
        assert_eq!(t.unstructured.row(0), &[4.0, 2.0]);
        assert_eq!(t.y, Some(vec![1.0]));
        assert_eq!(t.f_true, None);
    }
}

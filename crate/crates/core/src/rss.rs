//! Received-signal-strength sensor-network series: loading, de-trending and
//! the resampled reference/test experiment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ScoreRecord;
use crate::linalg::DataMatrix;
use crate::methods::{Method, MethodSettings};
use crate::rng::{substream, Role};
use crate::shrinkage::{PriorSpec, TylerSettings, LAPPW_DEFAULT_GRID_POINTS};
use crate::sim::{score_all, thread_pool};

#[derive(Debug, Clone, PartialEq)]
pub struct RssSeries {
    pub timestamps: Vec<f64>,
    /// `T × p`, one row per time instant.
    pub channels: DMatrix<f64>,
    pub activity: Vec<bool>,
    pub channel_names: Vec<String>,
}

pub fn channel_name(k: usize) -> String {
    format!("ch_{:04}", k + 1)
}

impl RssSeries {
    pub fn new(timestamps: Vec<f64>, channels: DMatrix<f64>, activity: Vec<bool>) -> Result<Self> {
        let t = timestamps.len();
        if channels.nrows() != t || activity.len() != t {
            return Err(Error::Dimension(format!(
                "{t} timestamps, {} channel rows, {} labels",
                channels.nrows(),
                activity.len()
            )));
        }
        if let Some(i) = (1..t).find(|&i| !(timestamps[i] > timestamps[i - 1])) {
            return Err(Error::Input(format!("timestamps not strictly increasing at row {i}")));
        }
        if channels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite channel reading".into()));
        }
        let channel_names = (0..channels.ncols()).map(channel_name).collect();
        Ok(Self {
            timestamps,
            channels,
            activity,
            channel_names,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn p(&self) -> usize {
        self.channels.ncols()
    }

    pub fn inactive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.activity[i]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,label");
        for name in &self.channel_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(out, "{},{}", self.timestamps[i], u8::from(self.activity[i]));
            for v in self.channels.row(i).iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the canonical CSV layout `t,label,ch_0001,...`. With `channels`
/// set, exactly that many channel columns are required.
pub fn parse_rss(text: &str, channels: Option<usize>) -> Result<RssSeries> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"t") {
        return Err(Error::Parse {
            line: 1,
            message: "missing column 't'".into(),
        });
    }
    if cols.get(1) != Some(&"label") {
        return Err(Error::Parse {
            line: 1,
            message: "missing column 'label'".into(),
        });
    }
    let p = channels.unwrap_or(cols.len().saturating_sub(2));
    if p == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no channel columns".into(),
        });
    }
    for k in 0..p {
        let want = channel_name(k);
        if cols.get(k + 2) != Some(&want.as_str()) {
            return Err(Error::Parse {
                line: 1,
                message: format!("missing column '{want}'"),
            });
        }
    }
    if cols.len() != p + 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected column '{}'", cols[p + 2]),
        });
    }

    let mut ts = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map(|q| q.line() as usize).unwrap_or(0);
        let num = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column '{}': cannot parse '{}'", cols[k], &rec[k]),
            })
        };
        let t = num(0)?;
        if let Some(&prev) = ts.last() {
            if !(t > prev) {
                return Err(Error::Parse {
                    line,
                    message: format!("timestamp {t} does not increase"),
                });
            }
        }
        let label = match rec[1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown label '{other}'"),
                })
            }
        };
        ts.push(t);
        labels.push(label);
        for k in 0..p {
            let v = num(k + 2)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite reading in '{}'", cols[k + 2]),
                });
            }
            values.push(v);
        }
    }
    let channels = DMatrix::from_row_slice(ts.len(), p, &values);
    RssSeries::new(ts, channels, labels)
}

pub fn load_rss(path: &Path, channels: Option<usize>) -> Result<RssSeries> {
    parse_rss(&fs::read_to_string(path)?, channels)
}

pub fn save_rss(series: &RssSeries, path: &Path) -> Result<()> {
    fs::write(path, series.to_csv())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Detrend {
    ChannelMean,
    MovingAverage { window: usize },
}

impl Default for Detrend {
    fn default() -> Self {
        Detrend::ChannelMean
    }
}

pub fn detrend(series: &RssSeries, method: Detrend) -> Result<RssSeries> {
    let mut out = series.clone();
    let t = series.len();
    match method {
        Detrend::ChannelMean => {
            let idle = series.inactive_indices();
            if idle.is_empty() {
                return Err(Error::Input("no inactive time instants to estimate channel means".into()));
            }
            for k in 0..series.p() {
                let col = series.channels.column(k);
                let mean = idle.iter().map(|&i| col[i]).sum::<f64>() / idle.len() as f64;
                out.channels.column_mut(k).add_scalar_mut(-mean);
            }
        }
        Detrend::MovingAverage { window } => {
            if window % 2 == 0 {
                return Err(Error::Config(format!("moving-average window must be odd, got {window}")));
            }
            let half = window / 2;
            for k in 0..series.p() {
                let col = series.channels.column(k);
                let mut prefix = vec![0.0; t + 1];
                for i in 0..t {
                    prefix[i + 1] = prefix[i] + col[i];
                }
                for i in 0..t {
                    let lo = i.saturating_sub(half);
                    let hi = (i + half + 1).min(t);
                    let mean = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
                    out.channels[(i, k)] = col[i] - mean;
                }
            }
        }
    }
    Ok(out)
}

fn default_resamples() -> usize {
    20
}
fn default_prior() -> PriorSpec {
    PriorSpec::covariance_matched()
}
fn default_lappw_grid() -> usize {
    LAPPW_DEFAULT_GRID_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RssExperimentConfig {
    pub n: usize,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub detrend: Detrend,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "Method::default_comparison")]
    pub methods: Vec<Method>,
    #[serde(default = "default_prior")]
    pub prior: PriorSpec,
    #[serde(default = "default_lappw_grid")]
    pub lappw_grid_points: usize,
    #[serde(default)]
    pub tyler: TylerSettings,
    /// Expected channel count; any count is accepted when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
}

impl RssExperimentConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            resamples: default_resamples(),
            detrend: Detrend::ChannelMean,
            seed: 0,
            methods: Method::default_comparison(),
            prior: default_prior(),
            lappw_grid_points: LAPPW_DEFAULT_GRID_POINTS,
            tyler: TylerSettings::default(),
            channels: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.resamples == 0 {
            return Err(Error::Config("resamples must be at least 1".into()));
        }
        if cfg.methods.contains(&Method::Oracle) {
            return Err(Error::Config("the oracle method needs a known covariance".into()));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reference and test index sets for one resample.
pub fn resample_split(series: &RssSeries, n: usize, seed: u64, r: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let idle = series.inactive_indices();
    if n >= idle.len() || n < 3 {
        return Err(Error::Input(format!(
            "need 3 <= n < {} inactive instants, got n = {n}",
            idle.len()
        )));
    }
    let mut rng = substream(seed, r as u64, Role::Resample);
    let mut reference: Vec<usize> = sample(&mut rng, idle.len(), n).into_iter().map(|k| idle[k]).collect();
    reference.sort_unstable();
    let mut is_ref = vec![false; series.len()];
    for &i in &reference {
        is_ref[i] = true;
    }
    let tests = (0..series.len()).filter(|&i| !is_ref[i]).collect();
    Ok((reference, tests))
}

/// Scores for every resample; `trial` holds the resample index. The series is
/// de-trended before splitting.
pub fn rss_experiment(series: &RssSeries, cfg: &RssExperimentConfig, threads: Option<usize>) -> Result<Vec<ScoreRecord>> {
    if cfg.resamples == 0 {
        return Err(Error::Config("resamples must be at least 1".into()));
    }
    let data = detrend(series, cfg.detrend)?;
    let settings = MethodSettings {
        prior: cfg.prior,
        lappw_grid_points: cfg.lappw_grid_points,
        tyler: cfg.tyler,
    };
    let column = |i: usize| -> DVector<f64> { data.channels.row(i).transpose() };
    // fail early on a bad n rather than inside the pool
    resample_split(&data, cfg.n, cfg.seed, 0)?;

    let pool = thread_pool(threads)?;
    let per: Vec<Result<Vec<ScoreRecord>>> = pool.install(|| {
        (0..cfg.resamples)
            .into_par_iter()
            .map(|r| {
                let (reference, tests) = resample_split(&data, cfg.n, cfg.seed, r)?;
                let cols: Vec<DVector<f64>> = reference.iter().map(|&i| column(i)).collect();
                let x = DataMatrix::from_columns(&cols)?;
                let ys: Vec<DVector<f64>> = tests.iter().map(|&i| column(i)).collect();
                let (ok, failures) = score_all(&cfg.methods, &x, &settings, None, &[&ys])?;
                for (m, e) in &failures {
                    warn!("resample {r}: method {m} skipped: {e}");
                }
                let mut recs = Vec::new();
                for (m, sets) in ok {
                    for (&i, &(z, raw)) in tests.iter().zip(&sets[0]) {
                        recs.push(ScoreRecord {
                            trial: r,
                            method: m.name().to_string(),
                            label_h1: u8::from(data.activity[i]),
                            score_z: z,
                            score_raw: raw,
                        });
                    }
                }
                Ok(recs)
            })
            .collect()
    });
    let mut out = Vec::new();
    for r in per {
        out.extend(r?);
    }
    if out.is_empty() {
        return Err(Error::Numeric("every method failed in every resample".into()));
    }
    Ok(out)
}

/// Synthetic series: `p` channels of i.i.d. noise with a constant mean shift
/// of size `shift` on every active instant.
pub fn synthetic_series(t: usize, p: usize, active: &[usize], shift: f64, seed: u64) -> Result<RssSeries> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = substream(seed, 0, Role::Training);
    let mut channels = DMatrix::from_fn(t, p, |_, _| StandardNormal.sample(&mut rng));
    let mut activity = vec![false; t];
    for &i in active {
        activity[i] = true;
        channels.row_mut(i).add_scalar_mut(shift);
    }
    RssSeries::new((0..t).map(|i| i as f64).collect(), channels, activity)
}

//! Rolling-window backtests of portfolio strategies on daily return panels.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cem::{cem_optimize, CemConfig, Weights};
use crate::divergences::{mean_sd, DivergenceConfig, DivergenceKind};
use crate::error::{Error, Result};
use crate::objective::{Bandwidth, PortfolioObjective};
use crate::rng::derive_seed;
use crate::targets::TargetSpec;

/// Daily returns, one row per date and one column per asset.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnsPanel {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<String>,
    /// values[t][j] is the decimal return of asset j on dates[t].
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Percent,
    Decimal,
}

const DATE_FORMATS: [&str; 4] = ["%Y%m%d", "%Y-%m-%d", "%Y/%m/%d", "%d/%m/%Y"];

/// Missing-value sentinels used by common return libraries.
const MISSING_MARKERS: [&str; 6] = ["", "NA", "NaN", "nan", "-99.99", "-999"];

fn parse_date(s: &str, row: usize) -> Result<NaiveDate> {
    DATE_FORMATS
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(s, f).ok())
        .ok_or_else(|| Error::Parse { row, message: format!("unrecognized date {s:?}") })
}

impl ReturnsPanel {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if assets.len() < 2 {
            return Err(Error::Domain("a panel needs at least two assets".into()));
        }
        if dates.len() != values.len() {
            return Err(Error::Domain("dates and rows differ in length".into()));
        }
        for (t, row) in values.iter().enumerate() {
            if row.len() != assets.len() {
                return Err(Error::MissingCell { row: t + 1, column: row.len() + 1 });
            }
            if t > 0 && dates[t] <= dates[t - 1] {
                return Err(Error::NonMonotoneDates { row: t + 1 });
            }
        }
        Ok(Self { dates, assets, values })
    }

    /// A panel with consecutive calendar dates starting 2000-01-03.
    pub fn synthetic(values: Vec<Vec<f64>>) -> Result<Self> {
        let d = values.first().map_or(0, Vec::len);
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        let dates = (0..values.len()).map(|i| start + chrono::Days::new(i as u64)).collect();
        let assets = (1..=d).map(|j| format!("asset{j}")).collect();
        Self::new(dates, assets, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.assets.len()
    }

    pub fn rows(&self, range: Range<usize>) -> &[Vec<f64>] {
        &self.values[range]
    }

    /// Writes date,asset1,… with decimal returns and ISO dates.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.assets.iter().cloned());
        w.write_record(&header)?;
        for (date, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![date.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("panel", e))?;
        Ok(())
    }
}

/// Reads a panel from `path`; see `read_panel`.
pub fn ingest_csv(path: impl AsRef<Path>, units: Units) -> Result<ReturnsPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, units)
}

/// Parses a header row followed by `date, r₁, …, r_d` rows. Row numbers in
/// errors are 1-based file lines, the header being line 1.
pub fn read_panel<R: Read>(input: R, units: Units) -> Result<ReturnsPanel> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let assets: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_string).collect();
    let scale = match units {
        Units::Percent => 0.01,
        Units::Decimal => 1.0,
    };
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record.position().map_or(i + 2, |p| p.line() as usize);
        let date = parse_date(record.get(0).unwrap_or(""), row)?;
        let mut cells = Vec::with_capacity(assets.len());
        for column in 1..=assets.len() {
            let cell = record.get(column).unwrap_or("");
            if MISSING_MARKERS.contains(&cell) {
                return Err(Error::MissingCell { row, column: column + 1 });
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Parse { row, message: format!("column {}: {cell:?} is not a number", column + 1) })?;
            if !v.is_finite() {
                return Err(Error::MissingCell { row, column: column + 1 });
            }
            cells.push(v * scale);
        }
        if record.len() > assets.len() + 1 {
            return Err(Error::Parse { row, message: format!("{} cells for {} columns", record.len(), assets.len() + 1) });
        }
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::NonMonotoneDates { row });
            }
        }
        dates.push(date);
        values.push(cells);
    }
    ReturnsPanel::new(dates, assets, values)
}

/// What a strategy optimizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    EqualWeight {
        #[serde(default)]
        name: Option<String>,
    },
    MinVariance {
        #[serde(default)]
        name: Option<String>,
    },
    MaxSharpeBayesStein {
        #[serde(default)]
        name: Option<String>,
    },
    /// Minimum divergence to a target whose mean and standard deviation are
    /// those of the in-sample Bayes–Stein maximum Sharpe portfolio.
    Divergence {
        #[serde(default)]
        name: Option<String>,
        divergence: DivergenceConfig,
        #[serde(default)]
        bandwidth: Bandwidth,
        /// Use the configured target as given instead of retargeting it.
        #[serde(default)]
        fixed_target: bool,
    },
}

impl StrategySpec {
    pub fn name(&self) -> String {
        match self {
            StrategySpec::EqualWeight { name } => name.clone().unwrap_or_else(|| "EW".into()),
            StrategySpec::MinVariance { name } => name.clone().unwrap_or_else(|| "MV".into()),
            StrategySpec::MaxSharpeBayesStein { name } => name.clone().unwrap_or_else(|| "MSR".into()),
            StrategySpec::Divergence { name, divergence, .. } => name.clone().unwrap_or_else(|| {
                let kernel = divergence.kernel.map(|k| format!("-{}", k.name())).unwrap_or_default();
                format!("{:?}{}-{}", divergence.kind, kernel, divergence.target.name())
            }),
        }
    }

    /// The KL objective against a Gaussian target, one of the standard
    /// baselines.
    pub fn kl_gaussian() -> Self {
        StrategySpec::Divergence {
            name: Some("KL".into()),
            divergence: DivergenceConfig::new(
                DivergenceKind::KlGaussian,
                None,
                TargetSpec::Gaussian { m: 0.0, sigma: 1.0 },
            ),
            bandwidth: Bandwidth::Fixed,
            fixed_target: false,
        }
    }
}

fn default_estimation() -> usize {
    1260
}
fn default_evaluation() -> usize {
    126
}
fn default_multiplier() -> f64 {
    1.5
}
fn default_strategies() -> Vec<StrategySpec> {
    vec![
        StrategySpec::EqualWeight { name: None },
        StrategySpec::MinVariance { name: None },
        StrategySpec::MaxSharpeBayesStein { name: None },
        StrategySpec::kl_gaussian(),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    #[serde(default = "default_estimation")]
    pub estimation_window: usize,
    #[serde(default = "default_evaluation")]
    pub evaluation_window: usize,
    #[serde(default = "default_multiplier")]
    pub regime_multiplier: f64,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategySpec>,
    #[serde(default)]
    pub cem: CemConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            estimation_window: default_estimation(),
            evaluation_window: default_evaluation(),
            regime_multiplier: default_multiplier(),
            strategies: default_strategies(),
            cem: CemConfig::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.evaluation_window < 20 || self.estimation_window < self.evaluation_window {
            return Err(Error::Domain(format!(
                "windows must satisfy estimation ≥ evaluation ≥ 20, got {}/{}",
                self.estimation_window, self.evaluation_window
            )));
        }
        crate::error::positive("regime_multiplier", self.regime_multiplier)?;
        if self.strategies.is_empty() {
            return Err(Error::Domain("no strategies configured".into()));
        }
        for s in &self.strategies {
            if let StrategySpec::Divergence { divergence, .. } = s {
                divergence.validate()?;
            }
        }
        Ok(())
    }
}

/// Estimation and evaluation row ranges of one rebalancing period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bucket {
    pub index: usize,
    pub estimation: Range<usize>,
    pub evaluation: Range<usize>,
}

/// ⌊(T − E)/V⌋ consecutive evaluation windows of length V, each preceded by
/// the trailing E rows.
pub fn make_buckets(len: usize, estimation: usize, evaluation: usize) -> Result<Vec<Bucket>> {
    let needed = estimation + evaluation;
    if len < needed || evaluation == 0 {
        return Err(Error::PanelTooShort { len, needed });
    }
    Ok((0..(len - estimation) / evaluation)
        .map(|i| {
            let start = estimation + i * evaluation;
            Bucket { index: i, estimation: start - estimation..start, evaluation: start..start + evaluation }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    LowVol,
    HighVol,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::LowVol => "LOW_VOL",
            Regime::HighVol => "HIGH_VOL",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LOW_VOL" => Ok(Regime::LowVol),
            "HIGH_VOL" => Ok(Regime::HighVol),
            other => Err(Error::Domain(format!("unknown regime {other:?}"))),
        }
    }
}

/// Mean over assets of the per-asset sample variance.
pub fn average_variance(rows: &[Vec<f64>]) -> f64 {
    let d = rows[0].len();
    let n = rows.len() as f64;
    (0..d)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .sum::<f64>()
        / d as f64
}

/// HIGH_VOL when the evaluation window's average variance exceeds
/// `multiplier` times the whole panel's.
pub fn label_regimes(panel: &ReturnsPanel, buckets: &[Bucket], multiplier: f64) -> Vec<Regime> {
    let global = average_variance(&panel.values);
    buckets
        .iter()
        .map(|b| {
            if average_variance(panel.rows(b.evaluation.clone())) > multiplier * global {
                Regime::HighVol
            } else {
                Regime::LowVol
            }
        })
        .collect()
}

fn sample_moments(rows: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let t = rows.len();
    if t < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: t });
    }
    let d = rows[0].len();
    let x = DMatrix::from_fn(t, d, |i, j| rows[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
    let centred = DMatrix::from_fn(t, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (t as f64 - 1.0);
    Ok((mean, cov))
}

const RIDGE: f64 = 1e-8;

/// Σ⁻¹b through Cholesky, retrying once with a 10⁻⁸ ridge.
fn solve_covariance(cov: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = cov.clone().cholesky().or_else(|| {
        let d = cov.nrows();
        (cov + DMatrix::identity(d, d) * RIDGE).cholesky()
    });
    let chol = chol.ok_or(Error::SingularCovariance)?;
    let x = chol.solve(rhs);
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularCovariance)
    }
}

fn normalized(v: DVector<f64>) -> Result<Weights> {
    let total: f64 = v.iter().sum();
    if !(total.abs() > 1e-300) || !total.is_finite() {
        return Err(Error::Infeasible("weights cannot be normalized to sum one".into()));
    }
    let free: Vec<f64> = v.iter().take(v.len() - 1).map(|x| x / total).collect();
    Ok(Weights::from_free(&free))
}

/// w ∝ Σ̂⁻¹1.
pub fn min_variance_weights(rows: &[Vec<f64>]) -> Result<Weights> {
    let (_, cov) = sample_moments(rows)?;
    let ones = DVector::from_element(cov.nrows(), 1.0);
    normalized(solve_covariance(&cov, &ones)?)
}

/// Bayes–Stein shrinkage of the sample mean toward the minimum-variance
/// portfolio's mean μ₀: φ = (d+2)/((d+2) + T(μ̂ − μ₀1)ᵀS⁻¹(μ̂ − μ₀1)) with
/// S = Σ̂(T−1)/(T−d−2).
#[derive(Clone, Debug, PartialEq)]
pub struct BayesStein {
    pub intensity: f64,
    pub shrunk_mean: Vec<f64>,
    pub grand_mean: f64,
}

pub fn bayes_stein(rows: &[Vec<f64>]) -> Result<BayesStein> {
    let (mean, cov) = sample_moments(rows)?;
    let t = rows.len() as f64;
    let d = mean.len() as f64;
    if t <= d + 2.0 {
        return Err(Error::InsufficientSamples { needed: mean.len() + 3, got: rows.len() });
    }
    let s = &cov * ((t - 1.0) / (t - d - 2.0));
    let ones = DVector::from_element(mean.len(), 1.0);
    let s_inv_one = solve_covariance(&s, &ones)?;
    let mu0 = s_inv_one.dot(&mean) / s_inv_one.sum();
    let gap = &mean - &ones * mu0;
    let quad = gap.dot(&solve_covariance(&s, &gap)?);
    let intensity = (d + 2.0) / ((d + 2.0) + t * quad);
    let shrunk = &mean * (1.0 - intensity) + &ones * (intensity * mu0);
    Ok(BayesStein { intensity, shrunk_mean: shrunk.iter().copied().collect(), grand_mean: mu0 })
}

/// Tangency direction Σ̂⁻¹μ normalized to sum one, with μ the Bayes–Stein mean
/// or, given `intensity`, the mean shrunk by that fixed amount.
pub fn max_sharpe_weights(rows: &[Vec<f64>], intensity: Option<f64>) -> Result<Weights> {
    let (mean, cov) = sample_moments(rows)?;
    let mu = match intensity {
        None => DVector::from_vec(bayes_stein(rows)?.shrunk_mean),
        Some(phi) => {
            let ones = DVector::from_element(mean.len(), 1.0);
            let s_inv_one = solve_covariance(&cov, &ones)?;
            let mu0 = s_inv_one.dot(&mean) / s_inv_one.sum();
            &mean * (1.0 - phi) + ones * (phi * mu0)
        }
    };
    normalized(solve_covariance(&cov, &mu)?)
}

pub fn max_sharpe_bayes_stein_weights(rows: &[Vec<f64>]) -> Result<Weights> {
    max_sharpe_weights(rows, None)
}

/// Standardized third moment with 1/N central moments.
pub fn skewness(xs: &[f64]) -> f64 {
    let (m2, m3, _) = central_moments(xs);
    m3 / m2.powf(1.5)
}

/// Standardized fourth moment minus 3, with 1/N central moments.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let (m2, _, m4) = central_moments(xs);
    m4 / (m2 * m2) - 3.0
}

fn central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketResult {
    pub bucket: usize,
    pub strategy: String,
    pub regime: Regime,
    pub oos_skewness: f64,
    pub oos_excess_kurtosis: f64,
    pub weights: Vec<f64>,
}

/// Weights of one strategy fitted on `rows`.
pub fn fit_strategy(strategy: &StrategySpec, rows: &[Vec<f64>], cem: &CemConfig, seed: u64) -> Result<Weights> {
    let d = rows[0].len();
    match strategy {
        StrategySpec::EqualWeight { .. } => Ok(Weights::equal(d)),
        StrategySpec::MinVariance { .. } => min_variance_weights(rows),
        StrategySpec::MaxSharpeBayesStein { .. } => max_sharpe_bayes_stein_weights(rows),
        StrategySpec::Divergence { divergence, bandwidth, fixed_target, .. } => {
            let mut divergence = divergence.clone();
            if !fixed_target {
                let msr = max_sharpe_bayes_stein_weights(rows)?;
                let (m, sd) = mean_sd(&msr.apply(rows));
                divergence.target = divergence.target.with_mean_sd(m, sd)?;
            }
            let objective = PortfolioObjective::new(rows.to_vec(), divergence, *bandwidth, seed)?;
            let cfg = CemConfig { seed, ..cem.clone() };
            Ok(cem_optimize(|w| objective.score(w), d, &cfg)?.weights)
        }
    }
}

/// Fits every strategy on each bucket's estimation window and records the
/// out-of-sample moments of the frozen portfolio on the evaluation window.
pub fn run_backtest(panel: &ReturnsPanel, cfg: &BacktestConfig) -> Result<Vec<BucketResult>> {
    cfg.validate()?;
    let buckets = make_buckets(panel.len(), cfg.estimation_window, cfg.evaluation_window)?;
    let regimes = label_regimes(panel, &buckets, cfg.regime_multiplier);
    let per_bucket: Vec<Vec<BucketResult>> = buckets
        .par_iter()
        .zip(&regimes)
        .map(|(b, &regime)| {
            let est = panel.rows(b.estimation.clone());
            let eval = panel.rows(b.evaluation.clone());
            // shared by all strategies so identical strategies give identical weights
            let seed = derive_seed(cfg.cem.seed, &[b.index as u64]);
            cfg.strategies
                .iter()
                .map(|s| {
                    let w = fit_strategy(s, est, &cfg.cem, seed)?;
                    let oos = w.apply(eval);
                    Ok(BucketResult {
                        bucket: b.index,
                        strategy: s.name(),
                        regime,
                        oos_skewness: skewness(&oos),
                        oos_excess_kurtosis: excess_kurtosis(&oos),
                        weights: w.into_vec(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_bucket.into_iter().flatten().collect())
}

/// Rows of bucket, strategy, regime, skewness, kurtosis, w_1, …, w_d.
pub fn write_results_csv<W: Write>(results: &[BucketResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = results.first().map_or(0, |r| r.weights.len());
    let mut header: Vec<String> =
        ["bucket", "strategy", "regime", "skewness", "kurtosis"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=d).map(|j| format!("w_{j}")));
    w.write_record(&header)?;
    for r in results {
        let mut rec = vec![
            r.bucket.to_string(),
            r.strategy.clone(),
            r.regime.as_str().to_string(),
            r.oos_skewness.to_string(),
            r.oos_excess_kurtosis.to_string(),
        ];
        rec.extend(r.weights.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("results", e))?;
    Ok(())
}

pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<BucketResult>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { row, message: format!("column {} is not a number", j + 1) })
        };
        out.push(BucketResult {
            bucket: num(0)? as usize,
            strategy: rec.get(1).unwrap_or_default().to_string(),
            regime: rec.get(2).unwrap_or_default().parse()?,
            oos_skewness: num(3)?,
            oos_excess_kurtosis: num(4)?,
            weights: (5..rec.len()).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Criterion {
    MinKurtosis,
    MaxSkewness,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinnerCount {
    pub strategy: String,
    pub wins: usize,
}

/// Buckets won by each strategy under `criterion`, restricted to buckets of
/// `regime` when given. Ties credit every tied strategy. Sorted by wins, then
/// by first appearance.
pub fn winner_counts(results: &[BucketResult], criterion: Criterion, regime: Option<Regime>) -> Vec<WinnerCount> {
    let mut order: Vec<String> = Vec::new();
    let mut by_bucket: BTreeMap<usize, Vec<&BucketResult>> = BTreeMap::new();
    for r in results {
        if !order.contains(&r.strategy) {
            order.push(r.strategy.clone());
        }
        if regime.is_none_or(|g| g == r.regime) {
            by_bucket.entry(r.bucket).or_default().push(r);
        }
    }
    let mut wins = vec![0usize; order.len()];
    let key = |r: &BucketResult| match criterion {
        Criterion::MinKurtosis => -r.oos_excess_kurtosis,
        Criterion::MaxSkewness => r.oos_skewness,
    };
    for rows in by_bucket.values() {
        let best = rows.iter().map(|r| key(r)).fold(f64::NEG_INFINITY, f64::max);
        for r in rows.iter().filter(|r| key(r) == best) {
            let i = order.iter().position(|s| *s == r.strategy).expect("strategy indexed");
            wins[i] += 1;
        }
    }
    let mut counts: Vec<WinnerCount> = order
        .into_iter()
        .zip(wins)
        .map(|(strategy, wins)| WinnerCount { strategy, wins })
        .collect();
    counts.sort_by(|a, b| b.wins.cmp(&a.wins));
    counts
}

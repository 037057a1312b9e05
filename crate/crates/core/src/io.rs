//! Data ingestion and report emission.
//!
//! Inputs are comma-separated with a header row:
//! - prices: `date,price` or `date,open,close` (the two are averaged);
//! - returns: a column named `r` or `return`, optionally `date`.
//!
//! Quantiles use linear interpolation between order statistics: for sorted
//! `x_1..x_n` the `p`-quantile is `x_{1+h}` interpolated at `h = (n-1) p`.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gibbs::{PgConfig, PosteriorSample};
use crate::model::{emit_return, Observations, Trajectory};
use crate::stable::StableParams;
use crate::stats;

pub const LOWER_Q: f64 = 0.025;
pub const UPPER_Q: f64 = 0.975;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<String>,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<String>, prices: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() {
            return domain("dates and prices differ in length");
        }
        if prices.len() < 2 {
            return domain("need at least two prices");
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return domain(format!("price must be positive, got {p}"));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return domain(format!("dates not strictly increasing at {}", w[1]));
        }
        Ok(Self { dates, prices })
    }
}

/// Returns and, when the source carried them, the date of each return.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub dates: Vec<String>,
    pub returns: Observations,
}

impl ReturnSeries {
    pub fn date(&self, t: usize) -> &str {
        self.dates.get(t).map(String::as_str).unwrap_or("")
    }
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b[..10]
            .iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
}

struct Table {
    path: String,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(text: &str, path: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| perr(1, e.to_string()))?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        if header.iter().all(String::is_empty) {
            return Err(perr(1, "missing header row".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                perr(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.iter().all(str::is_empty) {
                continue;
            }
            if rec.len() != header.len() {
                return Err(perr(
                    line,
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self {
            path: path.to_string(),
            header,
            rows,
        })
    }

    fn col(&self, names: &[&str]) -> Option<usize> {
        self.header.iter().position(|h| names.contains(&h.as_str()))
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn num(&self, line: usize, field: &str, what: &str) -> Result<f64> {
        field
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.err(line, format!("invalid {what} {field:?}")))
    }
}

pub fn parse_prices(text: &str, path: &str) -> Result<PriceSeries> {
    let tab = Table::read(text, path)?;
    let date_col = tab
        .col(&["date"])
        .ok_or_else(|| tab.err(1, "header must contain a date column"))?;
    enum Src {
        Price(usize),
        OpenClose(usize, usize),
    }
    let src = match (tab.col(&["open"]), tab.col(&["close"]), tab.col(&["price"])) {
        (_, _, Some(p)) => Src::Price(p),
        (Some(o), Some(c), None) => Src::OpenClose(o, c),
        _ => return Err(tab.err(1, "header must contain price, or open and close")),
    };
    let mut dates: Vec<String> = Vec::with_capacity(tab.rows.len());
    let mut prices = Vec::with_capacity(tab.rows.len());
    for (line, row) in &tab.rows {
        let date = &row[date_col];
        if !is_iso_date(date) {
            return Err(tab.err(*line, format!("date {date:?} is not YYYY-MM-DD")));
        }
        if let Some(prev) = dates.last() {
            if prev.as_str() >= date.as_str() {
                return Err(tab.err(*line, format!("date {date} does not follow {prev}")));
            }
        }
        let price = match src {
            Src::Price(p) => tab.num(*line, &row[p], "price")?,
            Src::OpenClose(o, c) => 0.5 * (tab.num(*line, &row[o], "open")? + tab.num(*line, &row[c], "close")?),
        };
        if price <= 0.0 {
            return Err(tab.err(*line, format!("price must be positive, got {price}")));
        }
        dates.push(date.clone());
        prices.push(price);
    }
    if prices.len() < 2 {
        return Err(tab.err(tab.rows.last().map_or(1, |r| r.0), "need at least two prices"));
    }
    PriceSeries::new(dates, prices)
}

pub fn load_prices(path: &Path) -> Result<PriceSeries> {
    parse_prices(&fs::read_to_string(path)?, &path.display().to_string())
}

/// Log returns `r_t = ln P_t - ln P_{t-1}`, dated by `P_t`.
pub fn to_returns(p: &PriceSeries) -> Result<ReturnSeries> {
    let r = p.prices.windows(2).map(|w| w[1].ln() - w[0].ln()).collect();
    Ok(ReturnSeries {
        dates: p.dates[1..].to_vec(),
        returns: Observations::new(r)?,
    })
}

/// Reads a returns file. Rows whose return field is empty are skipped, which
/// admits the `t = 0` row of simulated data.
pub fn parse_returns(text: &str, path: &str) -> Result<ReturnSeries> {
    let tab = Table::read(text, path)?;
    let r_col = tab
        .col(&["r", "return", "returns"])
        .ok_or_else(|| tab.err(1, "header must contain an r or return column"))?;
    let date_col = tab.col(&["date"]);
    let mut dates = Vec::new();
    let mut r = Vec::new();
    for (line, row) in &tab.rows {
        if row[r_col].is_empty() {
            continue;
        }
        r.push(tab.num(*line, &row[r_col], "return")?);
        if let Some(c) = date_col {
            dates.push(row[c].clone());
        }
    }
    if r.is_empty() {
        return Err(tab.err(1, "no returns found"));
    }
    if dates.iter().all(String::is_empty) {
        dates.clear();
    }
    Ok(ReturnSeries {
        dates,
        returns: Observations::new(r)?,
    })
}

/// Loads either a price file (header has `price` or `open`/`close`) or a
/// returns file.
pub fn load_series(path: &Path) -> Result<ReturnSeries> {
    let text = fs::read_to_string(path)?;
    let name = path.display().to_string();
    let header = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .unwrap_or("")
        .to_ascii_lowercase();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.contains(&"price") || (cols.contains(&"open") && cols.contains(&"close")) {
        to_returns(&parse_prices(&text, &name)?)
    } else {
        parse_returns(&text, &name)
    }
}

/// `t,r,h` with `t = 0..=T`; the `t = 0` row has an empty `r`.
pub fn simulation_csv(path: &Trajectory, r: &Observations) -> String {
    let mut s = String::from("t,r,h\n");
    for (t, h) in path.h.iter().enumerate() {
        let rt = if t == 0 { String::new() } else { r.r[t - 1].to_string() };
        s.push_str(&format!("{t},{rt},{h}\n"));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub est: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Mean and central 95% interval of a set of draws.
pub fn summarize_draws(xs: &[f64]) -> Result<Interval> {
    if xs.len() < 2 {
        return domain("need at least two draws to summarize");
    }
    let s = stats::sorted(xs);
    Ok(Interval {
        est: stats::mean(xs),
        lo: stats::quantile_sorted(&s, LOWER_Q),
        hi: stats::quantile_sorted(&s, UPPER_Q),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub tau: Interval,
    pub phi: Interval,
    pub sigma2: Interval,
}

pub fn summarize(samples: &PosteriorSample) -> Result<ParameterSummary> {
    let col = |f: fn(&crate::model::SvmParams) -> f64| samples.theta_draws.iter().map(f).collect::<Vec<_>>();
    Ok(ParameterSummary {
        tau: summarize_draws(&col(|p| p.tau))?,
        phi: summarize_draws(&col(|p| p.phi))?,
        sigma2: summarize_draws(&col(|p| p.sigma2))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilityBand {
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnBand {
    pub lower: f64,
    pub upper: f64,
}

fn check_draws(trajectories: &[Trajectory]) -> Result<usize> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Domain("no stored trajectories".into()))?;
    let t_len = first.len_t();
    if trajectories.iter().any(|tr| tr.len_t() != t_len) {
        return domain("stored trajectories differ in length");
    }
    Ok(t_len)
}

/// Posterior mean and 95% band of `h_t` for `t = 1..=T`.
pub fn volatility_bands(trajectories: &[Trajectory]) -> Result<Vec<VolatilityBand>> {
    let t_len = check_draws(trajectories)?;
    let mut col = vec![0.0; trajectories.len()];
    (1..=t_len)
        .map(|t| {
            for (c, tr) in col.iter_mut().zip(trajectories) {
                *c = tr.h[t];
            }
            let s = stats::sorted(&col);
            Ok(VolatilityBand {
                lower: stats::quantile_sorted(&s, LOWER_Q),
                mean: stats::mean(&col),
                upper: stats::quantile_sorted(&s, UPPER_Q),
            })
        })
        .collect()
}

/// Posterior-predictive 95% return band for `t = 1..=T`: one emitted return
/// per stored `h_t` draw, pooled.
pub fn predictive_bands<R: Rng + ?Sized>(
    trajectories: &[Trajectory],
    stable: &StableParams,
    rng: &mut R,
) -> Result<Vec<ReturnBand>> {
    let t_len = check_draws(trajectories)?;
    let sampler = stable.sampler()?;
    let mut col = vec![0.0; trajectories.len()];
    let mut out = Vec::with_capacity(t_len);
    for t in 1..=t_len {
        for (c, tr) in col.iter_mut().zip(trajectories) {
            *c = emit_return(tr.h[t], &sampler, rng);
        }
        col.sort_by(f64::total_cmp);
        out.push(ReturnBand {
            lower: stats::quantile_sorted(&col, LOWER_Q),
            upper: stats::quantile_sorted(&col, UPPER_Q),
        });
    }
    Ok(out)
}

pub fn volatility_csv(bands: &[VolatilityBand], series: &ReturnSeries) -> String {
    let mut s = String::from("t,date,lower,mean,upper\n");
    for (i, b) in bands.iter().enumerate() {
        s.push_str(&format!("{},{},{},{},{}\n", i + 1, series.date(i), b.lower, b.mean, b.upper));
    }
    s
}

pub fn predictive_csv(bands: &[ReturnBand], series: &ReturnSeries) -> String {
    let mut s = String::from("t,date,lower,upper\n");
    for (i, b) in bands.iter().enumerate() {
        s.push_str(&format!("{},{},{},{}\n", i + 1, series.date(i), b.lower, b.upper));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub tau: Interval,
    pub phi: Interval,
    pub sigma2: Interval,
    pub config: PgConfig,
    pub seed: u64,
    pub n_observations: usize,
    pub n_draws: usize,
}

impl FitReport {
    pub fn new(summary: ParameterSummary, config: &PgConfig, n_observations: usize, n_draws: usize) -> Self {
        Self {
            tau: summary.tau,
            phi: summary.phi,
            sigma2: summary.sigma2,
            config: config.clone(),
            seed: config.seed,
            n_observations,
            n_draws,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SvmParams;
    use crate::seed::rng_from_seed;

    fn prices(text: &str) -> Result<PriceSeries> {
        parse_prices(text, "p.csv")
    }

    fn parse_line(e: Error) -> usize {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn returns_from_prices() {
        let p = prices(&format!("date,price\n2008-01-02,1\n2008-01-03,{}\n", std::f64::consts::E)).unwrap();
        let r = to_returns(&p).unwrap();
        assert!((r.returns.r[0] - 1.0).abs() < 1e-15);
        assert_eq!(r.dates, vec!["2008-01-03"]);

        let p = prices("date,price\n2008-01-02,5\n2008-01-03,5\n2008-01-04,5\n").unwrap();
        assert_eq!(to_returns(&p).unwrap().returns.r, vec![0.0, 0.0]);

        let p = prices("date,price\n2008-01-02,100\n2008-01-03,110\n2008-01-04,99\n").unwrap();
        let r = to_returns(&p).unwrap().returns.r;
        assert!((r[0] - 0.09531).abs() < 1e-5);
        assert!((r[1] + 0.10536).abs() < 1e-5);
    }

    #[test]
    fn open_close_is_averaged() {
        let p = prices("Date,Open,High,Low,Close\n2008-01-02,1,9,0.5,3\n2008-01-03,4,9,1,4\n").unwrap();
        assert_eq!(p.prices, vec![2.0, 4.0]);
    }

    #[test]
    fn price_errors_name_the_line() {
        assert_eq!(parse_line(prices("date,price\n2008-01-02,1\n2008-01-03,0\n").unwrap_err()), 3);
        assert_eq!(parse_line(prices("date,price\n2008-01-02,1\n2008-01-03,-2\n").unwrap_err()), 3);
        assert_eq!(
            parse_line(prices("date,price\n2008-01-03,1\n2008-01-02,2\n").unwrap_err()),
            3
        );
        assert_eq!(parse_line(prices("date,price\n2008-01-02,1\n2008-01-03\n").unwrap_err()), 3);
        assert_eq!(
            parse_line(prices("date,price\n2008-01-02,1\n2008-01-03,1\n2008-01-04,abc\n").unwrap_err()),
            4
        );
        assert_eq!(parse_line(prices("date,price\nJan 2,1\n2008-01-03,1\n").unwrap_err()), 2);
        assert!(prices("date,price\n2008-01-02,1\n").is_err());
        assert!(prices("when,value\n2008-01-02,1\n2008-01-03,1\n").is_err());
    }

    #[test]
    fn simulation_csv_round_trip() {
        let theta = SvmParams::new(-0.8, 0.9, 0.45).unwrap();
        let stable = StableParams::standard(1.75, 0.1).unwrap();
        let mut rng = rng_from_seed(4);
        let (path, obs) = crate::model::simulate(&theta, &stable, 60, &mut rng).unwrap();
        let text = simulation_csv(&path, &obs);
        assert_eq!(text.lines().next(), Some("t,r,h"));
        assert_eq!(text.lines().count(), 62);
        let back = parse_returns(&text, "sim.csv").unwrap();
        assert_eq!(back.returns, obs);
        assert!(back.dates.is_empty());
    }

    #[test]
    fn returns_file_with_dates() {
        let s = parse_returns("date,return\n2008-01-02,0.01\n2008-01-03,-0.02\n", "r.csv").unwrap();
        assert_eq!(s.returns.r, vec![0.01, -0.02]);
        assert_eq!(s.date(1), "2008-01-03");
        assert_eq!(parse_line(parse_returns("t,r\n1,0.1\n2,x\n", "r.csv").unwrap_err()), 3);
    }

    #[test]
    fn summarize_examples() {
        let c = summarize_draws(&[0.7; 50]).unwrap();
        assert_eq!((c.est, c.lo, c.hi), (0.7, 0.7, 0.7));

        let xs: Vec<f64> = (1..=10000).map(f64::from).collect();
        let s = summarize_draws(&xs).unwrap();
        assert!((s.est - 5000.5).abs() < 1e-9);
        assert!((s.lo - 250.975).abs() < 1e-9);
        assert!((s.hi - 9750.025).abs() < 1e-9);

        let mut rev = xs.clone();
        rev.reverse();
        assert_eq!(summarize_draws(&rev).unwrap().lo, s.lo);
        assert!(summarize_draws(&[1.0]).is_err());
    }

    #[test]
    fn summary_of_posterior_is_ordered() {
        let draws: Vec<SvmParams> = (0..200)
            .map(|i| SvmParams::new(-1.0 + 0.001 * i as f64, 0.9 + 0.0001 * i as f64, 0.1 + 0.002 * i as f64).unwrap())
            .collect();
        let s = summarize(&PosteriorSample {
            theta_draws: draws,
            trajectory_draws: vec![],
        })
        .unwrap();
        for iv in [s.tau, s.phi, s.sigma2] {
            assert!(iv.lo <= iv.est && iv.est <= iv.hi);
        }
    }

    fn const_paths(h: f64, n: usize, t_len: usize) -> Vec<Trajectory> {
        (0..n).map(|_| Trajectory::from_h(vec![h; t_len + 1]).unwrap()).collect()
    }

    #[test]
    fn gaussian_predictive_band() {
        let h = 0.04;
        let gauss = StableParams::standard(2.0, 0.0).unwrap();
        let mut rng = rng_from_seed(8);
        let bands = predictive_bands(&const_paths(h, 200_000, 1), &gauss, &mut rng).unwrap();
        let half = 1.959964 * (2.0 * h).sqrt();
        assert!((bands[0].upper - half).abs() < 0.01 * half, "{:?}", bands[0]);
        assert!((bands[0].lower + half).abs() < 0.01 * half);
    }

    #[test]
    fn predictive_band_widens_with_volatility() {
        let st = StableParams::standard(1.75, 0.1).unwrap();
        let narrow = predictive_bands(&const_paths(0.01, 20_000, 3), &st, &mut rng_from_seed(1)).unwrap();
        let wide = predictive_bands(&const_paths(0.04, 20_000, 3), &st, &mut rng_from_seed(2)).unwrap();
        for (n, w) in narrow.iter().zip(&wide) {
            assert!(w.upper > n.upper && w.lower < n.lower);
        }
        let flat: Vec<Trajectory> = (0..100)
            .map(|_| Trajectory {
                h: vec![0.0; 3],
                u: vec![],
            })
            .collect();
        let zero = predictive_bands(&flat, &st, &mut rng_from_seed(3)).unwrap();
        assert!(zero.iter().all(|b| b.lower == 0.0 && b.upper == 0.0));
        assert!(predictive_bands(&[], &st, &mut rng_from_seed(3)).is_err());
    }

    #[test]
    fn volatility_bands_bracket_mean() {
        let paths: Vec<Trajectory> = (1..=100)
            .map(|i| Trajectory::from_h(vec![0.001 * i as f64; 5]).unwrap())
            .collect();
        let b = volatility_bands(&paths).unwrap();
        assert_eq!(b.len(), 4);
        for v in &b {
            assert!(v.lower <= v.mean && v.mean <= v.upper);
            assert!((v.mean - 0.0505).abs() < 1e-12);
        }
        let series = ReturnSeries {
            dates: vec![],
            returns: Observations::new(vec![0.0; 4]).unwrap(),
        };
        let csv = volatility_csv(&b, &series);
        assert!(csv.starts_with("t,date,lower,mean,upper\n1,,"));
    }
}

//! The `analyze` command: dynamics classification, lag, orbit and trait
//! trends of a population CSV, written as a JSON report plus SVG charts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use predprey_core::analysis::{
    classify_detailed, lag_report, phase_orbit_trend, trait_trend, AcfResult, LagReport, OrbitTrend, PopulationSeries,
    Thresholds, TrendReport,
};
use predprey_core::rng::{stream, Stream};
use serde::{Deserialize, Serialize};

use crate::config::AnalysisSettings;
use crate::svg::{chart, Line};
use crate::telemetry::read_population;
use crate::CliError;

pub const REPORT_SCHEMA: &str = "predprey.report/1";
pub const INCONCLUSIVE: &str = "Inconclusive";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcfSet {
    pub predator: AcfResult,
    pub prey: AcfResult,
    pub combined: AcfResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub source: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub rows: usize,
    /// Index of the first row analysed; earlier rows are burn-in.
    pub analysed_from: usize,
    pub max_lag: usize,
    /// A dynamics class name or `Inconclusive`.
    pub class: String,
    pub reason: Option<String>,
    pub cv2_predator: Option<f64>,
    pub cv2_prey: Option<f64>,
    pub acf: Option<AcfSet>,
    pub orbit: Option<OrbitTrend>,
    pub lag: Option<LagReport>,
    /// Slope and permutation p-value of every trait column that has data.
    pub trait_trends: BTreeMap<String, TrendReport>,
    pub thresholds: Thresholds,
    pub warnings: Vec<String>,
}

/// Paths written for one analysed CSV.
#[derive(Clone, Debug)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub population_svg: PathBuf,
    pub phase_svg: PathBuf,
    pub acf_svg: PathBuf,
}

impl ReportFiles {
    pub fn for_csv(csv: &Path, out: Option<&Path>) -> ReportFiles {
        let dir = out.map(Path::to_path_buf).unwrap_or_else(|| csv.parent().map(Path::to_path_buf).unwrap_or_default());
        let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "population".into());
        let f = |suffix: &str| dir.join(format!("{stem}-{suffix}"));
        ReportFiles {
            json: f("report.json"),
            population_svg: f("population.svg"),
            phase_svg: f("phase.svg"),
            acf_svg: f("acf.svg"),
        }
    }
}

/// Analyses a parsed series. Never fails: anything that prevents a
/// classification is reported as `Inconclusive` with a reason.
pub fn analyse(series: &PopulationSeries, settings: &AnalysisSettings, seed: Option<u64>) -> Report {
    let rows = series.len();
    let from = ((rows as f64) * settings.burn_in).floor() as usize;
    let s = series.tail(from);
    let n = s.len();
    let mut th = settings.thresholds;
    if th.max_lag == 0 {
        th.max_lag = n / 4;
    }
    let mut report = Report {
        schema: REPORT_SCHEMA.into(),
        source: String::new(),
        config_hash: None,
        seed,
        rows,
        analysed_from: from,
        max_lag: th.max_lag,
        class: INCONCLUSIVE.into(),
        reason: None,
        cv2_predator: None,
        cv2_prey: None,
        acf: None,
        orbit: None,
        lag: None,
        trait_trends: BTreeMap::new(),
        thresholds: th,
        warnings: Vec::new(),
    };
    if rows == 0 {
        report.reason = Some("no data rows".into());
        report.warnings.push("population file holds no data rows".into());
        return report;
    }
    if let Err(e) = s.validate() {
        report.reason = Some(e.to_string());
        return report;
    }
    for (name, col) in [("predator", &s.n_pred), ("prey", &s.n_prey)] {
        if let Some(k) = col.iter().position(|&v| v == 0.0) {
            report.warnings.push(format!("{name} extinct at tick {}", s.ticks[k]));
        }
    }
    if th.max_lag == 0 {
        report.reason = Some(format!("{n} analysed rows are too few"));
    } else {
        match classify_detailed(&s.n_pred, &s.n_prey, &th) {
            Ok(c) => {
                report.class = format!("{:?}", c.class);
                report.cv2_predator = Some(c.cv2_pred);
                report.cv2_prey = Some(c.cv2_prey);
                report.acf = Some(AcfSet { predator: c.pred, prey: c.prey, combined: c.combined });
            }
            Err(e) => report.reason = Some(e.to_string()),
        }
    }
    match lag_report(&s.n_pred, &s.n_prey) {
        Ok(l) => report.lag = Some(l),
        Err(e) => report.warnings.push(format!("lag: {e}")),
    }
    match phase_orbit_trend(&s.n_pred, &s.n_prey) {
        Ok(o) => report.orbit = Some(o),
        Err(e) => report.warnings.push(format!("orbit: {e}")),
    }
    let mut rng = stream(seed.unwrap_or(0), Stream::Analysis);
    let traits = [
        ("mean_attack", &s.mean_attack),
        ("mean_resilience", &s.mean_resilience),
        ("mean_speed_pred", &s.mean_speed_pred),
        ("mean_speed_prey", &s.mean_speed_prey),
    ];
    for (name, col) in traits {
        let mut finite = col.iter().filter(|v| v.is_finite());
        let Some(first) = finite.next() else { continue };
        // Traits are fixed outside the evolving scenario.
        if finite.all(|v| v == first) {
            continue;
        }
        let t = trait_trend(col, settings.trend_window, &mut rng);
        if t.slope.is_finite() {
            report.trait_trends.insert(name.into(), t);
        } else {
            report.warnings.push(format!("{name}: too few blocks for a trend"));
        }
    }
    report
}

fn write(path: &Path, text: &[u8]) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Reads `csv`, writes the report and charts next to it (or into `out`) and
/// returns the report. Malformed CSVs are input errors.
pub fn analyze_file(csv: &Path, settings: &AnalysisSettings, out: Option<&Path>) -> Result<(Report, ReportFiles), CliError> {
    let (meta, series) = read_population(csv)?;
    let mut report = analyse(&series, settings, meta.seed);
    report.source = csv.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    report.config_hash = meta.config_hash;
    if meta.seed.is_none() {
        report.warnings.push("no seed in file; trait trends use seed 0".into());
    }
    for w in &report.warnings {
        warn!("{}: {w}", csv.display());
    }
    let files = ReportFiles::for_csv(csv, out);
    if let Some(dir) = files.json.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    json.push(b'\n');
    write(&files.json, &json)?;

    let t: Vec<f64> = series.ticks.iter().map(|&v| v as f64).collect();
    let pop = chart(
        "Population",
        "tick",
        "agents",
        &[
            Line { label: "predator", colour: "#c0392b", x: &t, y: &series.n_pred },
            Line { label: "prey", colour: "#2471a3", x: &t, y: &series.n_prey },
        ],
    );
    write(&files.population_svg, pop.as_bytes())?;
    let from = report.analysed_from.min(series.len());
    let phase = chart(
        "Phase portrait",
        "prey",
        "predator",
        &[Line { label: "orbit", colour: "#1e8449", x: &series.n_prey[from..], y: &series.n_pred[from..] }],
    );
    write(&files.phase_svg, phase.as_bytes())?;
    let empty = AcfResult { acf: Vec::new(), side_peaks: Vec::new(), first_side_peak: None, envelope_decay: None, constant: true };
    let set = report.acf.as_ref();
    let (a, b, c) = set.map_or((&empty, &empty, &empty), |s| (&s.predator, &s.prey, &s.combined));
    let lags = |r: &AcfResult| (0..r.acf.len()).map(|k| k as f64).collect::<Vec<_>>();
    let (la, lb, lc) = (lags(a), lags(b), lags(c));
    let acf_svg = chart(
        &format!("Autocorrelation ({})", report.class),
        "lag",
        "acf",
        &[
            Line { label: "predator", colour: "#c0392b", x: &la, y: &a.acf },
            Line { label: "prey", colour: "#2471a3", x: &lb, y: &b.acf },
            Line { label: "mean", colour: "black", x: &lc, y: &c.acf },
        ],
    );
    write(&files.acf_svg, acf_svg.as_bytes())?;
    Ok((report, files))
}

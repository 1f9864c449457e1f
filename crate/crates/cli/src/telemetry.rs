//! CSV telemetry: population records, training losses and policy-type
//! counts. Every file starts with a `# config_hash=<hex> seed=<n>` line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use predprey_core::analysis::PopulationSeries;
use predprey_core::world::PopulationRecord;

use crate::CliError;

pub const POPULATION_HEADER: [&str; 8] = [
    "tick",
    "n_predator",
    "n_prey",
    "mean_attack",
    "mean_resilience",
    "mean_speed_pred",
    "mean_speed_prey",
    "mean_health",
];
pub const TRAINING_HEADER: [&str; 4] = ["update_idx", "loss", "epsilon", "buffer_size"];
pub const TYPES_HEADER: [&str; 9] = [
    "tick",
    "predator_random",
    "predator_scripted",
    "predator_frozen",
    "predator_continual",
    "prey_random",
    "prey_scripted",
    "prey_frozen",
    "prey_continual",
];

/// Line-oriented CSV writer that hands buffered rows to the OS every
/// `period` rows, so an interrupted run keeps everything up to its last
/// flush.
pub struct CsvSink {
    out: BufWriter<File>,
    period: u64,
    pending: u64,
}

impl CsvSink {
    pub fn create(path: &Path, meta: &str, header: &[&str], period: u64) -> Result<CsvSink, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut sink = CsvSink { out: BufWriter::new(file), period: period.max(1), pending: 0 };
        writeln!(sink.out, "# {meta}").map_err(|e| CliError::io(path, e))?;
        writeln!(sink.out, "{}", header.join(",")).map_err(|e| CliError::io(path, e))?;
        Ok(sink)
    }

    /// Continues an existing file whose meta and header lines are in place.
    pub fn append(path: &Path, period: u64) -> Result<CsvSink, CliError> {
        let file = std::fs::OpenOptions::new().append(true).open(path).map_err(|e| CliError::io(path, e))?;
        Ok(CsvSink { out: BufWriter::new(file), period: period.max(1), pending: 0 })
    }

    pub fn row(&mut self, fields: &[String]) -> std::io::Result<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        self.pending += 1;
        if self.pending >= self.period {
            self.pending = 0;
            self.out.flush()?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_all()
    }
}

pub fn meta_line(config_hash: &str, seed: u64) -> String {
    format!("config_hash={config_hash} seed={seed}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_owned(), |x| x.to_string())
}

pub fn population_fields(r: &PopulationRecord) -> Vec<String> {
    vec![
        r.tick.to_string(),
        r.n_predator.to_string(),
        r.n_prey.to_string(),
        opt(r.mean_attack),
        opt(r.mean_resilience),
        opt(r.mean_speed_pred),
        opt(r.mean_speed_prey),
        opt(r.mean_health),
    ]
}

/// Metadata parsed from a leading `# key=value ...` line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvMeta {
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

fn parse_meta(text: &str) -> CsvMeta {
    let mut meta = CsvMeta::default();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        for kv in line.trim_start_matches('#').split_whitespace() {
            match kv.split_once('=') {
                Some(("config_hash", v)) => meta.config_hash = Some(v.to_owned()),
                Some(("seed", v)) => meta.seed = v.parse().ok(),
                _ => {}
            }
        }
    }
    meta
}

/// Reads a population CSV. An empty file, or one holding only comments and
/// the header, yields an empty series.
pub fn read_population(path: &Path) -> Result<(CsvMeta, PopulationSeries), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_population(&text).map_err(|m| CliError::Input(format!("{}: {m}", path.display())))
}

pub fn parse_population(text: &str) -> Result<(CsvMeta, PopulationSeries), String> {
    let meta = parse_meta(text);
    let mut series = PopulationSeries::default();
    if text.lines().all(|l| l.trim().is_empty() || l.starts_with('#')) {
        return Ok((meta, series));
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| format!("unreadable header: {e}"))?.clone();
    if header.iter().collect::<Vec<_>>() != POPULATION_HEADER {
        return Err(format!("header must be `{}`", POPULATION_HEADER.join(",")));
    }
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| format!("row {row}: {e}"))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |col: &str, v: &str| format!("row {row} (line {line}): bad {col} value `{v}`");
        let int = |i: usize| rec[i].trim().parse::<u64>().map_err(|_| bad(POPULATION_HEADER[i], &rec[i]));
        let real = |i: usize| {
            let v = rec[i].trim();
            v.parse::<f64>().ok().filter(|x| x.is_finite() || x.is_nan()).ok_or_else(|| bad(POPULATION_HEADER[i], v))
        };
        let some = |x: f64| if x.is_nan() { None } else { Some(x) };
        series.push(&PopulationRecord {
            tick: int(0)?,
            n_predator: int(1)? as usize,
            n_prey: int(2)? as usize,
            mean_attack: some(real(3)?),
            mean_resilience: some(real(4)?),
            mean_speed_pred: some(real(5)?),
            mean_speed_prey: some(real(6)?),
            mean_health: some(real(7)?),
        });
    }
    Ok((meta, series))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_round_trip_keeps_absent_means() {
        let r = PopulationRecord {
            tick: 3,
            n_predator: 2,
            n_prey: 0,
            mean_attack: Some(1.25),
            mean_resilience: None,
            mean_speed_pred: Some(0.1 + 0.2),
            mean_speed_prey: None,
            mean_health: Some(0.5),
        };
        let text = format!(
            "# config_hash=ab seed=4\n{}\n{}\n",
            POPULATION_HEADER.join(","),
            population_fields(&r).join(",")
        );
        let (meta, s) = parse_population(&text).unwrap();
        assert_eq!(meta, CsvMeta { config_hash: Some("ab".into()), seed: Some(4) });
        assert_eq!(s.len(), 1);
        assert_eq!(s.mean_speed_pred[0], 0.1 + 0.2);
        assert!(s.mean_resilience[0].is_nan());
        assert_eq!(s.n_prey[0], 0.0);
    }

    #[test]
    fn malformed_rows_are_named() {
        let text = format!("{}\n1,2,3,NaN,NaN,NaN,NaN,NaN\n2,x,3,NaN,NaN,NaN,NaN,NaN\n", POPULATION_HEADER.join(","));
        let err = parse_population(&text).unwrap_err();
        assert!(err.contains("row 2"), "{err}");
        let short = format!("{}\n1,2,3\n", POPULATION_HEADER.join(","));
        assert!(parse_population(&short).unwrap_err().contains("row 1"));
        assert!(parse_population("a,b\n1,2\n").is_err());
    }

    #[test]
    fn empty_inputs_give_empty_series() {
        assert!(parse_population("").unwrap().1.is_empty());
        assert!(parse_population("# seed=1\n").unwrap().1.is_empty());
        let header_only = format!("{}\n", POPULATION_HEADER.join(","));
        assert!(parse_population(&header_only).unwrap().1.is_empty());
    }
}

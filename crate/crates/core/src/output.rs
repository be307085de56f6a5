//! Run records and their on-disk form.
//!
//! A result directory holds `summary.txt` (one `metric name value tolerance
//! verdict` line per reported quantity), one comma-separated table per data
//! set, and `config.txt` with the fully resolved configuration. Files are
//! written to a temporary name and renamed into place, so a table is either
//! complete or absent.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Shortest round-trip text, in scientific form for very small or large magnitudes.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Info,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tolerance {
    /// Pass when the value lies in `[lo, hi]`.
    Within(f64, f64),
    /// Pass when the value lies outside `[lo, hi]`: the check asserts a failure.
    Outside(f64, f64),
    /// Reported only.
    None,
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Within(lo, hi) => write!(f, "[{},{}]", format_number(*lo), format_number(*hi)),
            Tolerance::Outside(lo, hi) => write!(f, "outside[{},{}]", format_number(*lo), format_number(*hi)),
            Tolerance::None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tolerance: Tolerance,
    pub verdict: Verdict,
}

impl Metric {
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: Tolerance::None,
            verdict: Verdict::Info,
        }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        let pass = value >= lo && value <= hi;
        Self {
            name: name.into(),
            value,
            tolerance: Tolerance::Within(lo, hi),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        }
    }

    /// A check that passes when `value` falls outside `[lo, hi]`.
    pub fn outside(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        let inside = value >= lo && value <= hi;
        Self {
            name: name.into(),
            value,
            tolerance: Tolerance::Outside(lo, hi),
            verdict: if inside || value.is_nan() { Verdict::Fail } else { Verdict::Pass },
        }
    }

    pub fn is_check(&self) -> bool {
        self.verdict != Verdict::Info
    }
}

/// Comma-separated table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header of {}", self.name);
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| format_number(v)).collect());
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub const VERSION: &str = concat!("eqfree-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub experiment: String,
    pub seed: u64,
    pub version: String,
    pub config_echo: String,
    pub metrics: Vec<Metric>,
    pub tables: Vec<Table>,
    /// Module errors with context; any error fails the run.
    pub errors: Vec<String>,
    /// Free-form lines for the summary, such as a stability classification.
    pub notes: Vec<(String, String)>,
}

impl RunRecord {
    pub fn new(experiment: impl Into<String>, seed: u64, config_echo: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            version: VERSION.to_string(),
            config_echo: config_echo.into(),
            metrics: Vec::new(),
            tables: Vec::new(),
            errors: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, metric: Metric) {
        self.metrics.push(metric);
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.notes.push((key.into(), value.into()));
    }

    pub fn error(&mut self, context: &str, err: impl fmt::Display) {
        self.errors.push(format!("{context}: {err}"));
    }

    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.metrics.iter().all(|m| m.verdict != Verdict::Fail)
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "# {}\nexperiment {}\nseed {}\n# metric name value tolerance verdict\n",
            self.version, self.experiment, self.seed
        );
        for (k, v) in &self.notes {
            out.push_str(&format!("note {k} {v}\n"));
        }
        for m in &self.metrics {
            out.push_str(&format!(
                "metric {} {} {} {}\n",
                m.name,
                format_number(m.value),
                m.tolerance,
                m.verdict.as_str()
            ));
        }
        for e in &self.errors {
            out.push_str(&format!("error {}\n", e.replace('\n', " ")));
        }
        if !self.metrics.is_empty() || !self.errors.is_empty() {
            out.push_str(&format!("verdict {}\n", if self.all_pass() { "pass" } else { "fail" }));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("refusing to overwrite existing {0} (pass --force to replace it)")]
    WouldOverwrite(PathBuf),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), OutputError> {
    let tmp = path.with_extension("partial");
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(contents.as_bytes()).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes the record into `dir`, returning the files in the order written.
///
/// Without `force`, fails before writing anything if any target file exists.
pub fn write_results(record: &RunRecord, dir: &Path, force: bool) -> Result<Vec<PathBuf>, OutputError> {
    let mut files: Vec<(PathBuf, String)> = vec![
        (dir.join("summary.txt"), record.summary()),
        (dir.join("config.txt"), record.config_echo.clone()),
    ];
    for t in &record.tables {
        files.push((dir.join(t.file_name()), t.to_csv()));
    }
    if !force {
        if let Some((existing, _)) = files.iter().find(|(p, _)| p.exists()) {
            return Err(OutputError::WouldOverwrite(existing.clone()));
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (path, contents) in files {
        write_atomic(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -2.5, 1.118, 3e-7, 1.2e-12, 6.02e23, 1e-4, f64::NAN] {
            let text = format_number(v);
            let back: f64 = text.parse().unwrap();
            assert!(back == v || (v.is_nan() && back.is_nan()), "{text}");
        }
        assert_eq!(format_number(3e-7), "3e-7");
        assert_eq!(format_number(0.5), "0.5");
    }

    #[test]
    fn empty_record_has_header_only() {
        let r = RunRecord::new("kp", 3, "");
        let s = r.summary();
        assert!(s.lines().all(|l| l.starts_with('#') || l.starts_with("experiment") || l.starts_with("seed")));
        assert!(r.all_pass());
    }

    #[test]
    fn metric_verdicts() {
        assert_eq!(Metric::within("a", 1.0, 0.5, 1.5).verdict, Verdict::Pass);
        assert_eq!(Metric::within("a", 2.0, 0.5, 1.5).verdict, Verdict::Fail);
        assert_eq!(Metric::within("a", f64::NAN, 0.5, 1.5).verdict, Verdict::Fail);
        assert_eq!(Metric::outside("a", 2.0, 0.0, 0.1).verdict, Verdict::Pass);
        assert_eq!(Metric::outside("a", 0.05, 0.0, 0.1).verdict, Verdict::Fail);
        assert_eq!(Metric::outside("a", f64::NAN, 0.0, 0.1).verdict, Verdict::Fail);
        assert_eq!(Metric::info("a", 1.0).tolerance.to_string(), "-");
        assert_eq!(Tolerance::Outside(0.0, 0.1).to_string(), "outside[0,0.1]");
    }

    #[test]
    fn summary_lines() {
        let mut r = RunRecord::new("patch", 1, "");
        r.push(Metric::within("growth", 1.118, 1.1, 1.13));
        r.push(Metric::info("steps", 1000.0));
        let s = r.summary();
        assert!(s.contains("metric growth 1.118 [1.1,1.13] pass\n"));
        assert!(s.contains("metric steps 1000 - info\n"));
        assert!(s.ends_with("verdict pass\n"));
        r.error("probe", "boom");
        assert!(!r.all_pass());
        assert!(r.summary().contains("error probe: boom\n"));
    }

    #[test]
    fn table_has_header_plus_rows() {
        let mut t = Table::new("trajectory", &["step", "x"]);
        for i in 0..5 {
            t.push_numbers(&[i as f64, 0.5 * i as f64]);
        }
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert_eq!(csv.lines().next(), Some("step,x"));
    }

    #[test]
    fn overwrite_policy() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = RunRecord::new("kp", 0, "[experiment]\nname = kp\n");
        r.tables.push(Table::new("t", &["a"]));
        let files = write_results(&r, dir.path(), false).unwrap();
        assert_eq!(files.len(), 3);
        let err = write_results(&r, dir.path(), false).unwrap_err();
        assert!(matches!(err, OutputError::WouldOverwrite(_)));
        assert!(err.to_string().contains("--force"));
        assert!(write_results(&r, dir.path(), true).is_ok());
        assert!(!dir.path().join("summary.partial").exists());
    }
}

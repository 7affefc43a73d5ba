//! Run reports: checks with verdicts, metrics, data tables and a gnuplot
//! script. Everything except the wall-clock line is a pure function of
//! the configuration.

use crate::CliError;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    /// Acceptance criterion the check implements, if any.
    pub criterion: Option<u8>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File name inside the output directory.
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Self { file: file.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }
}

/// A line plot of two columns of a table.
#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub table: String,
    pub x: usize,
    pub y: usize,
    pub title: String,
    pub log_y: bool,
}

/// Results of one subcommand.
#[derive(Clone, Debug, Default)]
pub struct Section {
    pub checks: Vec<Check>,
    pub metrics: Vec<(String, String)>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    pub warnings: Vec<String>,
}

impl Section {
    pub fn check(&mut self, name: &str, criterion: Option<u8>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), criterion, passed, detail: detail.into() });
    }

    pub fn metric(&mut self, name: &str, value: impl ToString) {
        self.metrics.push((name.into(), value.to_string()));
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn criterion_passed(&self, criterion: u8) -> Option<bool> {
        let mut it = self.checks.iter().filter(|c| c.criterion == Some(criterion)).peekable();
        it.peek()?;
        Some(it.all(|c| c.passed))
    }

    pub fn merge(&mut self, other: Section) {
        self.checks.extend(other.checks);
        self.metrics.extend(other.metrics);
        self.tables.extend(other.tables);
        self.plots.extend(other.plots);
        self.warnings.extend(other.warnings);
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub subcommand: String,
    pub seed: u64,
    /// Resolved parameters, in display order.
    pub parameters: Vec<(String, String)>,
    pub section: Section,
    pub config_toml: String,
    pub wall_clock: Duration,
}

pub const WALL_CLOCK_PREFIX: &str = "wall-clock: ";

impl RunReport {
    pub fn passed(&self) -> bool {
        self.section.passed()
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "phlab {}", self.subcommand);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "{WALL_CLOCK_PREFIX}{:.3} s", self.wall_clock.as_secs_f64());
        s.push_str("\n[parameters]\n");
        for (k, v) in &self.parameters {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("\n[checks]\n");
        for c in &self.section.checks {
            let tag = c.criterion.map(|n| format!(" (criterion {n})")).unwrap_or_default();
            let _ = writeln!(s, "{} {}{}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, tag, c.detail);
        }
        s.push_str("\n[metrics]\n");
        for (k, v) in &self.section.metrics {
            let _ = writeln!(s, "{k} = {v}");
        }
        if !self.section.warnings.is_empty() {
            s.push_str("\n[warnings]\n");
            for w in &self.section.warnings {
                let _ = writeln!(s, "- {w}");
            }
        }
        let failed = self.section.failed();
        let _ = writeln!(
            s,
            "\nverdict: {}",
            if failed.is_empty() {
                "PASS".to_string()
            } else {
                format!("FAIL ({})", failed.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", "))
            }
        );
        s.push_str("\n[config]\n");
        s.push_str(&self.config_toml);
        s
    }

    fn machine_rows(&self) -> Vec<[String; 5]> {
        let mut rows = vec![["seed".into(), "seed".into(), self.seed.to_string(), String::new(), String::new()]];
        for (k, v) in &self.parameters {
            rows.push(["parameter".into(), k.clone(), v.clone(), String::new(), String::new()]);
        }
        for c in &self.section.checks {
            rows.push([
                "check".into(),
                c.name.clone(),
                c.criterion.map(|n| n.to_string()).unwrap_or_default(),
                if c.passed { "pass" } else { "fail" }.into(),
                c.detail.clone(),
            ]);
        }
        for (k, v) in &self.section.metrics {
            rows.push(["metric".into(), k.clone(), v.clone(), String::new(), String::new()]);
        }
        for w in &self.section.warnings {
            rows.push(["warning".into(), String::new(), String::new(), String::new(), w.clone()]);
        }
        rows
    }

    fn plot_script(&self) -> Option<String> {
        if self.section.plots.is_empty() {
            return None;
        }
        let mut s = String::from("# gnuplot script; run `gnuplot plot.gp` inside this directory.\n");
        s.push_str("set datafile separator ','\nset terminal pngcairo size 900,600\nset key autotitle columnhead\n");
        for (i, p) in self.section.plots.iter().enumerate() {
            let _ = writeln!(s, "\nset output 'plot_{i}.png'\nset title '{}'", p.title.replace('\'', ""));
            s.push_str(if p.log_y { "set logscale y\n" } else { "unset logscale y\n" });
            let _ = writeln!(s, "plot '{}' using {}:{} with lines", p.table, p.x + 1, p.y + 1);
        }
        Some(s)
    }

    /// Writes report.txt, report.csv, every table and plot.gp to `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("report.txt"), self.render_text()).map_err(io)?;
        let mut w = csv::Writer::from_path(dir.join("report.csv")).map_err(csv_err)?;
        w.write_record(["kind", "name", "value", "verdict", "detail"]).map_err(csv_err)?;
        for r in self.machine_rows() {
            w.write_record(&r).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        for t in &self.section.tables {
            let mut w = csv::Writer::from_path(dir.join(&t.file)).map_err(csv_err)?;
            w.write_record(&t.header).map_err(csv_err)?;
            for r in &t.rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
        if let Some(script) = self.plot_script() {
            std::fs::write(dir.join("plot.gp"), script).map_err(io)?;
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let mut sec = Section::default();
        sec.check("a", Some(1), true, "ok");
        sec.check("b", None, false, "bad");
        sec.metric("x", num(0.1));
        let mut t = Table::new("t.csv", &["i", "v"]);
        t.push([1.to_string(), num(2.5)]);
        sec.tables.push(t);
        sec.plots.push(Plot { table: "t.csv".into(), x: 0, y: 1, title: "v".into(), log_y: false });
        RunReport {
            subcommand: "demo".into(),
            seed: 7,
            parameters: vec![("k".into(), "1".into())],
            section: sec,
            config_toml: "seed = 7\n".into(),
            wall_clock: Duration::from_millis(5),
        }
    }

    #[test]
    fn text_names_failures() {
        let r = sample();
        assert!(!r.passed());
        let t = r.render_text();
        assert!(t.contains("FAIL b"));
        assert!(t.contains("verdict: FAIL (b)"));
        assert!(t.contains("PASS a (criterion 1)"));
    }

    #[test]
    fn criterion_lookup() {
        let r = sample();
        assert_eq!(r.section.criterion_passed(1), Some(true));
        assert_eq!(r.section.criterion_passed(2), None);
    }

    #[test]
    fn writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        sample().write(dir.path()).unwrap();
        for f in ["report.txt", "report.csv", "t.csv", "plot.gp"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert!(csv.contains("check,b,,fail,bad"));
        assert!(!csv.contains("wall"));
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 2.748556717] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}

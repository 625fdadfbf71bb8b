//! CSV assembly and the destination it is written to.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;

/// Twelve significant digits, scientific notation.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        // folds -0 into 0
        return format!("{:.11e}", 0.0);
    }
    format!("{x:.11e}")
}

/// Rows are only formatted here; nothing is written until [`Csv::emit`].
#[derive(Debug, Default)]
pub struct Csv {
    buf: String,
}

impl Csv {
    /// Version line plus the full config echo.
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let mut csv = Self::default();
        csv.comment(&format!("rpsim {} {command}", env!("CARGO_PKG_VERSION")));
        csv.meta("preset", cfg.preset.map_or("none", |p| p.name()));
        for (k, v) in cfg.entries() {
            csv.meta(k, &v);
        }
        csv
    }

    pub fn comment(&mut self, text: &str) {
        writeln!(self.buf, "# {text}").unwrap();
    }

    pub fn meta(&mut self, key: &str, value: &str) {
        self.comment(&format!("{key} = {value}"));
    }

    pub fn header(&mut self, columns: &[&str]) {
        writeln!(self.buf, "{}", columns.join(",")).unwrap();
    }

    pub fn row(&mut self, values: &[f64]) {
        let fields: Vec<String> = values.iter().map(|&x| num(x)).collect();
        self.fields(&fields);
    }

    pub fn fields(&mut self, fields: &[String]) {
        writeln!(self.buf, "{}", fields.join(",")).unwrap();
    }

    /// Write to `out`, or stdout when unset.
    pub fn emit(&self, out: Option<&Path>) -> std::io::Result<()> {
        match out {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                std::fs::write(path, &self.buf)
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(self.buf.as_bytes())?;
                stdout.flush()
            }
        }
    }
}

/// Where the SVG for `observable` goes: `plot_dir/<stem>_<observable>.svg`,
/// with the stem and directory taken from `out` when not given.
pub fn plot_path(cfg: &RunConfig, observable: &str) -> Option<PathBuf> {
    let stem = cfg
        .out
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or("sweep".to_string(), |s| s.to_string_lossy().into_owned());
    let dir = match (&cfg.plot_dir, &cfg.out) {
        (Some(d), _) => d.clone(),
        (None, Some(out)) => out.parent().map(Path::to_path_buf).unwrap_or_default(),
        (None, None) => return None,
    };
    Some(dir.join(format!("{stem}_{observable}.svg")))
}

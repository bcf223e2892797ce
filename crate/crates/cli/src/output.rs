//! Report and data-file writing. Every file starts with the resolved config
//! so a run can be reproduced from its outputs alone.

use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use snspd_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    #[value(name = "json-text")]
    JsonText,
}

#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Extra `# ` lines written after the config line.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    x.to_string()
}

pub struct DataFile {
    pub name: String,
    pub body: Vec<u8>,
}

pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub result: Value,
    pub table: Table,
    pub files: Vec<DataFile>,
}

impl Report {
    pub fn new(
        command: &'static str,
        config: &impl Serialize,
        result: &impl Serialize,
        table: Table,
    ) -> Result<Self> {
        Ok(Self {
            command,
            config: to_value(config)?,
            result: to_value(result)?,
            table,
            files: Vec::new(),
        })
    }

    /// Adds a data file produced by `write`.
    pub fn file(
        mut self,
        name: impl Into<String>,
        write: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    ) -> Result<Self> {
        let mut body = Vec::new();
        write(&mut body)?;
        self.files.push(DataFile {
            name: name.into(),
            body,
        });
        Ok(self)
    }

    fn config_line(&self) -> String {
        format!("# config: {}\n", self.config)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::JsonText => {
                let doc = json!({ "command": self.command, "config": self.config, "result": self.result });
                let mut text =
                    serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
                text.push('\n');
                Ok(text)
            }
            Format::Csv => {
                let mut text = format!("# command: {}\n{}", self.command, self.config_line());
                for note in &self.table.notes {
                    text.push_str(&format!("# {note}\n"));
                }
                let mut wtr = csv::Writer::from_writer(Vec::new());
                wtr.write_record(&self.table.header).map_err(Error::from)?;
                for row in &self.table.rows {
                    wtr.write_record(row).map_err(Error::from)?;
                }
                let body = wtr.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
                text.push_str(&String::from_utf8_lossy(&body));
                Ok(text)
            }
        }
    }

    /// Writes data files and the report into `out`, returning the report text.
    pub fn emit(&self, out: &Path, format: Format) -> Result<String> {
        std::fs::create_dir_all(out)?;
        for f in &self.files {
            let mut file = std::fs::File::create(out.join(&f.name))?;
            file.write_all(self.config_line().as_bytes())?;
            file.write_all(&f.body)?;
            file.sync_all()?;
        }
        let text = self.render(format)?;
        let name = match format {
            Format::JsonText => "report.json",
            Format::Csv => "report.csv",
        };
        let mut file = std::fs::File::create(out.join(name))?;
        file.write_all(text.as_bytes())?;
        file.sync_all()?;
        Ok(text)
    }
}

fn to_value(v: &impl Serialize) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Parse(e.to_string()))
}

/// Appends one line to `run.log`; timestamps live only here.
pub fn log_run(out: &Path, command: &str, config: &Path, exit_code: u8, error: Option<&str>) {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let line = format!(
        "{secs:.3} {command} config={} exit={exit_code}{}\n",
        config.display(),
        error.map(|e| format!(" error={e}")).unwrap_or_default()
    );
    let appended = std::fs::create_dir_all(out).and_then(|_| {
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(out.join("run.log"))?
            .write_all(line.as_bytes())
    });
    if let Err(e) = appended {
        log::warn!("could not append to run.log: {e}");
    }
}

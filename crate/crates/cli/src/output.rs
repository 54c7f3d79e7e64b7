use std::fs;
use std::path::PathBuf;

use serde_json::Value;

use crate::commands::CliError;
use crate::{Format, OutputArgs};

/// Shortest round-trip decimal form; identical across platforms and runs.
pub fn fmt(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0"
        return "0".to_string();
    }
    format!("{v}")
}

/// Writes result files into the output directory and echoes the one
/// matching `--format` to standard output.
pub struct Outputs {
    dir: PathBuf,
    echo: Option<Format>,
}

impl Outputs {
    pub fn new(args: &OutputArgs) -> Result<Self, CliError> {
        fs::create_dir_all(&args.out)?;
        Ok(Outputs {
            dir: args.out.clone(),
            echo: args.format,
        })
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        pplr::dataio::write_csv(&path, header, rows)?;
        if self.echo == Some(Format::Csv) {
            print!("{}", fs::read_to_string(&path)?);
        }
        Ok(())
    }

    pub fn json(&self, name: &str, doc: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(doc)?;
        text.push('\n');
        fs::write(self.dir.join(name), &text)?;
        if self.echo == Some(Format::Json) {
            print!("{text}");
        }
        Ok(())
    }
}

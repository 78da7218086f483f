//! Ordered record sink for the three output formats.

use std::io::Write;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Text,
}

/// A flat row for CSV/text plus the document emitted in JSON mode.
pub trait Record: Serialize {
    fn json(&self) -> Value {
        serde_json::to_value(self).expect("records serialize")
    }
}

pub struct Sink<W: Write> {
    format: Format,
    csv: Option<csv::Writer<W>>,
    plain: Option<W>,
}

impl<W: Write> Sink<W> {
    pub fn new(format: Format, out: W) -> Self {
        match format {
            Format::Csv => Sink { format, csv: Some(csv::Writer::from_writer(out)), plain: None },
            _ => Sink { format, csv: None, plain: Some(out) },
        }
    }

    pub fn write<R: Record>(&mut self, record: &R) -> std::io::Result<()> {
        match self.format {
            Format::Csv => self.csv.as_mut().unwrap().serialize(record).map_err(std::io::Error::other),
            Format::Json => {
                let w = self.plain.as_mut().unwrap();
                serde_json::to_writer(&mut *w, &record.json())?;
                writeln!(w)
            }
            Format::Text => {
                let w = self.plain.as_mut().unwrap();
                let Value::Object(map) = serde_json::to_value(record).map_err(std::io::Error::other)? else {
                    unreachable!("records are structs")
                };
                let line: Vec<String> = map.iter().map(|(k, v)| format!("{k}={v}")).collect();
                writeln!(w, "{}", line.join(" "))
            }
        }
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        match (&mut self.csv, &mut self.plain) {
            (Some(c), _) => c.flush(),
            (_, Some(w)) => w.flush(),
            _ => Ok(()),
        }
    }
}

//! CSV output. Every file starts with a `#schema=<tag>` line, then the header row.
//! Appending checks that both lines match before adding rows.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub schema: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(schema: &'static str, header: &[&str]) -> Self {
        CsvTable {
            schema,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    fn tag_line(&self) -> String {
        format!("#schema={}", self.schema)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = self.tag_line();
        out.push('\n');
        out.push_str(&encode(std::iter::once(&self.header).chain(&self.rows))?);
        Ok(out)
    }

    /// Create or truncate `path`.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| HarnessError::io(path, e))
    }

    /// Add rows to an existing file of the same schema, or create it.
    pub fn append(&self, path: &Path) -> Result<()> {
        if !path.exists() {
            return self.write(path);
        }
        let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let tag = lines.next().transpose().map_err(|e| HarnessError::io(path, e))?;
        let header = lines.next().transpose().map_err(|e| HarnessError::io(path, e))?;
        let expected_header = encode(std::iter::once(&self.header))?;
        if tag.as_deref() != Some(self.tag_line().as_str())
            || header.as_deref() != Some(expected_header.trim_end())
        {
            return Err(HarnessError::Csv(format!(
                "{}: existing file has a different schema or header",
                path.display()
            )));
        }
        let mut f = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        f.write_all(encode(&self.rows)?.as_bytes())
            .map_err(|e| HarnessError::io(path, e))
    }

    /// Parse a file written by [`CsvTable::write`].
    pub fn read(path: &Path) -> Result<(String, Vec<String>, Vec<Vec<String>>)> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let (tag, body) = text
            .split_once('\n')
            .ok_or_else(|| HarnessError::Csv("missing schema line".into()))?;
        let schema = tag
            .strip_prefix("#schema=")
            .ok_or_else(|| HarnessError::Csv("missing schema line".into()))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok((schema.to_string(), header, rows))
    }
}

fn encode<'a>(rows: impl IntoIterator<Item = &'a Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting_and_schema_line() {
        let mut t = CsvTable::new("demo/1", &["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(t.to_csv_string().unwrap(), "#schema=demo/1\na,b\n1,\"x,y\"\n");
    }
}

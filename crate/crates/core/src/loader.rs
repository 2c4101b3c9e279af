//! Reading plain-text log files and Loghub-style structured CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use regex::Regex;
use thiserror::Error;

use crate::miner::LabeledRow;
use crate::model::{ModelError, RawLogRecord};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("log format `{0}` has no <Content> field")]
    NoContentField(String),
    #[error("log format regex: {0}")]
    Regex(#[from] regex::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv is missing the `{0}` column")]
    MissingColumn(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A header layout such as `<Date> <Time> <Pid> <Level> <Component>: <Content>`.
/// Fields are named in angle brackets; whitespace between them matches any
/// run of whitespace. Only the `<Content>` capture is kept.
#[derive(Debug, Clone)]
pub struct LogFormat {
    spec: String,
    regex: Regex,
}

impl LogFormat {
    pub fn parse(spec: &str) -> Result<Self, LoadError> {
        let field = Regex::new(r"<([^<>]+)>").expect("static regex");
        let mut pattern = String::from("^");
        let mut last = 0;
        let mut has_content = false;
        for cap in field.captures_iter(spec) {
            let whole = cap.get(0).expect("match");
            pattern += &literal(&spec[last..whole.start()]);
            let name = &cap[1];
            if name == "Content" {
                has_content = true;
            }
            let name: String = name.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
            pattern += &format!("(?P<{name}>.*?)");
            last = whole.end();
        }
        pattern += &literal(&spec[last..]);
        pattern.push('$');
        if !has_content {
            return Err(LoadError::NoContentField(spec.to_owned()));
        }
        Ok(Self {
            spec: spec.to_owned(),
            regex: Regex::new(&pattern)?,
        })
    }

    /// Message part of `line`, or `None` when the header does not match.
    pub fn content<'a>(&self, line: &'a str) -> Option<&'a str> {
        self.regex
            .captures(line.trim())
            .and_then(|c| c.name("Content"))
            .map(|m| m.as_str())
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }
}

fn literal(text: &str) -> String {
    let ws = Regex::new(r"\s+").expect("static regex");
    ws.split(text)
        .map(regex::escape)
        .collect::<Vec<_>>()
        .join(r"\s+")
}

/// Records plus every line that could not become one.
#[derive(Debug, Default)]
pub struct Loaded {
    pub records: Vec<RawLogRecord>,
    pub skipped: Vec<(u64, String)>,
}

/// One log per line. Blank lines and header mismatches are reported in
/// `skipped`; line numbers stay those of the file.
pub fn read_text<R: Read>(reader: R, domain: &str, format: Option<&LogFormat>) -> Result<Loaded, LoadError> {
    let mut loaded = Loaded::default();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = i as u64 + 1;
        let content = match format {
            Some(f) => match f.content(&line) {
                Some(c) => c,
                None => {
                    loaded.skipped.push((line_no, format!("does not match `{}`", f.spec())));
                    continue;
                }
            },
            None => line.as_str(),
        };
        match RawLogRecord::new(domain, line_no, content) {
            Ok(r) => loaded.records.push(r),
            Err(ModelError::EmptyContent { .. }) => loaded.skipped.push((line_no, "empty content".into())),
            Err(e) => loaded.skipped.push((line_no, e.to_string())),
        }
    }
    Ok(loaded)
}

pub fn load_text(path: impl AsRef<Path>, domain: &str, format: Option<&LogFormat>) -> Result<Loaded, LoadError> {
    read_text(File::open(path)?, domain, format)
}

/// A row of a structured CSV (`LineId`, `Content`, `EventTemplate`, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredRow {
    pub line: u64,
    pub content: String,
    pub template: Option<String>,
    pub predicted: Option<String>,
}

pub fn read_structured<R: Read>(reader: R) -> Result<Vec<StructuredRow>, LoadError> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = csv.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let content_col = col("Content").ok_or(LoadError::MissingColumn("Content"))?;
    let line_col = col("LineId");
    let template_col = col("EventTemplate");
    let predicted_col = col("Predicted");
    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let get = |c: Option<usize>| c.and_then(|c| record.get(c)).map(str::to_owned);
        let line = line_col
            .and_then(|c| record.get(c))
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(i as u64 + 1);
        rows.push(StructuredRow {
            line,
            content: record.get(content_col).unwrap_or_default().to_owned(),
            template: get(template_col),
            predicted: get(predicted_col),
        });
    }
    Ok(rows)
}

pub fn load_structured(path: impl AsRef<Path>) -> Result<Vec<StructuredRow>, LoadError> {
    read_structured(File::open(path)?)
}

/// Rows with a gold template, as input for `ingest_labeled`.
pub fn labeled_rows(domain: &str, rows: &[StructuredRow]) -> Result<Vec<LabeledRow>, LoadError> {
    rows.iter()
        .map(|r| {
            Ok(LabeledRow {
                domain: domain.to_owned(),
                line: r.line,
                content: r.content.clone(),
                template: r.template.clone().ok_or(LoadError::MissingColumn("EventTemplate"))?,
            })
        })
        .collect()
}

/// Domain name from a Loghub-style file name: `Linux_2k.log_structured.csv`
/// gives `Linux`.
pub fn domain_from_path(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("logs");
    name.split(['_', '.'])
        .find(|s| !s.is_empty())
        .unwrap_or("logs")
        .to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_stripping() {
        let f = LogFormat::parse("<Date> <Time> <Level> <Component>: <Content>").unwrap();
        assert_eq!(
            f.content("081109 203615 INFO dfs.DataNode$PacketResponder: Received block blk_1 of size 9"),
            Some("Received block blk_1 of size 9")
        );
        assert_eq!(f.content("garbage"), None);
        assert!(LogFormat::parse("<Date> <Time>").is_err());
    }

    #[test]
    fn text_loading_reports_blank_lines() {
        let loaded = read_text("a 1\n\nb 2\n".as_bytes(), "x", None).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.records[1].line_no, 3);
        assert_eq!(loaded.skipped, vec![(2, "empty content".to_string())]);
    }

    #[test]
    fn structured_csv() {
        let data = "LineId,Content,EventId,EventTemplate\n1,\"send 5 bytes, ok\",E1,\"send <*> bytes, ok\"\n";
        let rows = read_structured(data.as_bytes()).unwrap();
        assert_eq!(rows[0].content, "send 5 bytes, ok");
        assert_eq!(rows[0].template.as_deref(), Some("send <*> bytes, ok"));
        assert!(read_structured("LineId,Foo\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn domain_names() {
        assert_eq!(domain_from_path(Path::new("/x/Linux_2k.log_structured.csv")), "Linux");
        assert_eq!(domain_from_path(Path::new("HDFS.log")), "HDFS");
    }
}

//! Versioned key=value text format for model bundles.
//!
//! A bundle is a header line, a sequence of `[section]` blocks of
//! `key=value` lines, and a final `end` sentinel. Floats are printed with
//! Rust's shortest round-trip formatting, so loading reproduces the exact
//! bit pattern and save -> load -> save is a fixed point.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LoadError {
    #[error("unrecognized bundle header `{0}`")]
    BadHeader(String),
    #[error("version mismatch: found `{found}`, expected `{expected}`")]
    VersionMismatch { found: String, expected: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("missing field `{field}` in section [{section}]")]
    MissingField { section: String, field: String },
    #[error("malformed field `{field}`: {detail}")]
    MalformedField { field: String, detail: String },
    #[error("truncated bundle: missing `end` terminator")]
    Truncated,
    #[error("malformed line {line}: `{content}`")]
    MalformedLine { line: usize, content: String },
}

pub(crate) struct Writer {
    out: String,
}

impl Writer {
    pub fn new(format_name: &str, version: &str) -> Self {
        Writer {
            out: format!("{format_name} {version}\n"),
        }
    }

    pub fn section(&mut self, name: &str) {
        self.out.push_str(&format!("[{name}]\n"));
    }

    pub fn field(&mut self, key: &str, value: impl std::fmt::Display) {
        self.out.push_str(&format!("{key}={value}\n"));
    }

    pub fn field_str(&mut self, key: &str, value: &str) {
        self.out.push_str(&format!("{key}={}\n", escape(value)));
    }

    pub fn field_f64_list(&mut self, key: &str, values: impl IntoIterator<Item = f64>) {
        let joined = values
            .into_iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.out.push_str(&format!("{key}={joined}\n"));
    }

    pub fn field_int_list(&mut self, key: &str, values: impl IntoIterator<Item = u64>) {
        let joined = values
            .into_iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.out.push_str(&format!("{key}={joined}\n"));
    }

    pub fn finish(mut self) -> String {
        self.out.push_str("end\n");
        self.out
    }
}

fn escape(value: &str) -> String {
    value
        .replace('%', "%25")
        .replace('\n', "%0A")
        .replace('\r', "%0D")
}

fn unescape(value: &str) -> String {
    value
        .replace("%0D", "\r")
        .replace("%0A", "\n")
        .replace("%25", "%")
}

#[derive(Debug)]
pub(crate) struct Section {
    name: String,
    fields: Vec<(String, String)>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, LoadError> {
        self.get(key).ok_or_else(|| LoadError::MissingField {
            section: self.name.clone(),
            field: key.to_string(),
        })
    }

    pub fn req_string(&self, key: &str) -> Result<String, LoadError> {
        Ok(unescape(self.require(key)?))
    }

    pub fn req_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, LoadError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| LoadError::MalformedField {
            field: key.to_string(),
            detail: format!("cannot parse `{raw}`"),
        })
    }

    pub fn req_f64(&self, key: &str) -> Result<f64, LoadError> {
        self.req_parse(key)
    }

    pub fn req_bool(&self, key: &str) -> Result<bool, LoadError> {
        self.req_parse(key)
    }

    pub fn req_f64_list(&self, key: &str) -> Result<Vec<f64>, LoadError> {
        let raw = self.require(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|tok| {
                tok.parse().map_err(|_| LoadError::MalformedField {
                    field: key.to_string(),
                    detail: format!("cannot parse `{tok}` as a float"),
                })
            })
            .collect()
    }

    pub fn req_u64_list(&self, key: &str) -> Result<Vec<u64>, LoadError> {
        let raw = self.require(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|tok| {
                tok.parse().map_err(|_| LoadError::MalformedField {
                    field: key.to_string(),
                    detail: format!("cannot parse `{tok}` as an integer"),
                })
            })
            .collect()
    }

    pub fn req_usize_list(&self, key: &str) -> Result<Vec<usize>, LoadError> {
        Ok(self.req_u64_list(key)?.into_iter().map(|v| v as usize).collect())
    }
}

#[derive(Debug)]
pub(crate) struct Document {
    sections: Vec<Section>,
}

impl Document {
    /// Parses a bundle, checking the header name, version, and `end`
    /// sentinel.
    pub fn parse(text: &str, format_name: &str, version: &str) -> Result<Self, LoadError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .by_ref()
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or_else(|| LoadError::BadHeader(String::new()))?;
        let mut parts = header.trim().split_whitespace();
        let name = parts.next().unwrap_or("");
        let found_version = parts.next().unwrap_or("");
        if name != format_name {
            return Err(LoadError::BadHeader(header.trim().to_string()));
        }
        if found_version != version {
            return Err(LoadError::VersionMismatch {
                found: found_version.to_string(),
                expected: version.to_string(),
            });
        }
        let mut sections: Vec<Section> = Vec::new();
        let mut terminated = false;
        for (lineno, raw) in lines {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if terminated {
                return Err(LoadError::MalformedLine {
                    line: lineno + 1,
                    content: line.to_string(),
                });
            }
            if line == "end" {
                terminated = true;
            } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                sections.push(Section {
                    name: name.to_string(),
                    fields: Vec::new(),
                });
            } else if let Some((key, value)) = line.split_once('=') {
                let section = sections.last_mut().ok_or_else(|| LoadError::MalformedLine {
                    line: lineno + 1,
                    content: line.to_string(),
                })?;
                section.fields.push((key.to_string(), value.to_string()));
            } else {
                return Err(LoadError::MalformedLine {
                    line: lineno + 1,
                    content: line.to_string(),
                });
            }
        }
        if !terminated {
            return Err(LoadError::Truncated);
        }
        Ok(Document { sections })
    }

    pub fn section(&self, name: &str) -> Result<&Section, LoadError> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| LoadError::MissingSection(name.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> String {
        let mut w = Writer::new("demo", "v1");
        w.section("alpha");
        w.field("count", 3);
        w.field("value", 0.1f64);
        w.field_str("name", "a%b\nc");
        w.field_f64_list("xs", [1.5, -2.0, 1e-300]);
        w.field_int_list("ids", [7, 8]);
        w.finish()
    }

    #[test]
    fn writer_reader_round_trip() {
        let text = sample();
        let doc = Document::parse(&text, "demo", "v1").unwrap();
        let s = doc.section("alpha").unwrap();
        assert_eq!(s.req_parse::<usize>("count").unwrap(), 3);
        assert_eq!(s.req_f64("value").unwrap(), 0.1);
        assert_eq!(s.req_string("name").unwrap(), "a%b\nc");
        assert_eq!(s.req_f64_list("xs").unwrap(), vec![1.5, -2.0, 1e-300]);
        assert_eq!(s.req_u64_list("ids").unwrap(), vec![7, 8]);
    }

    #[test]
    fn version_and_header_checks() {
        let text = sample();
        assert_eq!(
            Document::parse(&text, "other", "v1").unwrap_err(),
            LoadError::BadHeader("demo v1".into())
        );
        assert_eq!(
            Document::parse(&text, "demo", "v2").unwrap_err(),
            LoadError::VersionMismatch {
                found: "v1".into(),
                expected: "v2".into()
            }
        );
    }

    #[test]
    fn truncation_is_detected() {
        let text = sample();
        let cut = &text[..text.len() - 4];
        assert_eq!(Document::parse(cut, "demo", "v1").unwrap_err(), LoadError::Truncated);
    }

    #[test]
    fn missing_fields_name_the_field() {
        let text = sample();
        let doc = Document::parse(&text, "demo", "v1").unwrap();
        let s = doc.section("alpha").unwrap();
        assert_eq!(
            s.require("absent").unwrap_err(),
            LoadError::MissingField {
                section: "alpha".into(),
                field: "absent".into()
            }
        );
        assert!(doc.section("beta").is_err());
    }

    #[test]
    fn float_lists_round_trip_exact_bits() {
        let values = [0.1, -0.0, 1.0 / 3.0, 2.2250738585072014e-308, 1e308];
        let mut w = Writer::new("demo", "v1");
        w.section("s");
        w.field_f64_list("xs", values);
        let doc = Document::parse(&w.finish(), "demo", "v1").unwrap();
        let loaded = doc.section("s").unwrap().req_f64_list("xs").unwrap();
        for (a, b) in values.iter().zip(&loaded) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

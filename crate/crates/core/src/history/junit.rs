use chrono::{DateTime, NaiveDateTime};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{ExecutionRecord, TestOutcome, Timestamp};
use crate::error::{Error, Result};

struct OpenCase {
    name: String,
    test_id: String,
    duration: f64,
    outcome: TestOutcome,
    timestamp: Timestamp,
}

fn xml_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Xml {
        offset,
        message: message.into(),
    }
}

fn attributes(e: &BytesStart<'_>, offset: u64) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for attr in e.attributes() {
        let attr = attr.map_err(|err| xml_err(offset, err.to_string()))?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr
            .unescape_value()
            .map_err(|err| xml_err(offset, err.to_string()))?
            .into_owned();
        out.push((key, value));
    }
    Ok(out)
}

fn attr<'a>(attrs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn parse_iso8601(s: &str) -> Option<Timestamp> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

fn open_case(attrs: &[(String, String)], timestamp: Timestamp) -> Result<OpenCase> {
    let name = attr(attrs, "name").unwrap_or_default().to_string();
    let test_id = match attr(attrs, "classname") {
        Some(class) if !class.is_empty() => format!("{class}.{name}"),
        _ => name.clone(),
    };
    let duration = match attr(attrs, "time") {
        None => 0.0,
        Some(raw) => {
            let raw = raw.trim().replace(',', "");
            raw.parse::<f64>().map_err(|_| Error::InvalidRecord {
                name: name.clone(),
                message: format!("unparseable time {raw:?}"),
            })?
        }
    };
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidRecord {
            name,
            message: format!("negative or non-finite time {duration}"),
        });
    }
    Ok(OpenCase {
        name,
        test_id,
        duration,
        outcome: TestOutcome::Passed,
        timestamp,
    })
}

impl OpenCase {
    fn finish(self) -> ExecutionRecord {
        ExecutionRecord {
            test_id: self.test_id,
            timestamp: self.timestamp,
            outcome: self.outcome,
            duration: self.duration,
            build_id: None,
            pipeline: None,
        }
    }
}

/// Parses a JUnit XML report into one record per `<testcase>`.
///
/// `<failure>` and `<error>` children map to [`TestOutcome::Failed`],
/// `<skipped>` to [`TestOutcome::Skipped`]. The enclosing testsuite's
/// `timestamp` attribute wins over `default_timestamp`.
pub fn parse_junit_report(bytes: &[u8], default_timestamp: Timestamp) -> Result<Vec<ExecutionRecord>> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);

    let mut buf = Vec::new();
    let mut records = Vec::new();
    let mut open: Vec<Vec<u8>> = Vec::new();
    let mut suite_times: Vec<Timestamp> = Vec::new();
    let mut case: Option<OpenCase> = None;
    let mut saw_junit_element = false;

    loop {
        let offset = reader.buffer_position();
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| xml_err(reader.error_position(), e.to_string()))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let tag = e.name().as_ref().to_vec();
                match tag.as_slice() {
                    b"testsuites" => saw_junit_element = true,
                    b"testsuite" => {
                        saw_junit_element = true;
                        let attrs = attributes(e, offset)?;
                        let inherited = suite_times.last().copied().unwrap_or(default_timestamp);
                        let ts = match attr(&attrs, "timestamp") {
                            Some(raw) => parse_iso8601(raw.trim()).ok_or_else(|| {
                                xml_err(offset, format!("invalid testsuite timestamp {raw:?}"))
                            })?,
                            None => inherited,
                        };
                        if !is_empty {
                            suite_times.push(ts);
                        }
                    }
                    b"testcase" => {
                        saw_junit_element = true;
                        if case.is_some() {
                            return Err(xml_err(offset, "nested testcase element"));
                        }
                        let attrs = attributes(e, offset)?;
                        let ts = suite_times.last().copied().unwrap_or(default_timestamp);
                        let c = open_case(&attrs, ts)?;
                        if is_empty {
                            records.push(c.finish());
                        } else {
                            case = Some(c);
                        }
                    }
                    b"failure" | b"error" => {
                        if let Some(c) = case.as_mut() {
                            c.outcome = TestOutcome::Failed;
                        }
                    }
                    b"skipped" => {
                        if let Some(c) = case.as_mut() {
                            if c.outcome != TestOutcome::Failed {
                                c.outcome = TestOutcome::Skipped;
                            }
                        }
                    }
                    _ => {}
                }
                if !is_empty {
                    open.push(tag);
                }
            }
            Event::End(ref e) => {
                let tag = e.name().as_ref().to_vec();
                match open.pop() {
                    Some(expected) if expected == tag => {}
                    _ => {
                        return Err(xml_err(
                            offset,
                            format!("unexpected closing tag </{}>", String::from_utf8_lossy(&tag)),
                        ))
                    }
                }
                match tag.as_slice() {
                    b"testsuite" => {
                        suite_times.pop();
                    }
                    b"testcase" => {
                        if let Some(c) = case.take() {
                            records.push(c.finish());
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    let end = reader.buffer_position();
    if let Some(tag) = open.last() {
        return Err(xml_err(
            end,
            format!("unclosed element <{}>", String::from_utf8_lossy(tag)),
        ));
    }
    if let Some(c) = case {
        return Err(xml_err(end, format!("unclosed testcase {}", c.name)));
    }
    if !saw_junit_element {
        return Err(xml_err(end, "no testsuite or testcase element found"));
    }
    Ok(records)
}

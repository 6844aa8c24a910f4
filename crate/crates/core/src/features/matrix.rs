use serde::{Deserialize, Serialize};

use super::schema::FeatureSchema;
use crate::error::{Error, Result};
use crate::history::Unit;

/// Feature values of one unit, aligned with a [`FeatureSchema`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub unit: Unit,
}

/// Row-major feature table for many units.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub unit_ids: Vec<String>,
    pub labels: Vec<Option<bool>>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    unit_id: String,
    label: Option<bool>,
    values: Vec<f64>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format {
        line: e.position().map(|p| p.line() as usize).unwrap_or(0),
        message: e.to_string(),
    }
}

impl FeatureMatrix {
    pub fn new(schema: FeatureSchema) -> Self {
        FeatureMatrix {
            schema,
            unit_ids: Vec::new(),
            labels: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, v: FeatureVector) -> Result<()> {
        if v.values.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "vector of length {} for schema of length {}",
                v.values.len(),
                self.schema.len()
            )));
        }
        self.unit_ids.push(v.unit.unit_id);
        self.labels.push(v.unit.label);
        self.rows.push(v.values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// All labels, failing if any unit is unlabeled.
    pub fn required_labels(&self) -> Result<Vec<bool>> {
        self.labels
            .iter()
            .zip(&self.unit_ids)
            .map(|(l, id)| l.ok_or_else(|| Error::Contract(format!("unit {id} has no label"))))
            .collect()
    }

    /// Keeps only the columns of `schema`, in its order.
    pub fn project(&self, schema: &FeatureSchema) -> Result<FeatureMatrix> {
        let cols = self.schema.projection(schema)?;
        Ok(FeatureMatrix {
            schema: schema.clone(),
            unit_ids: self.unit_ids.clone(),
            labels: self.labels.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect(),
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            schema: self.schema.clone(),
            unit_ids: idx.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// CSV with the schema names followed by `unit_id,label` columns.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.schema.names();
        header.push("unit_id".into());
        header.push("label".into());
        w.write_record(&header).map_err(csv_err)?;
        for ((row, id), label) in self.rows.iter().zip(&self.unit_ids).zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(id.clone());
            rec.push(match label {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => String::new(),
            });
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Reads a CSV written by [`FeatureMatrix::to_csv`]; the header must
    /// match `schema` exactly.
    pub fn from_csv(schema: FeatureSchema, text: &str) -> Result<FeatureMatrix> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut expected = schema.names();
        expected.push("unit_id".into());
        expected.push("label".into());
        if header != expected {
            return Err(Error::SchemaMismatch(
                "feature csv header does not match schema".into(),
            ));
        }
        let n = schema.len();
        let mut m = FeatureMatrix::new(schema);
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            let row = (0..n)
                .map(|c| {
                    rec[c].parse::<f64>().map_err(|_| Error::Format {
                        line,
                        message: format!("invalid number {:?}", &rec[c]),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let label = match &rec[n + 1] {
                "1" | "true" => Some(true),
                "0" | "false" => Some(false),
                "" => None,
                other => {
                    return Err(Error::Format {
                        line,
                        message: format!("invalid label {other:?}"),
                    })
                }
            };
            m.unit_ids.push(rec[n].to_string());
            m.labels.push(label);
            m.rows.push(row);
        }
        Ok(m)
    }

    /// One JSON object per unit: `{"unit_id", "label", "values"}`.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for ((row, id), label) in self.rows.iter().zip(&self.unit_ids).zip(&self.labels) {
            let line = JsonRow {
                unit_id: id.clone(),
                label: *label,
                values: row.clone(),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(schema: FeatureSchema, text: &str) -> Result<FeatureMatrix> {
        let mut m = FeatureMatrix::new(schema);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: JsonRow = serde_json::from_str(line).map_err(|e| Error::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
            if row.values.len() != m.schema.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row at line {} has {} values, schema has {}",
                    i + 1,
                    row.values.len(),
                    m.schema.len()
                )));
            }
            m.unit_ids.push(row.unit_id);
            m.labels.push(row.label);
            m.rows.push(row.values);
        }
        Ok(m)
    }
}

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::schema::{strip_comment, AttributeSchema};
use crate::error::{parse_err, Error, Result};

/// First id handed out to non-numeric identity tokens. Numeric ids must stay below it.
pub const NAMED_ID_BASE: u32 = 1 << 31;

/// Maps string identity tokens onto dataset-scoped integers.
///
/// Plain non-negative integers pass through unchanged. Any other token gets
/// the next free id from [`NAMED_ID_BASE`] upwards, so sharing one dictionary
/// between the annotation and manifest parsers keeps their ids consistent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityDictionary {
    names: BTreeMap<String, u32>,
}

impl IdentityDictionary {
    pub fn resolve(&mut self, token: &str) -> std::result::Result<u32, String> {
        if let Ok(v) = token.parse::<u64>() {
            return if v < u64::from(NAMED_ID_BASE) {
                Ok(v as u32)
            } else {
                Err(format!("numeric identity {v} too large"))
            };
        }
        if token.starts_with('-') || token.is_empty() {
            return Err(format!("invalid identity token '{token}'"));
        }
        let next = NAMED_ID_BASE + self.names.len() as u32;
        Ok(*self.names.entry(token.to_string()).or_insert(next))
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        self.names
            .iter()
            .find(|(_, &v)| v == id)
            .map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Identity-level attribute labels: one row of M class indices per identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTable {
    num_attributes: usize,
    rows: BTreeMap<u32, Vec<usize>>,
}

impl AnnotationTable {
    pub fn new(schema: &AttributeSchema) -> Self {
        Self {
            num_attributes: schema.len(),
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, schema: &AttributeSchema, id: u32, labels: Vec<usize>) -> Result<()> {
        if labels.len() != schema.len() {
            return Err(Error::Annotation(format!(
                "identity {id}: {} labels for {} attributes",
                labels.len(),
                schema.len()
            )));
        }
        for (a, (&l, def)) in labels.iter().zip(schema.attributes()).enumerate() {
            if l >= def.num_classes() {
                return Err(Error::Annotation(format!(
                    "identity {id}: class {l} out of range for attribute {a} ('{}')",
                    def.name
                )));
            }
        }
        if self.rows.contains_key(&id) {
            return Err(Error::Annotation(format!("duplicate identity {id}")));
        }
        self.rows.insert(id, labels);
        Ok(())
    }

    pub fn get(&self, id: u32) -> Option<&[usize]> {
        self.rows.get(&id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_attributes(&self) -> usize {
        self.num_attributes
    }

    /// Rows in ascending identity order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &[usize])> {
        self.rows.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    /// Serializes with class names, one identity per line.
    pub fn to_text(&self, schema: &AttributeSchema) -> String {
        let mut out = String::new();
        for (id, labels) in self.iter() {
            let _ = write!(out, "{id}");
            for (l, def) in labels.iter().zip(schema.attributes()) {
                let _ = write!(out, " {}", def.classes[*l]);
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_annotations(text: &str, schema: &AttributeSchema) -> Result<AnnotationTable> {
    parse_annotations_with(text, schema, &mut IdentityDictionary::default())
}

/// Parses `identity label_1 ... label_M` rows. Labels are class names or class indices.
pub fn parse_annotations_with(
    text: &str,
    schema: &AttributeSchema,
    dict: &mut IdentityDictionary,
) -> Result<AnnotationTable> {
    let mut table = AnnotationTable::new(schema);
    let mut first_line: HashMap<u32, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut tokens = strip_comment(raw).split_whitespace();
        let Some(id_tok) = tokens.next() else {
            continue;
        };
        let id = dict.resolve(id_tok).map_err(|m| parse_err(line_no, m))?;
        let labels: Vec<&str> = tokens.collect();
        if labels.len() != schema.len() {
            return Err(parse_err(
                line_no,
                format!(
                    "expected {} attribute labels, found {}",
                    schema.len(),
                    labels.len()
                ),
            ));
        }
        let mut row = Vec::with_capacity(labels.len());
        for (tok, def) in labels.iter().zip(schema.attributes()) {
            let class = def
                .class_index(tok)
                .or_else(|| tok.parse::<usize>().ok().filter(|&i| i < def.num_classes()))
                .ok_or_else(|| {
                    parse_err(
                        line_no,
                        format!("unknown class '{tok}' for attribute '{}'", def.name),
                    )
                })?;
            row.push(class);
        }
        if let Some(prev) = first_line.insert(id, line_no) {
            return Err(parse_err(
                line_no,
                format!("duplicate identity {id_tok} (first on line {prev})"),
            ));
        }
        table.insert(schema, id, row)?;
    }
    Ok(table)
}

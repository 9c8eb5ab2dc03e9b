use std::collections::HashSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub classes: Vec<String>,
}

impl AttributeDef {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }
}

/// Ordered attribute list. Attribute `i` has `classes(i)` classes, always ≥ 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    attributes: Vec<AttributeDef>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<AttributeDef>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Schema("no attributes".into()));
        }
        let mut names = HashSet::new();
        for a in &attributes {
            validate_attribute(a)?;
            if !names.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute '{}'", a.name)));
            }
        }
        Ok(Self { attributes })
    }

    pub fn attributes(&self) -> &[AttributeDef] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.attributes
            .iter()
            .map(AttributeDef::num_classes)
            .collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.attributes {
            let _ = writeln!(out, "{}: {}", a.name, a.classes.join(","));
        }
        out
    }
}

fn validate_attribute(a: &AttributeDef) -> Result<()> {
    if a.name.is_empty() || a.name.contains([':', ',']) || a.name.contains(char::is_whitespace) {
        return Err(Error::Schema(format!("bad attribute name '{}'", a.name)));
    }
    if a.classes.len() < 2 {
        return Err(Error::Schema(format!(
            "attribute '{}' needs at least 2 classes, has {}",
            a.name,
            a.classes.len()
        )));
    }
    let mut seen = HashSet::new();
    for c in &a.classes {
        if c.is_empty() || c.contains([',', ':']) || c.contains(char::is_whitespace) {
            return Err(Error::Schema(format!(
                "bad class name '{c}' in '{}'",
                a.name
            )));
        }
        if !seen.insert(c.as_str()) {
            return Err(Error::Schema(format!(
                "duplicate class '{c}' in '{}'",
                a.name
            )));
        }
    }
    Ok(())
}

/// Parses `name: class0,class1[,...]` lines. `#` starts a comment.
pub fn parse_schema(text: &str) -> Result<AttributeSchema> {
    let mut attributes: Vec<AttributeDef> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (name, classes) = line
            .split_once(':')
            .ok_or_else(|| parse_err(line_no, "expected 'name: class0,class1'"))?;
        let def = AttributeDef {
            name: name.trim().to_string(),
            classes: classes.split(',').map(|c| c.trim().to_string()).collect(),
        };
        validate_attribute(&def).map_err(|e| parse_err(line_no, e.to_string()))?;
        if attributes.iter().any(|a| a.name == def.name) {
            return Err(parse_err(
                line_no,
                format!("duplicate attribute '{}'", def.name),
            ));
        }
        attributes.push(def);
    }
    AttributeSchema::new(attributes)
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

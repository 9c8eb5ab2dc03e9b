use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::annotations::{AnnotationTable, IdentityDictionary};
use super::schema::strip_comment;
use crate::error::{parse_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Identity {
    Person(u32),
    /// Background or unrelated pedestrian. Ranked as a negative.
    Distractor,
    /// Unusable detection. Ignored by scoring entirely.
    Junk,
}

impl Identity {
    pub fn person(self) -> Option<u32> {
        match self {
            Identity::Person(id) => Some(id),
            _ => None,
        }
    }

    pub fn is_person(self) -> bool {
        matches!(self, Identity::Person(_))
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Identity::Person(id) => write!(f, "{id}"),
            Identity::Distractor => f.write_str("-1"),
            Identity::Junk => f.write_str("-2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    ValidationQuery,
    ValidationGallery,
    Query,
    Gallery,
}

impl Split {
    pub const ALL: [Split; 5] = [
        Split::Train,
        Split::ValidationQuery,
        Split::ValidationGallery,
        Split::Query,
        Split::Gallery,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValidationQuery => "vquery",
            Split::ValidationGallery => "vgallery",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }

    pub fn is_gallery(self) -> bool {
        matches!(self, Split::Gallery | Split::ValidationGallery)
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.token() == s)
            .ok_or_else(|| format!("unknown split '{s}'"))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub identity: Identity,
    pub camera: u16,
    pub split: Split,
    /// Row in the attached embedding matrix.
    pub feature: Option<usize>,
}

impl Sample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.camera == 0 {
            return Err(format!("sample {}: camera ids start at 1", self.id));
        }
        if !self.identity.is_person() && !self.split.is_gallery() {
            return Err(format!(
                "sample {}: {} identity not allowed in split '{}'",
                self.id,
                if self.identity == Identity::Junk {
                    "junk"
                } else {
                    "distractor"
                },
                self.split
            ));
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<Sample>> {
    parse_manifest_with(text, &mut IdentityDictionary::default())
}

/// Parses `sample_id identity camera split` rows; identity `-1` is a distractor, `-2` junk.
pub fn parse_manifest_with(text: &str, dict: &mut IdentityDictionary) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let tokens: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected 4 fields, found {}", tokens.len()),
            ));
        }
        let id: u64 = tokens[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad sample id '{}'", tokens[0])))?;
        let identity = match tokens[1] {
            "-1" => Identity::Distractor,
            "-2" => Identity::Junk,
            tok => Identity::Person(dict.resolve(tok).map_err(|m| parse_err(line_no, m))?),
        };
        let camera: u16 = tokens[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad camera '{}'", tokens[2])))?;
        let split: Split = tokens[3].parse().map_err(|m| parse_err(line_no, m))?;
        let sample = Sample {
            id,
            identity,
            camera,
            split,
            feature: None,
        };
        sample.validate().map_err(|m| parse_err(line_no, m))?;
        if !ids.insert(id) {
            return Err(parse_err(line_no, format!("duplicate sample id {id}")));
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn manifest_to_text(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        let _ = writeln!(out, "{} {} {} {}", s.id, s.identity, s.camera, s.split);
    }
    out
}

/// The identity-level attribute vector of `sample`.
pub fn instance_labels<'a>(
    sample: &Sample,
    annotations: &'a AnnotationTable,
) -> Result<&'a [usize]> {
    match sample.identity {
        Identity::Person(id) => annotations.get(id).ok_or(Error::MissingAnnotation(id)),
        _ => Err(Error::Unlabeled(sample.id)),
    }
}

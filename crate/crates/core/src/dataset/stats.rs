use serde::Serialize;

use super::annotations::AnnotationTable;
use super::schema::AttributeSchema;
use crate::error::{Error, Result};

/// Number of identities in each class, per attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeDistribution {
    pub attributes: Vec<String>,
    pub classes: Vec<Vec<String>>,
    pub counts: Vec<Vec<usize>>,
    pub identities: usize,
}

pub fn attribute_distribution(
    annotations: &AnnotationTable,
    schema: &AttributeSchema,
) -> AttributeDistribution {
    let mut counts: Vec<Vec<usize>> = schema
        .attributes()
        .iter()
        .map(|a| vec![0; a.num_classes()])
        .collect();
    for (_, row) in annotations.iter() {
        for (a, &c) in row.iter().enumerate() {
            counts[a][c] += 1;
        }
    }
    AttributeDistribution {
        attributes: schema.attributes().iter().map(|a| a.name.clone()).collect(),
        classes: schema
            .attributes()
            .iter()
            .map(|a| a.classes.clone())
            .collect(),
        counts,
        identities: annotations.len(),
    }
}

/// Binary indicator columns: one per binary attribute (its first class), one per
/// class of a multi-class attribute.
pub fn indicator_columns(schema: &AttributeSchema) -> Vec<(usize, usize, String)> {
    let mut cols = Vec::new();
    for (a, def) in schema.attributes().iter().enumerate() {
        if def.num_classes() == 2 {
            cols.push((a, 0, format!("{}={}", def.name, def.classes[0])));
        } else {
            for (c, name) in def.classes.iter().enumerate() {
                cols.push((a, c, format!("{}={}", def.name, name)));
            }
        }
    }
    cols
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeCorrelation {
    pub statistic: &'static str,
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    /// Indicators that never vary across identities. Their off-diagonal entries are 0.
    pub constant: Vec<String>,
}

/// Phi coefficients between binarized attribute indicators over identities.
pub fn attribute_correlation(
    annotations: &AnnotationTable,
    schema: &AttributeSchema,
) -> Result<AttributeCorrelation> {
    let n = annotations.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "correlation needs at least 2 identities, have {n}"
        )));
    }
    let cols = indicator_columns(schema);
    let k = cols.len();
    let mut x = vec![vec![0f64; n]; k];
    for (r, (_, row)) in annotations.iter().enumerate() {
        for (j, &(a, c, _)) in cols.iter().enumerate() {
            x[j][r] = if row[a] == c { 1.0 } else { 0.0 };
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = x.iter().map(|v| v.iter().sum::<f64>() / nf).collect();
    let centered: Vec<Vec<f64>> = x
        .iter()
        .zip(&mean)
        .map(|(v, m)| v.iter().map(|e| e - m).collect())
        .collect();
    let ss: Vec<f64> = centered
        .iter()
        .map(|v| v.iter().map(|e| e * e).sum())
        .collect();

    let mut constant = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        if ss[j] == 0.0 {
            log::warn!("indicator '{}' is constant; correlation set to 0", col.2);
            constant.push(col.2.clone());
        }
    }

    let mut matrix = vec![vec![0f64; k]; k];
    for i in 0..k {
        matrix[i][i] = 1.0;
        for j in (i + 1)..k {
            let r = if ss[i] == 0.0 || ss[j] == 0.0 {
                0.0
            } else {
                let cov: f64 = centered[i]
                    .iter()
                    .zip(&centered[j])
                    .map(|(a, b)| a * b)
                    .sum();
                (cov / (ss[i] * ss[j]).sqrt()).clamp(-1.0, 1.0)
            };
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    Ok(AttributeCorrelation {
        statistic: "phi",
        labels: cols.into_iter().map(|c| c.2).collect(),
        matrix,
        constant,
    })
}

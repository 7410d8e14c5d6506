use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of sensitive attributes and the number of groups of each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    group_counts: Vec<usize>,
}

impl AttributeSchema {
    pub fn new(group_counts: Vec<usize>) -> Result<Self> {
        if group_counts.is_empty() {
            return Err(Error::SchemaViolation(
                "at least one sensitive attribute is required".into(),
            ));
        }
        if let Some((r, &g)) = group_counts.iter().enumerate().find(|(_, &g)| g < 2) {
            return Err(Error::SchemaViolation(format!(
                "attribute {} has {g} group(s); one-vs-rest contrasts need at least 2",
                r + 1
            )));
        }
        Ok(AttributeSchema { group_counts })
    }

    /// One binary attribute.
    pub fn binary() -> Self {
        AttributeSchema {
            group_counts: vec![2],
        }
    }

    pub fn attribute_count(&self) -> usize {
        self.group_counts.len()
    }

    pub fn group_counts(&self) -> &[usize] {
        &self.group_counts
    }

    pub fn is_binary(&self) -> bool {
        self.group_counts == [2]
    }

    /// Checks that `attributes` is a valid group assignment.
    pub fn check(&self, attributes: &[usize]) -> Result<()> {
        if attributes.len() != self.group_counts.len() {
            return Err(Error::SchemaViolation(format!(
                "{} attribute values for a schema of {} attributes",
                attributes.len(),
                self.group_counts.len()
            )));
        }
        for (r, (&a, &g)) in attributes.iter().zip(&self.group_counts).enumerate() {
            if a >= g {
                return Err(Error::SchemaViolation(format!(
                    "attribute {} has group index {a}, expected < {g}",
                    r + 1
                )));
            }
        }
        Ok(())
    }
}

/// One stream element: group indices (0-based, one per attribute) and a
/// feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub attributes: Vec<usize>,
    pub features: Vec<f64>,
}

impl LabeledSample {
    pub fn new(attributes: Vec<usize>, features: Vec<f64>) -> Self {
        LabeledSample {
            attributes,
            features,
        }
    }

    /// Single binary attribute.
    pub fn binary(group: usize, features: Vec<f64>) -> Self {
        LabeledSample {
            attributes: vec![group],
            features,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// Group index of the first attribute.
    pub fn group(&self) -> usize {
        self.attributes[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_validation() {
        assert!(AttributeSchema::new(vec![]).is_err());
        assert!(matches!(
            AttributeSchema::new(vec![2, 1]),
            Err(Error::SchemaViolation(_))
        ));
        let s = AttributeSchema::new(vec![2, 3]).unwrap();
        assert!(s.check(&[1, 2]).is_ok());
        assert!(s.check(&[2, 0]).is_err());
        assert!(s.check(&[0]).is_err());
        assert!(AttributeSchema::binary().is_binary());
    }
}

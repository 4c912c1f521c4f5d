use std::fmt::Write as _;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

/// Responses with optional covariates, tagged with the experiment that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub responses: Vec<f64>,
    pub covariates: Option<Matrix<f64>>,
    pub tag: String,
}

impl Dataset {
    pub fn new(responses: Vec<f64>, covariates: Option<Matrix<f64>>, tag: impl Into<String>) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::InvalidArgument("dataset needs at least one response".into()));
        }
        if let Some(x) = &covariates {
            check_dim(responses.len(), x.rows())?;
        }
        Ok(Self { responses, covariates, tag: tag.into() })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub(crate) fn design(&self) -> Result<&Matrix<f64>> {
        self.covariates
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("{} dataset has no covariates", self.tag)))
    }

    /// Header `y,x1,...,xp`, one observation per line.
    pub fn to_csv(&self) -> String {
        let p = self.covariates.as_ref().map_or(0, Matrix::cols);
        let mut out = String::from("y");
        for j in 1..=p {
            let _ = write!(out, ",x{j}");
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(out, "{}", self.responses[i]);
            if let Some(x) = &self.covariates {
                for v in x.row(i) {
                    let _ = write!(out, ",{v}");
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let x = Matrix::from_rows(&[vec![1.0, 0.5], vec![1.0, -2.0]]).unwrap();
        let d = Dataset::new(vec![3.0, 4.5], Some(x), "t").unwrap();
        assert_eq!(d.to_csv(), "y,x1,x2\n3,1,0.5\n4.5,1,-2\n");
        assert_eq!(Dataset::new(vec![1.0], None, "t").unwrap().to_csv(), "y\n1\n");
    }

    #[test]
    fn shape_checks() {
        assert!(Dataset::new(vec![], None, "t").is_err());
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(Dataset::new(vec![1.0, 2.0], Some(x), "t").is_err());
    }
}

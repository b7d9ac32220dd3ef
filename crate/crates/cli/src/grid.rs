//! Rectangular grids of initial states for sweeps and value tables.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("invalid grid `{text}`: {reason}")]
pub struct GridError {
    pub text: String,
    pub reason: String,
}

/// Per-coordinate `(lo, hi, count)` ranges; the grid is their cartesian
/// product with the first coordinate varying slowest.
#[derive(Debug, Clone)]
pub struct GridSpec(pub Vec<(f64, f64, usize)>);

impl GridSpec {
    /// Parse a `lo:hi:count,lo:hi:count,...` description.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let err = |reason: &str| GridError {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let mut axes = Vec::new();
        for part in text.split(',') {
            let fields: Vec<&str> = part.split(':').collect();
            if fields.len() != 3 {
                return Err(err("each axis needs lo:hi:count"));
            }
            let lo: f64 = fields[0].trim().parse().map_err(|_| err("bad lower bound"))?;
            let hi: f64 = fields[1].trim().parse().map_err(|_| err("bad upper bound"))?;
            let count: usize = fields[2].trim().parse().map_err(|_| err("bad count"))?;
            if count < 1 {
                return Err(err("count must be at least 1"));
            }
            if lo > hi {
                return Err(err("lower bound exceeds upper bound"));
            }
            axes.push((lo, hi, count));
        }
        if axes.is_empty() {
            return Err(err("empty grid"));
        }
        Ok(GridSpec(axes))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|&(_, _, c)| c).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All grid points in row-major order (last coordinate fastest).
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![]];
        for &(lo, hi, count) in &self.0 {
            let axis: Vec<f64> = (0..count)
                .map(|i| {
                    if count == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (count - 1) as f64
                    }
                })
                .collect();
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_enumerates_in_row_major_order() {
        let grid = GridSpec::parse("0:1:2,5:7:3").unwrap();
        assert_eq!(grid.len(), 6);
        let points = grid.points();
        assert_eq!(points[0], vec![0.0, 5.0]);
        assert_eq!(points[1], vec![0.0, 6.0]);
        assert_eq!(points[2], vec![0.0, 7.0]);
        assert_eq!(points[3], vec![1.0, 5.0]);
        assert_eq!(points[5], vec![1.0, 7.0]);
    }

    #[test]
    fn single_point_axes() {
        let grid = GridSpec::parse("2:2:1").unwrap();
        assert_eq!(grid.points(), vec![vec![2.0]]);
    }

    #[test]
    fn endpoint_inclusive_spacing() {
        let grid = GridSpec::parse("-6:2:41").unwrap();
        let points = grid.points();
        assert_eq!(points.len(), 41);
        assert!((points[0][0] + 6.0).abs() < 1e-12);
        assert!((points[40][0] - 2.0).abs() < 1e-12);
        assert!((points[1][0] + 5.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        assert!(GridSpec::parse("1:2").is_err());
        assert!(GridSpec::parse("2:1:5").is_err());
        assert!(GridSpec::parse("0:1:0").is_err());
        assert!(GridSpec::parse("a:1:2").is_err());
    }
}

//! Dataset ingestion, covariate typing, outcome standardization, dummy
//! encoding and cutpoint-grid construction shared by all samplers.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariate type of a single column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    Binary,
    /// Unordered categorical with levels in first-appearance order.
    Categorical(Vec<String>),
}

impl ColumnKind {
    pub fn parse_spec(s: &str) -> Result<ColumnKind> {
        match s {
            "continuous" | "cont" => Ok(ColumnKind::Continuous),
            "binary" | "bin" => Ok(ColumnKind::Binary),
            "categorical" | "cat" => Ok(ColumnKind::Categorical(Vec::new())),
            other => Err(Error::validation(format!(
                "unknown column kind `{other}` (expected continuous|binary|categorical)"
            ))),
        }
    }
}

/// One covariate column. Categorical values are stored as level indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
}

/// An ingested dataset: outcome, binary treatment, typed covariates and an
/// optional vector of propensity estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub z: Vec<u8>,
    pub x: Vec<Column>,
    pub pi_hat: Option<Vec<f64>>,
    pub y_mean: f64,
    pub y_sd: f64,
}

/// Affine map from the standardized outcome scale back to raw units:
/// `raw = shift + scale * std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: f64,
}

impl AffineMap {
    pub fn apply(&self, v: f64) -> f64 {
        self.shift + self.scale * v
    }

    /// Maps a treatment-effect-like quantity (scale only, no shift).
    pub fn apply_scale(&self, v: f64) -> f64 {
        self.scale * v
    }
}

/// Where a design column came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOrigin {
    /// Index of the source column in `Dataset::x`, or `None` for columns
    /// appended by a model (treatment, propensity estimate).
    pub source: Option<usize>,
    pub name: String,
    /// Categorical level label for indicator columns.
    pub level: Option<String>,
}

/// Numeric design matrix: continuous columns passed through, categorical
/// columns expanded into one 0/1 indicator per level.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<Vec<f64>>,
    pub origin: Vec<DesignOrigin>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    /// Appends a column and returns its index.
    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> usize {
        self.columns.push(values);
        self.origin.push(DesignOrigin {
            source: None,
            name: name.to_string(),
            level: None,
        });
        self.columns.len() - 1
    }
}

/// Per-design-column ascending candidate split thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct CutpointGrid {
    pub cuts: Vec<Vec<f64>>,
}

impl CutpointGrid {
    pub fn n_cols(&self) -> usize {
        self.cuts.len()
    }
}

fn sample_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = sample_mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Builds a dataset from already-typed columns, computing the
    /// standardization constants and checking the invariants.
    pub fn new(
        y: Vec<f64>,
        z: Vec<u8>,
        x: Vec<Column>,
        pi_hat: Option<Vec<f64>>,
    ) -> Result<Dataset> {
        let n = y.len();
        if n < 2 {
            return Err(Error::validation("dataset must have at least 2 rows"));
        }
        if z.len() != n {
            return Err(Error::validation("treatment length does not match outcome"));
        }
        if z.iter().any(|&v| v > 1) {
            return Err(Error::validation("treatment values must be 0 or 1"));
        }
        for col in &x {
            if col.values.len() != n {
                return Err(Error::validation(format!(
                    "column {} has length {} but n = {}",
                    col.name,
                    col.values.len(),
                    n
                )));
            }
            if let ColumnKind::Categorical(levels) = &col.kind {
                if levels.len() < 2 {
                    return Err(Error::validation(format!(
                        "categorical column {} must have at least 2 levels",
                        col.name
                    )));
                }
            }
            if col.kind == ColumnKind::Binary
                && col.values.iter().any(|&v| v != 0.0 && v != 1.0)
            {
                return Err(Error::validation(format!(
                    "binary column {} contains values other than 0/1",
                    col.name
                )));
            }
        }
        if let Some(p) = &pi_hat {
            if p.len() != n {
                return Err(Error::validation("pi_hat length does not match outcome"));
            }
            if p.iter().any(|&v| v <= 0.0 || v >= 1.0) {
                return Err(Error::validation("pi_hat entries must lie in (0, 1)"));
            }
        }
        let y_mean = sample_mean(&y);
        let y_sd = sample_sd(&y);
        if !(y_sd > 0.0) {
            return Err(Error::validation("constant outcome: y_sd = 0"));
        }
        Ok(Dataset {
            y,
            z,
            x,
            pi_hat,
            y_mean,
            y_sd,
        })
    }

    /// Checks that both treatment arms are nonempty (required when fitting
    /// treatment-effect models).
    pub fn require_both_arms(&self) -> Result<()> {
        let treated = self.z.iter().filter(|&&z| z == 1).count();
        if treated == 0 || treated == self.n() {
            return Err(Error::validation(
                "both treatment arms must be nonempty",
            ));
        }
        Ok(())
    }

    /// Standardizes the outcome to sample mean 0 and sample sd 1, returning
    /// the standardized vector and the inverse affine map.
    pub fn standardize(&self) -> (Vec<f64>, AffineMap) {
        let y_std = self
            .y
            .iter()
            .map(|&v| (v - self.y_mean) / self.y_sd)
            .collect();
        (
            y_std,
            AffineMap {
                scale: self.y_sd,
                shift: self.y_mean,
            },
        )
    }

    /// Dummy-encodes the covariates into a numeric design matrix.
    pub fn design(&self) -> DesignMatrix {
        let mut columns = Vec::new();
        let mut origin = Vec::new();
        for (j, col) in self.x.iter().enumerate() {
            match &col.kind {
                ColumnKind::Continuous | ColumnKind::Binary => {
                    columns.push(col.values.clone());
                    origin.push(DesignOrigin {
                        source: Some(j),
                        name: col.name.clone(),
                        level: None,
                    });
                }
                ColumnKind::Categorical(levels) => {
                    for (li, level) in levels.iter().enumerate() {
                        let ind = col
                            .values
                            .iter()
                            .map(|&v| if v as usize == li { 1.0 } else { 0.0 })
                            .collect();
                        columns.push(ind);
                        origin.push(DesignOrigin {
                            source: Some(j),
                            name: format!("{}={}", col.name, level),
                            level: Some(level.clone()),
                        });
                    }
                }
            }
        }
        DesignMatrix { columns, origin }
    }

    /// Writes the dataset back out as CSV (used by `simulate` and by the
    /// ingestion round-trip property).
    pub fn write_csv(
        &self,
        path: &Path,
        outcome: &str,
        treatment: &str,
        propensity: Option<&str>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![outcome.to_string(), treatment.to_string()];
        for col in &self.x {
            header.push(col.name.clone());
        }
        if let Some(p) = propensity {
            header.push(p.to_string());
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![format!("{}", self.y[i]), format!("{}", self.z[i])];
            for col in &self.x {
                match &col.kind {
                    ColumnKind::Categorical(levels) => {
                        rec.push(levels[col.values[i] as usize].clone())
                    }
                    _ => rec.push(format!("{}", col.values[i])),
                }
            }
            if propensity.is_some() {
                rec.push(format!("{}", self.pi_hat.as_ref().unwrap()[i]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a dataset from a headered CSV file.
///
/// Column kinds are inferred unless given in `schema`: numeric columns whose
/// distinct values are exactly {0,1} become `Binary`, other numeric columns
/// `Continuous`, and non-numeric columns `Categorical` with levels in
/// first-appearance order.
pub fn load_csv(
    path: &Path,
    outcome: &str,
    treatment: &str,
    propensity: Option<&str>,
    schema: &[(String, ColumnKind)],
) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_idx = find(outcome)?;
    let z_idx = find(treatment)?;
    let pi_idx = propensity.map(find).transpose()?;
    for (name, _) in schema {
        find(name)?;
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|s| s.to_string()).collect());
    }
    if rows.len() < 2 {
        return Err(Error::validation("dataset must have at least 2 rows"));
    }

    let mut y = Vec::with_capacity(rows.len());
    let mut z = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let ys = &row[y_idx];
        if ys.is_empty() {
            return Err(Error::validation(format!("missing outcome in row {i}")));
        }
        y.push(ys.parse::<f64>().map_err(|_| {
            Error::validation(format!("non-numeric outcome `{ys}` in row {i}"))
        })?);
        match row[z_idx].as_str() {
            "0" => z.push(0u8),
            "1" => z.push(1u8),
            other => {
                return Err(Error::validation(format!(
                    "treatment value `{other}` in row {i} is not 0/1"
                )))
            }
        }
    }

    let mut x = Vec::new();
    for (ci, name) in headers.iter().enumerate() {
        if ci == y_idx || ci == z_idx || Some(ci) == pi_idx {
            continue;
        }
        let raw: Vec<&str> = rows.iter().map(|r| r[ci].as_str()).collect();
        if let Some(pos) = raw.iter().position(|s| s.is_empty()) {
            return Err(Error::validation(format!(
                "missing value in column {name}, row {pos}"
            )));
        }
        let declared = schema
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, k)| k.clone());
        x.push(type_column(name, &raw, declared)?);
    }

    let pi_hat = match pi_idx {
        Some(ci) => {
            let mut p = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                let v: f64 = row[ci].parse().map_err(|_| {
                    Error::validation(format!("non-numeric propensity in row {i}"))
                })?;
                p.push(v);
            }
            Some(p)
        }
        None => None,
    };

    Dataset::new(y, z, x, pi_hat)
}

fn type_column(name: &str, raw: &[&str], declared: Option<ColumnKind>) -> Result<Column> {
    let numeric: Option<Vec<f64>> = raw
        .iter()
        .map(|s| s.parse::<f64>().ok())
        .collect();

    let as_categorical = |raw: &[&str]| -> Column {
        let mut levels: Vec<String> = Vec::new();
        let values = raw
            .iter()
            .map(|s| {
                match levels.iter().position(|l| l == s) {
                    Some(i) => i as f64,
                    None => {
                        levels.push(s.to_string());
                        (levels.len() - 1) as f64
                    }
                }
            })
            .collect();
        Column {
            name: name.to_string(),
            kind: ColumnKind::Categorical(levels),
            values,
        }
    };

    match declared {
        Some(ColumnKind::Continuous) => {
            let values = numeric.ok_or_else(|| {
                Error::validation(format!("column {name} declared continuous but is non-numeric"))
            })?;
            Ok(Column {
                name: name.to_string(),
                kind: ColumnKind::Continuous,
                values,
            })
        }
        Some(ColumnKind::Binary) => {
            let values = numeric.ok_or_else(|| {
                Error::validation(format!("column {name} declared binary but is non-numeric"))
            })?;
            if values.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::validation(format!(
                    "column {name} declared binary but contains values other than 0/1"
                )));
            }
            Ok(Column {
                name: name.to_string(),
                kind: ColumnKind::Binary,
                values,
            })
        }
        Some(ColumnKind::Categorical(_)) => Ok(as_categorical(raw)),
        None => match numeric {
            Some(values) => {
                let distinct: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
                let is_01 = values.iter().all(|&v| v == 0.0 || v == 1.0);
                if is_01 && distinct.len() == 2 {
                    Ok(Column {
                        name: name.to_string(),
                        kind: ColumnKind::Binary,
                        values,
                    })
                } else {
                    Ok(Column {
                        name: name.to_string(),
                        kind: ColumnKind::Continuous,
                        values,
                    })
                }
            }
            None => Ok(as_categorical(raw)),
        },
    }
}

/// Type-7 quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Builds the candidate-threshold grid for a design matrix.
///
/// Indicator (0/1) columns get the single cutpoint 0.5; continuous columns
/// get at most `max_cuts` thresholds at equally spaced quantiles of the
/// observed values, deduplicated and kept strictly inside the column range.
/// Columns with a single distinct value get an empty grid.
pub fn build_cutpoints(dm: &DesignMatrix, max_cuts: usize) -> CutpointGrid {
    assert!(max_cuts >= 1, "max_cuts must be >= 1");
    let cuts = dm
        .columns
        .iter()
        .map(|col| column_cutpoints(col, max_cuts))
        .collect();
    CutpointGrid { cuts }
}

fn column_cutpoints(col: &[f64], max_cuts: usize) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= 1 {
        return Vec::new();
    }
    if distinct.len() == 2 && distinct[0] == 0.0 && distinct[1] == 1.0 {
        return vec![0.5];
    }
    let k = max_cuts.min(distinct.len() - 1);
    let lo = distinct[0];
    let hi = *distinct.last().unwrap();
    let mut out = Vec::with_capacity(k);
    for j in 1..=k {
        let q = j as f64 / (k + 1) as f64;
        let t = quantile_sorted(&sorted, q);
        if t > lo && t < hi && out.last() != Some(&t) {
            out.push(t);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!(
            "bcf_data_test_{}_{}.csv",
            std::process::id(),
            rand::random::<u64>()
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn load_csv_three_rows() {
        let p = write_temp("y,z,x1\n1,0,0.5\n2,1,1.5\n3,0,2.5\n");
        let ds = load_csv(&p, "y", "z", None, &[]).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.y_mean, 2.0);
        assert_eq!(ds.y_sd, 1.0);
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn load_csv_nonbinary_treatment() {
        let p = write_temp("y,z,x1\n1,0,0.5\n2,2,1.5\n");
        let err = load_csv(&p, "y", "z", None, &[]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn load_csv_missing_column() {
        let p = write_temp("y,z\n1,0\n2,1\n");
        let err = load_csv(&p, "y", "treat", None, &[]).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(_)));
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn load_csv_missing_cell() {
        let p = write_temp("y,z,x1\n1,0,0.5\n2,1,\n");
        assert!(load_csv(&p, "y", "z", None, &[]).is_err());
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn load_csv_constant_outcome() {
        let p = write_temp("y,z,x1\n1,0,0.5\n1,1,1.5\n");
        assert!(load_csv(&p, "y", "z", None, &[]).is_err());
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn inferred_kinds_match_sim_study_shape() {
        let p = write_temp(
            "y,z,x1,x2,x3,x4,x5\n\
             1,0,0.1,0.2,0.3,0,a\n\
             2,1,1.1,1.2,1.3,1,b\n\
             3,0,2.1,2.2,2.3,0,c\n\
             4,1,3.1,3.2,3.3,1,a\n",
        );
        let ds = load_csv(&p, "y", "z", None, &[]).unwrap();
        assert_eq!(ds.x[0].kind, ColumnKind::Continuous);
        assert_eq!(ds.x[1].kind, ColumnKind::Continuous);
        assert_eq!(ds.x[2].kind, ColumnKind::Continuous);
        assert_eq!(ds.x[3].kind, ColumnKind::Binary);
        assert_eq!(
            ds.x[4].kind,
            ColumnKind::Categorical(vec!["a".into(), "b".into(), "c".into()])
        );
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn standardize_round_trip() {
        let ds = Dataset::new(
            vec![10.0, 10.0, 13.0],
            vec![0, 1, 0],
            vec![Column {
                name: "x".into(),
                kind: ColumnKind::Continuous,
                values: vec![1.0, 2.0, 3.0],
            }],
            None,
        )
        .unwrap();
        let (y_std, inv) = ds.standardize();
        let m = y_std.iter().sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-12);
        for (i, &v) in y_std.iter().enumerate() {
            assert!((inv.apply(v) - ds.y[i]).abs() / ds.y[i].abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_identity_case() {
        // y already mean-0, sample-sd-1
        let y = vec![-1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
        let ds = Dataset::new(
            y.clone(),
            vec![0, 1],
            vec![Column {
                name: "x".into(),
                kind: ColumnKind::Continuous,
                values: vec![0.0, 1.0],
            }],
            None,
        )
        .unwrap();
        let (y_std, _) = ds.standardize();
        for i in 0..2 {
            assert!((y_std[i] - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cutpoints_indicator_and_constant() {
        let dm = DesignMatrix {
            columns: vec![vec![0.0, 1.0, 0.0, 1.0], vec![2.0, 2.0, 2.0, 2.0]],
            origin: vec![
                DesignOrigin { source: None, name: "b".into(), level: None },
                DesignOrigin { source: None, name: "c".into(), level: None },
            ],
        };
        let grid = build_cutpoints(&dm, 100);
        assert_eq!(grid.cuts[0], vec![0.5]);
        assert!(grid.cuts[1].is_empty());
    }

    #[test]
    fn cutpoints_separate_distinct_values() {
        let dm = DesignMatrix {
            columns: vec![vec![1.0, 2.0, 3.0, 4.0]],
            origin: vec![DesignOrigin { source: None, name: "x".into(), level: None }],
        };
        let grid = build_cutpoints(&dm, 100);
        let cuts = &grid.cuts[0];
        assert_eq!(cuts.len(), 3);
        // every threshold strictly inside (1, 4)
        assert!(cuts.iter().all(|&c| c > 1.0 && c < 4.0));
        // thresholds separate all four values: count distinct cells
        for pair in [(1.0, 2.0), (2.0, 3.0), (3.0, 4.0)] {
            assert!(
                cuts.iter().any(|&c| pair.0 <= c && c < pair.1),
                "no cut separates {:?}",
                pair
            );
        }
        // strictly increasing
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dummy_expansion_one_hot() {
        let ds = Dataset::new(
            vec![1.0, 2.0, 3.0],
            vec![0, 1, 0],
            vec![Column {
                name: "c".into(),
                kind: ColumnKind::Categorical(vec!["a".into(), "b".into(), "c".into()]),
                values: vec![0.0, 2.0, 1.0],
            }],
            None,
        )
        .unwrap();
        let dm = ds.design();
        assert_eq!(dm.n_cols(), 3);
        for i in 0..3 {
            let ones: f64 = (0..3).map(|j| dm.value(i, j)).sum();
            assert_eq!(ones, 1.0);
        }
    }

    #[test]
    fn csv_round_trip_idempotent() {
        let p = write_temp(
            "y,z,x1,x5\n1,0,0.5,a\n2.25,1,1.5,b\n3,0,2.5,a\n",
        );
        let ds = load_csv(&p, "y", "z", None, &[]).unwrap();
        let p2 = std::env::temp_dir().join(format!(
            "bcf_data_rt_{}_{}.csv",
            std::process::id(),
            rand::random::<u64>()
        ));
        ds.write_csv(&p2, "y", "z", None).unwrap();
        let ds2 = load_csv(&p2, "y", "z", None, &[]).unwrap();
        assert_eq!(ds, ds2);
        std::fs::remove_file(p).ok();
        std::fs::remove_file(p2).ok();
    }
}

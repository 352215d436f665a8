//! Multivariate functional samples observed on a common grid.
//!
//! A [`FunctionalDataset`] holds `n` subjects, each contributing `p` component
//! curves evaluated on the same [`TimeGrid`]. Integrals over the domain are
//! approximated with the grid's trapezoidal weights throughout the crate.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Ordered evaluation points in `[0, 1]` with trapezoidal quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        let t = points.len();
        if t < 2 {
            return Err(Error::GridMismatch(format!(
                "a grid needs at least 2 points, got {t}"
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::GridMismatch("grid contains non-finite points".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::GridMismatch(
                "grid points must be strictly increasing".into(),
            ));
        }
        if points[0] < 0.0 || points[t - 1] > 1.0 {
            return Err(Error::GridMismatch("grid points must lie in [0, 1]".into()));
        }
        let mut weights = vec![0.0; t];
        weights[0] = 0.5 * (points[1] - points[0]);
        weights[t - 1] = 0.5 * (points[t - 1] - points[t - 2]);
        for k in 1..t - 1 {
            weights[k] = 0.5 * (points[k + 1] - points[k - 1]);
        }
        Ok(Self { points, weights })
    }

    /// `len` equally spaced points from 0 to 1 inclusive.
    pub fn uniform(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::GridMismatch(format!(
                "a grid needs at least 2 points, got {len}"
            )));
        }
        let step = 1.0 / (len - 1) as f64;
        let mut points: Vec<f64> = (0..len).map(|k| k as f64 * step).collect();
        points[len - 1] = 1.0;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Quadrature approximation of `∫ f g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

/// `n × p` curves on a shared grid, stored subject-major then component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    grid: TimeGrid,
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl FunctionalDataset {
    /// `values[(i * p + j) * T + k]` is the observation of subject `i`,
    /// component `j` at grid point `k`.
    pub fn new(grid: TimeGrid, n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset needs at least one subject and component (n={n}, p={p})"
            )));
        }
        let expected = n * p * grid.len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let t = grid.len();
            return Err(Error::InvalidInput(format!(
                "non-finite value at subject {}, component {}, point {}",
                pos / (p * t),
                (pos / t) % p,
                pos % t
            )));
        }
        Ok(Self { grid, n, p, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_subjects(&self) -> usize {
        self.n
    }

    pub fn n_components(&self) -> usize {
        self.p
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn curve(&self, subject: usize, component: usize) -> &[f64] {
        let t = self.grid.len();
        let start = (subject * self.p + component) * t;
        &self.values[start..start + t]
    }

    /// New dataset restricted to the given subjects, in the given order.
    pub fn select_subjects(&self, subjects: &[usize]) -> Result<Self> {
        let t = self.grid.len();
        let mut values = Vec::with_capacity(subjects.len() * self.p * t);
        for &i in subjects {
            if i >= self.n {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.n,
                });
            }
            let start = i * self.p * t;
            values.extend_from_slice(&self.values[start..start + self.p * t]);
        }
        Self::new(self.grid.clone(), subjects.len(), self.p, values)
    }

    /// New dataset holding only component `j`.
    pub fn select_component(&self, j: usize) -> Result<Self> {
        if j >= self.p {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.p,
            });
        }
        let values = (0..self.n)
            .flat_map(|i| self.curve(i, j).iter().copied())
            .collect();
        Self::new(self.grid.clone(), self.n, 1, values)
    }

    /// Writes the wide layout: a `grid,...` header, then one row per
    /// `(subject, component)` using 1-based labels.
    pub fn write_wide_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        let mut header = vec!["grid".to_string()];
        header.extend(self.grid.points.iter().map(|t| format_float(*t)));
        out.write_record(&header).map_err(csv_io)?;
        for i in 0..self.n {
            for j in 0..self.p {
                let mut row = vec![(i + 1).to_string(), (j + 1).to_string()];
                row.extend(self.curve(i, j).iter().map(|v| format_float(*v)));
                out.write_record(&row).map_err(csv_io)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// 17 significant digits, enough for an exact round trip.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Column layout of an input CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvLayout {
    /// `subject,component,time,value`, one row per observation.
    Long,
    /// `grid,t1,...,tT` header, then `subject,component,v1,...,vT` rows.
    Wide,
}

pub fn load_csv(path: impl AsRef<Path>, layout: CsvLayout) -> Result<FunctionalDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, layout)
}

pub fn read_csv<R: Read>(reader: R, layout: CsvLayout) -> Result<FunctionalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    match layout {
        CsvLayout::Long => parse_long(&rows),
        CsvLayout::Wide => parse_wide(&rows),
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, line: usize, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from {field:?}"),
    })
}

fn parse_long(rows: &[(usize, csv::StringRecord)]) -> Result<FunctionalDataset> {
    let mut cells: BTreeMap<(i64, i64), Vec<(f64, f64)>> = BTreeMap::new();
    for (line, rec) in &rows[1..] {
        if rec.len() != 4 {
            return Err(Error::Parse {
                line: *line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let subject: i64 = parse_field(&rec[0], *line, "subject")?;
        let component: i64 = parse_field(&rec[1], *line, "component")?;
        let time: f64 = parse_field(&rec[2], *line, "time")?;
        let value: f64 = parse_field(&rec[3], *line, "value")?;
        if !time.is_finite() || !value.is_finite() {
            return Err(Error::Parse {
                line: *line,
                message: "non-finite time or value".into(),
            });
        }
        let curve = cells.entry((subject, component)).or_default();
        if curve.iter().any(|(t, _)| *t == time) {
            return Err(Error::Parse {
                line: *line,
                message: format!("duplicate observation for ({subject}, {component}, {time})"),
            });
        }
        curve.push((time, value));
    }
    if cells.is_empty() {
        return Err(Error::Parse {
            line: rows[0].0 + 1,
            message: "no observations".into(),
        });
    }
    for curve in cells.values_mut() {
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    // The reference grid is the most completely observed curve; any time
    // outside it means the curves do not share a grid.
    let reference: Vec<f64> = cells
        .values()
        .max_by_key(|c| c.len())
        .map(|c| c.iter().map(|(t, _)| *t).collect())
        .unwrap_or_default();
    let subjects: BTreeSet<i64> = cells.keys().map(|k| k.0).collect();
    let components: BTreeSet<i64> = cells.keys().map(|k| k.1).collect();
    let t_len = reference.len();
    let (n, p) = (subjects.len(), components.len());
    let mut values = vec![0.0; n * p * t_len];
    for (i, s) in subjects.iter().enumerate() {
        for (j, c) in components.iter().enumerate() {
            let Some(curve) = cells.get(&(*s, *c)) else {
                return Err(Error::MissingObservation {
                    subject: *s as usize,
                    component: *c as usize,
                    point: 1,
                });
            };
            let mut next = 0;
            for (k, t_ref) in reference.iter().enumerate() {
                match curve.get(next) {
                    Some((t, v)) if t == t_ref => {
                        values[(i * p + j) * t_len + k] = *v;
                        next += 1;
                    }
                    Some((t, _)) if !reference.contains(t) => {
                        return Err(Error::GridMismatch(format!(
                            "time {t} of subject {s}, component {c} is not on the shared grid"
                        )));
                    }
                    _ => {
                        return Err(Error::MissingObservation {
                            subject: *s as usize,
                            component: *c as usize,
                            point: k + 1,
                        });
                    }
                }
            }
        }
    }
    let grid = TimeGrid::new(reference)?;
    FunctionalDataset::new(grid, n, p, values)
}

fn parse_wide(rows: &[(usize, csv::StringRecord)]) -> Result<FunctionalDataset> {
    let (header_line, header) = &rows[0];
    if header.is_empty() || &header[0] != "grid" {
        return Err(Error::Parse {
            line: *header_line,
            message: "wide layout header must start with `grid`".into(),
        });
    }
    let points = header
        .iter()
        .skip(1)
        .map(|f| parse_field::<f64>(f, *header_line, "grid point"))
        .collect::<Result<Vec<_>>>()?;
    let grid = TimeGrid::new(points)?;
    let t_len = grid.len();

    let mut cells: BTreeMap<(i64, i64), (usize, Vec<Option<f64>>)> = BTreeMap::new();
    for (line, rec) in &rows[1..] {
        if rec.len() != t_len + 2 {
            return Err(Error::Parse {
                line: *line,
                message: format!("expected {} fields, found {}", t_len + 2, rec.len()),
            });
        }
        let subject: i64 = parse_field(&rec[0], *line, "subject")?;
        let component: i64 = parse_field(&rec[1], *line, "component")?;
        let curve = rec
            .iter()
            .skip(2)
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    parse_field::<f64>(f, *line, "value").map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if cells.insert((subject, component), (*line, curve)).is_some() {
            return Err(Error::Parse {
                line: *line,
                message: format!("duplicate row for ({subject}, {component})"),
            });
        }
    }
    let subjects: BTreeSet<i64> = cells.keys().map(|k| k.0).collect();
    let components: BTreeSet<i64> = cells.keys().map(|k| k.1).collect();
    let (n, p) = (subjects.len(), components.len());
    let mut values = vec![0.0; n * p * t_len];
    for (i, s) in subjects.iter().enumerate() {
        for (j, c) in components.iter().enumerate() {
            let missing = |point| Error::MissingObservation {
                subject: *s as usize,
                component: *c as usize,
                point,
            };
            let (line, curve) = cells.get(&(*s, *c)).ok_or_else(|| missing(1))?;
            for (k, v) in curve.iter().enumerate() {
                let v = v.ok_or_else(|| missing(k + 1))?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: *line,
                        message: "non-finite value".into(),
                    });
                }
                values[(i * p + j) * t_len + k] = v;
            }
        }
    }
    if n == 0 {
        return Err(Error::Parse {
            line: header_line + 1,
            message: "no data rows".into(),
        });
    }
    FunctionalDataset::new(grid, n, p, values)
}

/// Cross-sectional mean curves, `p × T`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimate {
    pub values: DMatrix<f64>,
}

impl MeanEstimate {
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.values.row(j).iter().copied().collect()
    }
}

pub fn estimate_mean(data: &FunctionalDataset) -> MeanEstimate {
    let (n, p, t) = (data.n, data.p, data.n_points());
    let mut values = DMatrix::zeros(p, t);
    for i in 0..n {
        for j in 0..p {
            for (k, v) in data.curve(i, j).iter().enumerate() {
                values[(j, k)] += v;
            }
        }
    }
    values /= n as f64;
    MeanEstimate { values }
}

/// Pooled covariance kernel `Ĥ = p⁻¹ Σ_j Ĝ_jj` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledCovariance {
    pub kernel: DMatrix<f64>,
}

/// Rows are centered curves, ordered `(i, j)` for the selected components.
fn centered_rows(data: &FunctionalDataset, mean: &MeanEstimate, components: &[usize]) -> DMatrix<f64> {
    let t = data.n_points();
    let mut rows = DMatrix::zeros(data.n * components.len(), t);
    for i in 0..data.n {
        for (c, &j) in components.iter().enumerate() {
            let r = i * components.len() + c;
            for (k, v) in data.curve(i, j).iter().enumerate() {
                rows[(r, k)] = v - mean.values[(j, k)];
            }
        }
    }
    rows
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.nrows();
    for a in 0..t {
        for b in a + 1..t {
            let v = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
}

fn check_mean(data: &FunctionalDataset, mean: &MeanEstimate) -> Result<()> {
    if mean.values.nrows() != data.p {
        return Err(Error::DimensionMismatch {
            expected: data.p,
            found: mean.values.nrows(),
        });
    }
    if mean.values.ncols() != data.n_points() {
        return Err(Error::DimensionMismatch {
            expected: data.n_points(),
            found: mean.values.ncols(),
        });
    }
    Ok(())
}

pub fn pooled_covariance(data: &FunctionalDataset, mean: &MeanEstimate) -> Result<PooledCovariance> {
    check_mean(data, mean)?;
    let all: Vec<usize> = (0..data.p).collect();
    let rows = centered_rows(data, mean, &all);
    let mut kernel = rows.tr_mul(&rows) / (data.n * data.p) as f64;
    symmetrize(&mut kernel);
    Ok(PooledCovariance { kernel })
}

/// Cross-sectional `Ĝ_jj` on the grid (0-based component index).
pub fn component_covariance(
    data: &FunctionalDataset,
    mean: &MeanEstimate,
    j: usize,
) -> Result<DMatrix<f64>> {
    check_mean(data, mean)?;
    if j >= data.p {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: data.p,
        });
    }
    let rows = centered_rows(data, mean, &[j]);
    let mut kernel = rows.tr_mul(&rows) / data.n as f64;
    symmetrize(&mut kernel);
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dataset(n: usize, p: usize, grid: &[f64], f: impl Fn(usize, usize, usize) -> f64) -> FunctionalDataset {
        let grid = TimeGrid::new(grid.to_vec()).unwrap();
        let t = grid.len();
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..p {
                for k in 0..t {
                    values.push(f(i, j, k));
                }
            }
        }
        FunctionalDataset::new(grid, n, p, values).unwrap()
    }

    #[test]
    fn trapezoid_weights_sum_to_span() {
        let grid = TimeGrid::new(vec![0.1, 0.15, 0.4, 0.9]).unwrap();
        let w = grid.weights();
        assert_abs_diff_eq!(w[0], 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 0.8, epsilon = 1e-12);
        let uniform = TimeGrid::uniform(30).unwrap();
        assert_abs_diff_eq!(uniform.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(uniform.points()[29], 1.0);
    }

    #[test]
    fn grid_rejects_bad_points() {
        assert!(matches!(TimeGrid::new(vec![0.0]), Err(Error::GridMismatch(_))));
        assert!(matches!(TimeGrid::new(vec![0.0, 0.5, 0.5]), Err(Error::GridMismatch(_))));
        assert!(matches!(TimeGrid::new(vec![0.0, 1.5]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn long_csv_reshapes() {
        let mut text = String::from("subject,component,time,value\n");
        for i in 1..=2 {
            for j in 1..=2 {
                for (k, t) in [0.0, 0.5, 1.0].iter().enumerate() {
                    text += &format!("{i},{j},{t},{}\n", 100 * i + 10 * j + k);
                }
            }
        }
        let data = read_csv(text.as_bytes(), CsvLayout::Long).unwrap();
        assert_eq!((data.n_subjects(), data.n_components(), data.n_points()), (2, 2, 3));
        assert_eq!(data.curve(1, 0), &[210.0, 211.0, 212.0]);
    }

    #[test]
    fn long_csv_missing_cell() {
        let mut text = String::from("subject,component,time,value\n");
        for i in 1..=2 {
            for j in 1..=2 {
                for t in [0.0, 0.5, 1.0] {
                    if (i, j) == (1, 2) && t == 1.0 {
                        continue;
                    }
                    text += &format!("{i},{j},{t},1.0\n");
                }
            }
        }
        let err = read_csv(text.as_bytes(), CsvLayout::Long).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingObservation { subject: 1, component: 2, point: 3 }
        ));
    }

    #[test]
    fn long_csv_off_grid_time() {
        let text = "subject,component,time,value\n1,1,0,1\n1,1,1,1\n2,1,0,1\n2,1,0.5,1\n";
        let err = read_csv(text.as_bytes(), CsvLayout::Long).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "subject,component,time,value\n1,1,0,1\n1,1,zero,1\n";
        match read_csv(text.as_bytes(), CsvLayout::Long).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn wide_csv_unsorted_grid() {
        let text = "grid,0,1,0.5\n1,1,1,2,3\n";
        let err = read_csv(text.as_bytes(), CsvLayout::Wide).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn wide_csv_round_trip() {
        let data = dataset(3, 2, &[0.0, 0.25, 1.0], |i, j, k| (i as f64 - 0.3) * (j + 1) as f64 / (k as f64 + 7.0));
        let mut buf = Vec::new();
        data.write_wide_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice(), CsvLayout::Wide).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn wide_csv_missing_value() {
        let text = "grid,0,0.5,1\n1,1,1,2,3\n1,2,1,,3\n";
        let err = read_csv(text.as_bytes(), CsvLayout::Wide).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingObservation { subject: 1, component: 2, point: 2 }
        ));
    }

    #[test]
    fn mean_examples() {
        let zero = dataset(3, 2, &[0.0, 1.0], |_, _, _| 0.0);
        assert!(estimate_mean(&zero).values.iter().all(|v| *v == 0.0));

        let two = dataset(2, 2, &[0.0, 1.0], |i, _, _| if i == 0 { 1.0 } else { 3.0 });
        assert_eq!(estimate_mean(&two).values[(1, 1)], 2.0);

        let single = dataset(1, 2, &[0.0, 0.5, 1.0], |_, j, k| (j * 3 + k) as f64);
        let m = estimate_mean(&single);
        assert_eq!(m.component(1), single.curve(0, 1));
    }

    #[test]
    fn pooled_rank_one_example() {
        let grid = [0.0, 0.5, 1.0];
        let data = dataset(2, 1, &grid, |i, _, k| if i == 0 { grid[k] } else { -grid[k] });
        let mean = estimate_mean(&data);
        let h = pooled_covariance(&data, &mean).unwrap().kernel;
        for a in 0..3 {
            for b in 0..3 {
                assert_abs_diff_eq!(h[(a, b)], grid[a] * grid[b], epsilon = 1e-15);
            }
        }
        assert_eq!(h[(2, 2)], 1.0);
        assert_eq!(h[(1, 2)], 0.5);
        let g = component_covariance(&data, &mean, 0).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn constant_curves_have_zero_kernel() {
        let data = dataset(4, 2, &[0.0, 0.5, 1.0], |_, j, k| (j + k) as f64);
        let mean = estimate_mean(&data);
        assert!(pooled_covariance(&data, &mean).unwrap().kernel.iter().all(|v| *v == 0.0));
        assert!(component_covariance(&data, &mean, 1).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identical_component_kernels_pool_to_same() {
        let data = dataset(3, 2, &[0.0, 0.5, 1.0], |i, _, k| (i as f64 - 1.0) * (k as f64 + 1.0));
        let mean = estimate_mean(&data);
        let h = pooled_covariance(&data, &mean).unwrap().kernel;
        let g = component_covariance(&data, &mean, 0).unwrap();
        assert!((h - g).amax() < 1e-14);
    }

    #[test]
    fn component_index_checked() {
        let data = dataset(2, 2, &[0.0, 1.0], |i, j, k| (i + j + k) as f64);
        let mean = estimate_mean(&data);
        assert!(matches!(
            component_covariance(&data, &mean, 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }
}

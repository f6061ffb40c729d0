//! CSV density input and `t,x,value` field output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use schrodinger_bridge::numgrid::{FieldSeries, ScalarField};
use schrodinger_bridge::Grid;

use crate::error::CliError;

/// Raw samples of a density as read from disk, sorted by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub x: Vec<f64>,
    pub value: Vec<f64>,
}

impl DensityTable {
    /// Reads `x,value` or `t,x,value` rows; a non-numeric first row is taken as a header.
    ///
    /// Three-column files must contain a single `t` unless `t` selects one.
    pub fn read(path: &Path, t: Option<f64>) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::MissingFile(path.to_path_buf()));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(true)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        let mut width = None;
        for (n, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(n as u64 + 1, |p| p.line());
            let fields: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            let fields = match fields {
                Ok(f) => f,
                Err(_) if rows.is_empty() && width.is_none() => {
                    width = Some(record.len());
                    continue;
                }
                Err(e) => return Err(bad_row(path, line, format!("not a number: {e}"))),
            };
            if *width.get_or_insert(fields.len()) != fields.len() {
                return Err(bad_row(
                    path,
                    line,
                    format!("expected {} columns", width.unwrap_or(0)),
                ));
            }
            match *fields.as_slice() {
                [x, v] => rows.push((f64::NAN, x, v)),
                [t, x, v] => rows.push((t, x, v)),
                _ => return Err(bad_row(path, line, "expected 2 or 3 columns".into())),
            }
            if !fields.iter().all(|f| f.is_finite()) {
                return Err(bad_row(path, line, "non-finite value".into()));
            }
        }
        if width == Some(3) {
            let chosen = match t {
                Some(t) => t,
                None => {
                    let t0 = rows.first().map_or(0.0, |r| r.0);
                    if rows.iter().any(|r| r.0 != t0) {
                        return Err(CliError::Validation(format!(
                            "{} holds several time slices; set `t` to pick one",
                            path.display()
                        )));
                    }
                    t0
                }
            };
            let tol = 1e-12 * chosen.abs().max(1.0);
            rows.retain(|r| (r.0 - chosen).abs() <= tol);
            if rows.is_empty() {
                return Err(CliError::Validation(format!(
                    "{} has no slice at t = {chosen}",
                    path.display()
                )));
            }
        }
        if rows.len() < 2 {
            return Err(CliError::Validation(format!(
                "{} needs at least two density samples",
                path.display()
            )));
        }
        rows.sort_by(|a, b| a.1.total_cmp(&b.1));
        if rows.windows(2).any(|w| w[0].1 == w[1].1) {
            return Err(CliError::Validation(format!(
                "{} repeats an x value",
                path.display()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.2 < 0.0) {
            return Err(CliError::Validation(format!(
                "{} has a negative density {} at x = {}",
                path.display(),
                r.2,
                r.1
            )));
        }
        Ok(Self {
            x: rows.iter().map(|r| r.1).collect(),
            value: rows.iter().map(|r| r.2).collect(),
        })
    }

    /// Trapezoid mass over the file's own abscissae.
    pub fn mass(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.value.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Linear interpolation, holding the end values outside the sampled range.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.value[0];
        }
        if x >= self.x[n - 1] {
            return self.value[n - 1];
        }
        let j = self.x.partition_point(|&xi| xi <= x);
        let (x0, x1) = (self.x[j - 1], self.x[j]);
        let f = (x - x0) / (x1 - x0);
        self.value[j - 1] + f * (self.value[j] - self.value[j - 1])
    }

    /// Resamples onto `grid` and rescales to unit trapezoid mass there.
    pub fn resample(&self, grid: &Grid, t: f64) -> Result<ScalarField<f64>, CliError> {
        let raw = ScalarField::from_fn(*grid, t, |x| self.interpolate(x))?;
        Ok(schrodinger_bridge::numgrid::normalize(&raw)?)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => bad_row(path, line, format!("{kind:?}")),
    }
}

fn bad_row(path: &Path, line: u64, message: String) -> CliError {
    CliError::Csv {
        path: path.to_path_buf(),
        line,
        message,
    }
}

/// Formats a value in round-trip scientific notation.
pub fn sci(v: f64) -> String {
    format!("{v:.17e}")
}

/// Output directory that creates itself and records every file written.
#[derive(Debug)]
pub struct ArtifactDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&root).map_err(|source| CliError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(Self {
            root,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `name` through `fill`, wrapping failures with the file path.
    pub fn write(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let file = File::create(&path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        fill(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn field(&mut self, name: &str, f: &ScalarField<f64>) -> Result<PathBuf, CliError> {
        self.write(name, |w| write_field(w, f))
    }

    pub fn series(&mut self, name: &str, s: &FieldSeries<f64>) -> Result<PathBuf, CliError> {
        self.write(name, |w| write_series(w, s))
    }
}

pub fn write_field<W: Write>(w: &mut W, f: &ScalarField<f64>) -> std::io::Result<()> {
    writeln!(w, "t,x,value")?;
    let t = sci(f.time_label());
    for (x, v) in f.grid().nodes().into_iter().zip(f.values()) {
        writeln!(w, "{t},{},{}", sci(x), sci(*v))?;
    }
    Ok(())
}

pub fn write_series<W: Write>(w: &mut W, s: &FieldSeries<f64>) -> std::io::Result<()> {
    writeln!(w, "t,x,value")?;
    let nodes = s.grid().nodes();
    for k in 0..s.n_slices() {
        let t = sci(s.times().time(k));
        for (x, v) in nodes.iter().zip(s.values(k)) {
            writeln!(w, "{t},{},{}", sci(*x), sci(*v))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_columns_with_header() {
        let f = file("x,value\n1,0.5\n0,0.5\n");
        let d = DensityTable::read(f.path(), None).unwrap();
        assert_eq!(d.x, [0.0, 1.0]);
        assert_eq!(d.mass(), 0.5);
        assert_eq!(d.interpolate(-3.0), 0.5);
    }

    #[test]
    fn three_columns_select_slice() {
        let f = file("t,x,value\n0,0,1\n0,1,1\n1,0,2\n1,1,4\n");
        assert!(matches!(
            DensityTable::read(f.path(), None),
            Err(CliError::Validation(_))
        ));
        let d = DensityTable::read(f.path(), Some(1.0)).unwrap();
        assert_eq!(d.value, [2.0, 4.0]);
        assert_eq!(d.interpolate(0.25), 2.5);
    }

    #[test]
    fn malformed_rows_name_line() {
        let f = file("x,value\n0,1\n1,abc\n");
        match DensityTable::read(f.path(), None) {
            Err(CliError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = file("0,-1\n1,1\n");
        assert!(matches!(
            DensityTable::read(f.path(), None),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn written_field_reads_back_exactly() {
        let g = Grid::new(-3.0, 3.0, 31).unwrap();
        let f = ScalarField::from_fn(g, 0.25, |x| (-x * x).exp() / std::f64::consts::PI.sqrt())
            .unwrap();
        let f = schrodinger_bridge::numgrid::normalize(&f).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let tmp = file(std::str::from_utf8(&buf).unwrap());
        let back = DensityTable::read(tmp.path(), None)
            .unwrap()
            .resample(&g, 0.25)
            .unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{a} vs {b}");
        }
    }
}

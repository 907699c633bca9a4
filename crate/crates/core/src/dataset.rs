//! Dataset handling: seeded minibatch streams over an in-memory matrix plus
//! the CSV and binary file formats.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, seeded_rng};

/// Magic bytes of the binary matrix format.
pub const BINARY_MAGIC: &[u8; 4] = b"EGDT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Binary,
}

impl std::str::FromStr for FileFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(FileFormat::Csv),
            "binary" | "bin" => Ok(FileFormat::Binary),
            other => Err(Error::Config(format!("unknown file format `{other}`"))),
        }
    }
}

/// An immutable n×d sample matrix together with the streaming parameters.
/// Each worker derives its own stream cursor from `(rng_seed, worker_id)`, so
/// concurrent streams never share mutable state.
#[derive(Debug, Clone)]
pub struct DataSource {
    data: DMatrix<f64>,
    batch_size: usize,
    rng_seed: u64,
    centered: bool,
}

impl DataSource {
    /// Wraps a sample matrix. When `centered`, the column means are
    /// subtracted once up front.
    pub fn new(mut data: DMatrix<f64>, batch_size: usize, rng_seed: u64, centered: bool) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyDataset { rows: data.nrows(), cols: data.ncols() });
        }
        if batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be positive".into()));
        }
        if centered {
            let n = data.nrows() as f64;
            let means: Vec<f64> = (0..data.ncols()).map(|j| data.column(j).sum() / n).collect();
            for j in 0..data.ncols() {
                data.column_mut(j).add_scalar_mut(-means[j]);
            }
        }
        Ok(Self { data, batch_size, rng_seed, centered })
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Full Gram matrix XᵀX, for full-batch experiments at desk scale.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        self.data.transpose() * &self.data
    }

    /// An i.i.d. minibatch stream for the given worker. Identical
    /// `(data, batch_size, rng_seed, worker_id)` yield identical sequences.
    pub fn stream(&self, worker_id: u64) -> BatchStream<'_> {
        BatchStream {
            source: self,
            rng: seeded_rng(derive_seed(self.rng_seed, worker_id)),
        }
    }

    /// One deterministic pass over the rows in order; the final batch may be
    /// smaller than `batch_size`.
    pub fn epoch(&self) -> impl Iterator<Item = DMatrix<f64>> + '_ {
        let n = self.n_samples();
        let bs = self.batch_size;
        (0..n).step_by(bs).map(move |start| {
            let len = bs.min(n - start);
            self.data.rows(start, len).into_owned()
        })
    }
}

/// Cursor over minibatches sampled with replacement.
pub struct BatchStream<'a> {
    source: &'a DataSource,
    rng: ChaCha8Rng,
}

impl BatchStream<'_> {
    /// Row indices of the next batch (exposed for determinism tests).
    pub fn next_indices(&mut self) -> Vec<usize> {
        let n = self.source.n_samples();
        (0..self.source.batch_size).map(|_| self.rng.gen_range(0..n)).collect()
    }

    pub fn next_batch(&mut self) -> DMatrix<f64> {
        let idx = self.next_indices();
        let d = self.source.dim();
        let mut batch = DMatrix::zeros(idx.len(), d);
        for (r, &i) in idx.iter().enumerate() {
            batch.row_mut(r).copy_from(&self.source.data.row(i));
        }
        batch
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Reads a comma-separated sample matrix, one row per sample. A non-numeric
/// first row is treated as a header and skipped.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    let mut line_no = 0usize;
    for line in reader.lines() {
        let line = line?;
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: std::result::Result<Vec<f64>, (usize, String)> = fields
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| (c + 1, format!("`{}`: {e}", f.trim())))
            })
            .collect();
        match parsed {
            Ok(vals) => {
                if width == 0 {
                    width = vals.len();
                } else if vals.len() != width {
                    return Err(Error::Parse {
                        row: line_no,
                        col: vals.len(),
                        msg: format!("expected {width} fields, got {}", vals.len()),
                    });
                }
                for (c, v) in vals.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NonFinite { row: line_no, col: c + 1 });
                    }
                }
                rows.push(vals);
            }
            Err((col, msg)) => {
                // A non-numeric first row is an auto-detected header.
                if rows.is_empty() && width == 0 {
                    width = fields.len();
                    continue;
                }
                return Err(Error::Parse { row: line_no, col, msg });
            }
        }
    }
    if rows.is_empty() || width == 0 {
        return Err(Error::EmptyDataset { rows: rows.len(), cols: width });
    }
    let n = rows.len();
    Ok(DMatrix::from_fn(n, width, |r, c| rows[r][c]))
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    for r in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the binary matrix format: magic "EGDT", little-endian u32 rows and
/// cols, then rows×cols little-endian f64 in row-major order.
pub fn read_matrix_binary(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Parse {
            row: 0,
            col: 0,
            msg: format!("bad magic {magic:?}, expected {BINARY_MAGIC:?}"),
        });
    }
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyDataset { rows, cols });
    }
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = r.read_f64::<LittleEndian>()?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i + 1, col: j + 1 });
            }
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

pub fn write_matrix_binary(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    w.write_all(BINARY_MAGIC)?;
    w.write_u32::<LittleEndian>(m.nrows() as u32)?;
    w.write_u32::<LittleEndian>(m.ncols() as u32)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_f64::<LittleEndian>(m[(i, j)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a dataset file into a [`DataSource`].
pub fn load_dataset(
    path: impl AsRef<Path>,
    format: FileFormat,
    batch_size: usize,
    rng_seed: u64,
    centered: bool,
) -> Result<DataSource> {
    let m = match format {
        FileFormat::Csv => read_matrix_csv(path)?,
        FileFormat::Binary => read_matrix_binary(path)?,
    };
    DataSource::new(m, batch_size, rng_seed, centered)
}

//! Matrix files.
//!
//! Binary `.mat0` layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"MAT0\x89\r\n\x1a"
//! 8       4     version (u32, currently 1)
//! 12      8     rows (u64)   v
//! 20      8     cols (u64)   n, or L for a statistic matrix
//! 28      8*rows*cols        row-major f64
//! ```
//!
//! CSV layout: one header row `v,n,n1,n2` holding the four integers, then `v`
//! rows of `n` comma-separated values. Values are written in shortest
//! round-trip form, so a CSV round trip is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: [u8; 8] = *b"MAT0\x89\r\n\x1a";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 28;

fn load_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Load { path: path.to_path_buf(), message: message.into() }
}

pub fn write_mat0(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    write_mat0_raw(m.rows(), m.cols(), m.as_slice(), path.as_ref())
}

fn write_mat0_raw(rows: usize, cols: usize, values: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    for x in values {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mat0(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| load_err(path, e.to_string()))?);
    let mut header = [0u8; HEADER_LEN as usize];
    r.read_exact(&mut header)
        .map_err(|_| load_err(path, "truncated header (need 28 bytes at offset 0)"))?;
    if header[..8] != MAGIC {
        return Err(load_err(path, "bad magic at byte offset 0"));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(load_err(path, format!("unsupported version {version} at byte offset 8")));
    }
    let rows = u64::from_le_bytes(header[12..20].try_into().unwrap());
    let cols = u64::from_le_bytes(header[20..28].try_into().unwrap());
    if rows == 0 {
        return Err(load_err(path, "row count 0 at byte offset 12"));
    }
    if cols == 0 {
        return Err(load_err(path, "column count 0 at byte offset 20"));
    }
    let count = rows
        .checked_mul(cols)
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| load_err(path, "dimensions overflow at byte offset 12"))?;
    let expected = HEADER_LEN + 8 * count;
    let actual = std::fs::metadata(path)?.len();
    if actual != expected {
        return Err(load_err(
            path,
            format!("dimension mismatch: header implies {expected} bytes, file has {actual}"),
        ));
    }
    let mut values = Vec::with_capacity(count as usize);
    let mut buf = [0u8; 8];
    for k in 0..count {
        r.read_exact(&mut buf)?;
        let x = f64::from_le_bytes(buf);
        if !x.is_finite() {
            return Err(load_err(
                path,
                format!("non-finite value at byte offset {}", HEADER_LEN + 8 * k),
            ));
        }
        values.push(x);
    }
    Matrix::from_vec(rows as usize, cols as usize, values)
}

/// Write a data matrix in the binary format. Group sizes are not part of the
/// binary header; they travel in a side manifest or on the command line.
pub fn write_matrix(x: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_mat0_raw(x.voxels(), x.subjects(), x.as_slice(), path.as_ref())
}

/// Read a data matrix. `.csv` files carry their own group sizes; for binary
/// files `n1` defaults to `n / 2`.
pub fn read_matrix(path: impl AsRef<Path>, n1: Option<usize>) -> Result<DataMatrix> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let x = read_csv(path)?;
        if let Some(n1) = n1 {
            if n1 != x.n1() {
                return Err(Error::usage(format!(
                    "--n1 {n1} disagrees with the CSV header (n1 = {})",
                    x.n1()
                )));
            }
        }
        return Ok(x);
    }
    let m = read_mat0(path)?;
    let n = m.cols();
    let n1 = n1.unwrap_or(n / 2);
    let (v, values) = (m.rows(), m.into_vec());
    DataMatrix::new(values, v, n, n1).map_err(|e| load_err(path, e.to_string()))
}

pub fn write_csv(x: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "{},{},{},{}", x.voxels(), x.subjects(), x.n1(), x.n2())?;
    for i in 0..x.voxels() {
        let line: Vec<String> = x.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let mut lines = BufReader::new(File::open(path).map_err(|e| load_err(path, e.to_string()))?).lines();
    let header = lines.next().transpose()?.ok_or_else(|| load_err(path, "empty file"))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| load_err(path, format!("malformed header {header:?}, expected v,n,n1,n2")))?;
    let [v, n, n1, n2] = dims[..] else {
        return Err(load_err(path, format!("malformed header {header:?}, expected v,n,n1,n2")));
    };
    if v == 0 {
        return Err(load_err(path, "header declares v = 0"));
    }
    if n1 + n2 != n {
        return Err(load_err(path, format!("header: n1 + n2 = {} but n = {n}", n1 + n2)));
    }
    let mut values = Vec::with_capacity(v * n);
    let mut row = 0;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if row == v {
            return Err(load_err(path, format!("more than {v} data rows")));
        }
        let mut count = 0;
        for (col, cell) in line.split(',').enumerate() {
            let x: f64 = cell.trim().parse().map_err(|_| {
                load_err(path, format!("unparseable cell {cell:?} at row {row}, column {col}"))
            })?;
            if !x.is_finite() {
                return Err(load_err(path, format!("non-finite cell {cell:?} at row {row}, column {col}")));
            }
            values.push(x);
            count += 1;
        }
        if count != n {
            return Err(load_err(path, format!("row {row} has {count} cells, expected {n}")));
        }
        row += 1;
    }
    if row != v {
        return Err(load_err(path, format!("dimension mismatch: {row} data rows, header says {v}")));
    }
    DataMatrix::new(values, v, n, n1).map_err(|e| load_err(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("maxnull-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample() -> DataMatrix {
        DataMatrix::from_fn(3, 4, 2, |i, j| (i as f64 + 0.1) * (j as f64 - 1.7) / 3.0).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let x = sample();
        let p = tmp("a.mat0");
        write_matrix(&x, &p).unwrap();
        assert_eq!(read_matrix(&p, Some(2)).unwrap(), x);
    }

    #[test]
    fn csv_round_trip() {
        let x = sample();
        let p = tmp("a.csv");
        write_csv(&x, &p).unwrap();
        assert_eq!(read_matrix(&p, None).unwrap(), x);
    }

    #[test]
    fn zero_rows_rejected() {
        let p = tmp("zero.mat0");
        let mut bytes = MAGIC.to_vec();
        bytes.extend(VERSION.to_le_bytes());
        bytes.extend(0u64.to_le_bytes());
        bytes.extend(4u64.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        let e = read_mat0(&p).unwrap_err().to_string();
        assert!(e.contains("offset 12"), "{e}");
    }

    #[test]
    fn truncated_payload_rejected() {
        let x = sample();
        let p = tmp("trunc.mat0");
        write_matrix(&x, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        let e = read_mat0(&p).unwrap_err().to_string();
        assert!(e.contains("dimension mismatch"), "{e}");
    }

    #[test]
    fn nan_in_binary_names_offset() {
        let p = tmp("nan.mat0");
        let m = Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap();
        write_mat0(&m, &p).unwrap();
        let e = read_mat0(&p).unwrap_err().to_string();
        assert!(e.contains("byte offset 36"), "{e}");
    }

    #[test]
    fn csv_nan_names_cell() {
        let p = tmp("nan.csv");
        std::fs::write(&p, "2,4,2,2\n1,2,3,4\n5,NaN,7,8\n").unwrap();
        let e = read_csv(&p).unwrap_err().to_string();
        assert!(e.contains("row 1, column 1"), "{e}");
    }

    #[test]
    fn csv_zero_v_rejected() {
        let p = tmp("v0.csv");
        std::fs::write(&p, "0,4,2,2\n").unwrap();
        assert!(read_csv(&p).is_err());
    }
}

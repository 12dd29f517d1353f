//! Header + id-column CSV tables.
//!
//! Every table this crate reads has a header row and uses the first column as
//! a row identifier. Field counts are checked per row so errors can name the
//! offending line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Matrix, Result};

/// A parsed table: header names and rows of (id, remaining fields).
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct Row {
    /// 1-based line number in the source.
    pub line: usize,
    pub id: String,
    pub fields: Vec<String>,
}

impl Table {
    /// Reads a table, rejecting ragged rows and duplicate ids.
    pub fn from_reader<R: Read>(reader: R, origin: &str) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let mut records = rdr.records();
        let header = match records.next() {
            Some(rec) => rec.map_err(|e| csv_error(origin, &e))?,
            None => return Err(Error::parse(origin, 1, 0, "empty file, expected a header row")),
        };
        let header: Vec<String> = header.iter().map(str::to_owned).collect();
        if header.len() < 2 {
            return Err(Error::parse(origin, 1, 0, "header needs an id column and at least one data column"));
        }
        check_unique(&header[1..], origin, |idx| (1, idx + 2), "column name")?;

        let mut rows = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| csv_error(origin, &e))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            if rec.len() != header.len() {
                return Err(Error::parse(
                    origin,
                    line,
                    0,
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            let mut it = rec.iter().map(str::to_owned);
            let id = it.next().unwrap_or_default();
            if id.is_empty() {
                return Err(Error::parse(origin, line, 1, "empty id"));
            }
            rows.push(Row {
                line,
                id,
                fields: it.collect(),
            });
        }

        let lines: Vec<usize> = rows.iter().map(|r| r.line).collect();
        let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
        check_unique(&ids, origin, |idx| (lines[idx], 1), "id")?;
        Ok(Table { header, rows })
    }

    pub fn from_path(path: &Path) -> Result<Table> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Table::from_reader(file, &path.display().to_string())
    }

    pub fn ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.id.clone()).collect()
    }

    /// Parses every data field as a finite real.
    pub fn numeric(&self, origin: &str) -> Result<Matrix> {
        let ncols = self.header.len() - 1;
        let mut m = Matrix::zeros(self.rows.len(), ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, field) in row.fields.iter().enumerate() {
                m[(i, j)] = parse_finite(field, origin, row.line, j + 2)?;
            }
        }
        Ok(m)
    }
}

pub(crate) fn parse_finite(field: &str, origin: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(origin, line, column, format!("not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(origin, line, column, format!("non-finite value: {field:?}")));
    }
    Ok(v)
}

fn check_unique(
    names: &[String],
    origin: &str,
    locate: impl Fn(usize) -> (usize, usize),
    what: &str,
) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for (idx, name) in names.iter().enumerate() {
        if !seen.insert(name.as_str()) {
            let (line, col) = locate(idx);
            return Err(Error::parse(origin, line, col, format!("duplicate {what} {name:?}")));
        }
    }
    Ok(())
}

fn csv_error(origin: &str, e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(origin, line, 0, e.to_string())
}

/// Writes `spot_id_header,col...` followed by one row per id.
pub fn write_matrix<W: Write>(
    mut w: W,
    id_header: &str,
    col_names: &[String],
    ids: &[String],
    m: &Matrix,
) -> std::io::Result<()> {
    write!(w, "{id_header}")?;
    for c in col_names {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (i, id) in ids.iter().enumerate() {
        write!(w, "{id}")?;
        for j in 0..m.ncols() {
            write!(w, ",{}", m[(i, j)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads a numeric matrix with ids (e.g. an embedding).
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let t = Table::from_path(path)?;
    let m = t.numeric(&path.display().to_string())?;
    Ok((t.ids(), m))
}

pub fn matrix_from_reader<R: Read>(reader: R, origin: &str) -> Result<(Vec<String>, Matrix)> {
    let t = Table::from_reader(reader, origin)?;
    let m = t.numeric(origin)?;
    Ok((t.ids(), m))
}

/// Writes a numeric matrix with ids and generated column names `{prefix}{j}`.
pub fn write_matrix_file(path: &Path, prefix: &str, ids: &[String], m: &Matrix) -> Result<()> {
    let cols: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    let mut w = create(path)?;
    write_matrix(&mut w, "spot", &cols, ids, m)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_rows() {
        let t = Table::from_reader("spot,a,b\ns1,1,2\ns2,3,4\n".as_bytes(), "t").unwrap();
        assert_eq!(t.header, vec!["spot", "a", "b"]);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1].line, 3);
        let m = t.numeric("t").unwrap();
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn ragged_row_names_line() {
        let err = Table::from_reader("spot,a,b\ns1,1,2\ns2,3\n".as_bytes(), "t").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(Table::from_reader("spot,a,a\ns1,1,2\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn crlf_and_blank_lines_tolerated() {
        let t = Table::from_reader("spot,a\r\ns1,1\r\n\r\ns2,2\r\n".as_bytes(), "t").unwrap();
        assert_eq!(t.ids(), vec!["s1", "s2"]);
    }
}

//! Loading, validation, masking and synthesis of spatial-transcriptomics data.
//!
//! All files are UTF-8 CSV with a header row whose first column is the spot
//! id. Files are aligned by spot id, never by row order; any mismatch is an
//! error.

mod synth;
pub mod table;

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

pub use synth::{generate_synthetic, SynthParams};
pub use table::Table;

use crate::{Error, Matrix, Result};

/// Spots × genes expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    values: Matrix,
    spot_ids: Vec<String>,
    gene_ids: Vec<String>,
}

impl ExpressionMatrix {
    pub fn new(values: Matrix, spot_ids: Vec<String>, gene_ids: Vec<String>) -> Result<Self> {
        if values.nrows() != spot_ids.len() {
            return Err(Error::dim(format!(
                "{} rows but {} spot ids",
                values.nrows(),
                spot_ids.len()
            )));
        }
        if values.ncols() != gene_ids.len() {
            return Err(Error::dim(format!(
                "{} columns but {} gene ids",
                values.ncols(),
                gene_ids.len()
            )));
        }
        if spot_ids.is_empty() || gene_ids.is_empty() {
            return Err(Error::invalid("expression matrix must have at least one spot and one gene"));
        }
        ensure_unique(&spot_ids, "spot id")?;
        ensure_unique(&gene_ids, "gene id")?;
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                let v = values[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!(
                        "expression value {v} at row {}, column {} must be finite and non-negative",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(ExpressionMatrix {
            values,
            spot_ids,
            gene_ids,
        })
    }

    pub fn from_reader<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let t = Table::from_reader(reader, origin)?;
        if t.rows.is_empty() {
            return Err(Error::parse(origin, 2, 0, "no spots"));
        }
        let values = t.numeric(origin)?;
        for (i, row) in t.rows.iter().enumerate() {
            for j in 0..values.ncols() {
                if values[(i, j)] < 0.0 {
                    return Err(Error::parse(origin, row.line, j + 2, "negative expression value"));
                }
            }
        }
        let spot_ids = t.ids();
        let gene_ids = t.header[1..].to_vec();
        ExpressionMatrix::new(values, spot_ids, gene_ids)
    }

    pub fn to_writer<W: Write>(&self, w: W) -> std::io::Result<()> {
        table::write_matrix(w, "spot", &self.gene_ids, &self.spot_ids, &self.values)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn spot_ids(&self) -> &[String] {
        &self.spot_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn n_spots(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    /// Elementwise `ln(1 + x)`.
    pub fn log1p(&self) -> ExpressionMatrix {
        ExpressionMatrix {
            values: self.values.map(f64::ln_1p),
            spot_ids: self.spot_ids.clone(),
            gene_ids: self.gene_ids.clone(),
        }
    }

    pub fn normalized(&self, norm: Normalization) -> ExpressionMatrix {
        match norm {
            Normalization::None => self.clone(),
            Normalization::Log1p => self.log1p(),
        }
    }

    /// The rows at `keep`, in that order.
    pub fn select_rows(&self, keep: &[usize]) -> ExpressionMatrix {
        ExpressionMatrix {
            values: self.values.select_rows(keep),
            spot_ids: keep.iter().map(|&i| self.spot_ids[i].clone()).collect(),
            gene_ids: self.gene_ids.clone(),
        }
    }
}

/// Preprocessing applied to raw expression before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    None,
    #[default]
    Log1p,
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "log1p" => Ok(Normalization::Log1p),
            _ => Err(Error::Usage(format!("unknown normalization {s:?} (none | log1p)"))),
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::None => "none",
            Normalization::Log1p => "log1p",
        })
    }
}

/// Planar spot positions, one row per spot.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCoords {
    positions: Matrix,
    spot_ids: Vec<String>,
}

impl SpatialCoords {
    pub fn new(positions: Matrix, spot_ids: Vec<String>) -> Result<Self> {
        if positions.ncols() != 2 {
            return Err(Error::dim(format!("coordinates need 2 columns, got {}", positions.ncols())));
        }
        if positions.nrows() != spot_ids.len() {
            return Err(Error::dim(format!(
                "{} positions but {} spot ids",
                positions.nrows(),
                spot_ids.len()
            )));
        }
        ensure_unique(&spot_ids, "spot id")?;
        if let Some(i) = (0..positions.nrows())
            .find(|&i| !(positions[(i, 0)].is_finite() && positions[(i, 1)].is_finite()))
        {
            return Err(Error::invalid(format!("non-finite coordinate for spot {:?}", spot_ids[i])));
        }
        Ok(SpatialCoords { positions, spot_ids })
    }

    /// Reads `spot_id,x,y` rows.
    pub fn from_reader<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let t = Table::from_reader(reader, origin)?;
        if t.header.len() != 3 {
            return Err(Error::parse(origin, 1, 0, "expected columns spot_id,x,y"));
        }
        let positions = t.numeric(origin)?;
        SpatialCoords::new(positions, t.ids())
    }

    pub fn to_writer<W: Write>(&self, w: W) -> std::io::Result<()> {
        let cols = ["x".to_owned(), "y".to_owned()];
        table::write_matrix(w, "spot_id", &cols, &self.spot_ids, &self.positions)
    }

    pub fn positions(&self) -> &Matrix {
        &self.positions
    }

    pub fn spot_ids(&self) -> &[String] {
        &self.spot_ids
    }

    pub fn len(&self) -> usize {
        self.spot_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spot_ids.is_empty()
    }

    /// Reorders to match `order` exactly. Every id in `order` must be present
    /// and no extra ids may remain.
    pub fn align_to(&self, order: &[String]) -> Result<SpatialCoords> {
        let index = id_index(&self.spot_ids);
        let mut rows = Vec::with_capacity(order.len());
        for id in order {
            match index.get(id.as_str()) {
                Some(&i) => rows.push(i),
                None => return Err(Error::invalid(format!("spot {id:?} has no coordinates"))),
            }
        }
        if self.spot_ids.len() != order.len() {
            let wanted: HashMap<&str, ()> = order.iter().map(|s| (s.as_str(), ())).collect();
            if let Some(extra) = self.spot_ids.iter().find(|s| !wanted.contains_key(s.as_str())) {
                return Err(Error::invalid(format!(
                    "spot {extra:?} has coordinates but no expression row"
                )));
            }
        }
        Ok(SpatialCoords {
            positions: self.positions.select_rows(&rows),
            spot_ids: order.to_vec(),
        })
    }

    /// Rows for the ids in `order`, in that order. Ids not listed are
    /// dropped; a listed id without coordinates is an error.
    pub fn subset(&self, order: &[String]) -> Result<SpatialCoords> {
        let index = id_index(&self.spot_ids);
        let rows = order
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("spot {id:?} has no coordinates")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_rows(&rows))
    }

    fn select_rows(&self, keep: &[usize]) -> SpatialCoords {
        SpatialCoords {
            positions: self.positions.select_rows(keep),
            spot_ids: keep.iter().map(|&i| self.spot_ids[i].clone()).collect(),
        }
    }
}

/// Per-spot in-tissue flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TissueMask {
    in_tissue: Vec<bool>,
}

impl TissueMask {
    pub fn new(in_tissue: Vec<bool>) -> Result<Self> {
        if !in_tissue.iter().any(|&b| b) {
            return Err(Error::invalid("tissue mask selects no spots"));
        }
        Ok(TissueMask { in_tissue })
    }

    /// Reads `spot_id,in_tissue` rows (values 0/1/true/false) and aligns them
    /// to `order`.
    pub fn from_reader<R: Read>(reader: R, origin: &str, order: &[String]) -> Result<Self> {
        let t = Table::from_reader(reader, origin)?;
        if t.header.len() != 2 {
            return Err(Error::parse(origin, 1, 0, "expected columns spot_id,in_tissue"));
        }
        let mut flags = HashMap::with_capacity(t.rows.len());
        for row in &t.rows {
            let flag = match row.fields[0].to_ascii_lowercase().as_str() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(Error::parse(origin, row.line, 2, format!("expected 0/1/true/false, got {other:?}")))
                }
            };
            flags.insert(row.id.clone(), flag);
        }
        let mut in_tissue = Vec::with_capacity(order.len());
        for id in order {
            match flags.remove(id) {
                Some(f) => in_tissue.push(f),
                None => return Err(Error::invalid(format!("spot {id:?} missing from tissue mask {origin}"))),
            }
        }
        if let Some(extra) = flags.keys().min() {
            return Err(Error::invalid(format!("tissue mask {origin} names unknown spot {extra:?}")));
        }
        TissueMask::new(in_tissue)
    }

    pub fn in_tissue(&self) -> &[bool] {
        &self.in_tissue
    }

    pub fn len(&self) -> usize {
        self.in_tissue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_tissue.is_empty()
    }

    pub fn count(&self) -> usize {
        self.in_tissue.iter().filter(|&&b| b).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.in_tissue.len()).filter(|&i| self.in_tissue[i]).collect()
    }
}

/// Planted domain labels for synthetic or annotated data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthLabels {
    pub labels: Vec<usize>,
    pub n_domains: usize,
}

impl GroundTruthLabels {
    pub fn new(labels: Vec<usize>, n_domains: usize) -> Result<Self> {
        if n_domains == 0 {
            return Err(Error::invalid("n_domains must be positive"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_domains) {
            return Err(Error::invalid(format!("label {l} outside [0, {n_domains})")));
        }
        Ok(GroundTruthLabels { labels, n_domains })
    }

    /// Builds from arbitrary integer labels, relabeling to 0.. in order of
    /// first appearance.
    pub fn from_raw(raw: &[i64]) -> GroundTruthLabels {
        let mut map = HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        GroundTruthLabels {
            labels,
            n_domains: map.len().max(1),
        }
    }

    pub fn select(&self, keep: &[usize]) -> GroundTruthLabels {
        GroundTruthLabels::from_raw(&keep.iter().map(|&i| self.labels[i] as i64).collect::<Vec<_>>())
    }
}

/// Reads `spot_id,label` rows aligned to `order`.
pub fn read_labels<R: Read>(reader: R, origin: &str, order: &[String]) -> Result<Vec<i64>> {
    labels_for(reader, origin, order, false)
}

/// As [`read_labels`], but rows for spots outside `order` are ignored.
pub fn read_labels_subset<R: Read>(reader: R, origin: &str, order: &[String]) -> Result<Vec<i64>> {
    labels_for(reader, origin, order, true)
}

fn labels_for<R: Read>(reader: R, origin: &str, order: &[String], allow_extra: bool) -> Result<Vec<i64>> {
    let t = Table::from_reader(reader, origin)?;
    if t.header.len() != 2 {
        return Err(Error::parse(origin, 1, 0, "expected columns spot_id,label"));
    }
    let mut map = HashMap::with_capacity(t.rows.len());
    for row in &t.rows {
        let v: i64 = row.fields[0]
            .parse()
            .map_err(|_| Error::parse(origin, row.line, 2, format!("not an integer label: {:?}", row.fields[0])))?;
        map.insert(row.id.clone(), v);
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        match map.remove(id) {
            Some(v) => out.push(v),
            None => return Err(Error::invalid(format!("spot {id:?} missing from labels {origin}"))),
        }
    }
    if let Some(extra) = map.keys().min().filter(|_| !allow_extra) {
        return Err(Error::invalid(format!("labels {origin} name unknown spot {extra:?}")));
    }
    Ok(out)
}

pub fn write_labels<W: Write>(mut w: W, ids: &[String], labels: &[usize]) -> std::io::Result<()> {
    writeln!(w, "spot_id,label")?;
    for (id, l) in ids.iter().zip(labels) {
        writeln!(w, "{id},{l}")?;
    }
    Ok(())
}

pub fn load_expression(path: &Path) -> Result<ExpressionMatrix> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ExpressionMatrix::from_reader(f, &path.display().to_string())
}

pub fn write_expression(expr: &ExpressionMatrix, path: &Path) -> Result<()> {
    let mut w = table::create(path)?;
    expr.to_writer(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_coords(path: &Path) -> Result<SpatialCoords> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    SpatialCoords::from_reader(f, &path.display().to_string())
}

pub fn write_coords(coords: &SpatialCoords, path: &Path) -> Result<()> {
    let mut w = table::create(path)?;
    coords
        .to_writer(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_mask(path: &Path, order: &[String]) -> Result<TissueMask> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    TissueMask::from_reader(f, &path.display().to_string(), order)
}

pub fn load_labels(path: &Path, order: &[String]) -> Result<Vec<i64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(f, &path.display().to_string(), order)
}

pub fn load_labels_subset(path: &Path, order: &[String]) -> Result<Vec<i64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels_subset(f, &path.display().to_string(), order)
}

/// Parses `spot_id,label` rows in their own order.
pub fn parse_label_table(bytes: &[u8], origin: &str) -> Result<(Vec<String>, Vec<i64>)> {
    let ids = Table::from_reader(bytes, origin)?.ids();
    let labels = read_labels(bytes, origin, &ids)?;
    Ok((ids, labels))
}

pub fn load_label_table(path: &Path) -> Result<(Vec<String>, Vec<i64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_label_table(&bytes, &path.display().to_string())
}

pub fn write_labels_file(path: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut w = table::create(path)?;
    write_labels(&mut w, ids, labels)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Drops out-of-tissue spots from both inputs, preserving order.
pub fn apply_tissue_mask(
    expr: &ExpressionMatrix,
    coords: &SpatialCoords,
    mask: &TissueMask,
) -> Result<(ExpressionMatrix, SpatialCoords)> {
    if mask.len() != expr.n_spots() || coords.len() != expr.n_spots() {
        return Err(Error::dim(format!(
            "mask length {}, expression rows {}, coordinate rows {} must agree",
            mask.len(),
            expr.n_spots(),
            coords.len()
        )));
    }
    if coords.spot_ids() != expr.spot_ids() {
        return Err(Error::invalid("coordinates are not aligned with expression spot ids"));
    }
    let keep = mask.kept_indices();
    Ok((expr.select_rows(&keep), coords.select_rows(&keep)))
}

fn id_index(ids: &[String]) -> HashMap<&str, usize> {
    ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

fn ensure_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashMap::with_capacity(ids.len());
    for id in ids {
        if seen.insert(id.as_str(), ()).is_some() {
            return Err(Error::invalid(format!("duplicate {what} {id:?}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expr(csv: &str) -> Result<ExpressionMatrix> {
        ExpressionMatrix::from_reader(csv.as_bytes(), "test.csv")
    }

    #[test]
    fn loads_small_expression() {
        let e = expr("spot,g1,g2\na,1,2\nb,3,4\nc,5,6\n").unwrap();
        assert_eq!((e.n_spots(), e.n_genes()), (3, 2));
        assert_eq!(e.values()[(2, 1)], 6.0);
        assert_eq!(e.gene_ids(), ["g1", "g2"]);
    }

    #[test]
    fn duplicate_spot_is_named() {
        let msg = expr("spot,g1\na,1\nb,2\na,3\n").unwrap_err().to_string();
        assert!(msg.contains("\"a\""), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn nan_reports_location() {
        let err = expr("spot,g1,g2\na,1,2\nb,NaN,4\n").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_numeric_and_ragged_rejected() {
        assert!(expr("spot,g1\na,x\n").is_err());
        assert!(expr("spot,g1,g2\na,1\n").is_err());
        assert!(expr("spot,g1\na,-1\n").is_err());
    }

    #[test]
    fn coords_load_and_reject_inf() {
        let c = SpatialCoords::from_reader("spot_id,x,y\na,0,0\nb,1,0\nc,0,1\n".as_bytes(), "c").unwrap();
        assert_eq!(c.len(), 3);
        assert!(SpatialCoords::from_reader("spot_id,x,y\na,inf,0\n".as_bytes(), "c").is_err());
    }

    #[test]
    fn coords_alignment_by_id() {
        let c = SpatialCoords::from_reader("spot_id,x,y\nb,1,0\na,0,0\n".as_bytes(), "c").unwrap();
        let aligned = c.align_to(&["a".into(), "b".into()]).unwrap();
        assert_eq!(aligned.positions()[(1, 0)], 1.0);

        let err = c.align_to(&["a".into()]).unwrap_err().to_string();
        assert!(err.contains("\"b\""), "{err}");
        let err = c.align_to(&["a".into(), "b".into(), "z".into()]).unwrap_err().to_string();
        assert!(err.contains("\"z\""), "{err}");
    }

    #[test]
    fn tissue_mask_drops_rows() {
        let e = expr("spot,g\ns0,0\ns1,1\ns2,2\ns3,3\n").unwrap();
        let c = SpatialCoords::new(Matrix::zeros(4, 2), e.spot_ids().to_vec()).unwrap();
        let m = TissueMask::new(vec![true, false, true, true]).unwrap();
        let (e2, c2) = apply_tissue_mask(&e, &c, &m).unwrap();
        assert_eq!(e2.spot_ids(), ["s0", "s2", "s3"]);
        assert_eq!(c2.spot_ids(), ["s0", "s2", "s3"]);
        assert_eq!(e2.values()[(1, 0)], 2.0);

        let all = TissueMask::new(vec![true; 4]).unwrap();
        let (e3, c3) = apply_tissue_mask(&e, &c, &all).unwrap();
        assert_eq!(e3, e);
        assert_eq!(c3, c);

        assert!(TissueMask::new(vec![false; 4]).is_err());
        let short = TissueMask::new(vec![true; 3]).unwrap();
        assert!(apply_tissue_mask(&e, &c, &short).is_err());
    }

    #[test]
    fn mask_file_aligned_by_id() {
        let order: Vec<String> = vec!["a".into(), "b".into()];
        let m = TissueMask::from_reader("spot_id,in_tissue\nb,0\na,1\n".as_bytes(), "m", &order).unwrap();
        assert_eq!(m.in_tissue(), [true, false]);
        assert!(TissueMask::from_reader("spot_id,in_tissue\na,1\n".as_bytes(), "m", &order).is_err());
        assert!(TissueMask::from_reader("spot_id,in_tissue\na,1\nb,yes\n".as_bytes(), "m", &order).is_err());
    }

    #[test]
    fn expression_roundtrip() {
        let src = "spot,g1,g2\na,1.5,0\nb,0.1,2e-7\n";
        let e = expr(src).unwrap();
        let mut buf = Vec::new();
        e.to_writer(&mut buf).unwrap();
        let back = expr(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn labels_relabel_on_first_appearance() {
        let g = GroundTruthLabels::from_raw(&[7, 7, 3, 9, 3]);
        assert_eq!(g.labels, vec![0, 0, 1, 2, 1]);
        assert_eq!(g.n_domains, 3);
    }
}

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::table;
use crate::{Error, Matrix, Result};

/// Elementwise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }

    pub fn is_piecewise(self) -> bool {
        matches!(self, Activation::LeakyRelu { .. })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Identity => write!(f, "identity"),
            Activation::LeakyRelu { slope } => write!(f, "leaky_relu:{slope}"),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "identity" {
            return Ok(Activation::Identity);
        }
        if let Some(slope) = s.strip_prefix("leaky_relu:") {
            let slope: f64 = slope.parse().map_err(|_| format!("bad slope in {s:?}"))?;
            if slope.is_finite() {
                return Ok(Activation::LeakyRelu { slope });
            }
        }
        Err(format!("unknown activation {s:?}"))
    }
}

/// Affine layer `act(X·W + b)`. `weight` is in × out, `bias` is 1 × out.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

/// Hypergraph convolution `act(P·X·Θ)`; `weight` (Θ) is in × out.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLayer {
    pub weight: Matrix,
    pub activation: Activation,
}

/// Layer widths for both autoencoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub n_genes: usize,
    pub encoder_hidden: Vec<usize>,
    /// R: width of the denoising latent.
    pub latent_dim: usize,
    pub decoder_hidden: Vec<usize>,
    pub hgcn_hidden: Vec<usize>,
    /// R′: width of the hypergraph latent.
    pub spatial_dim: usize,
    pub leaky_slope: f64,
}

impl Architecture {
    /// M→64→R encoder, (R+R′)→64→M decoder, M→64→R′ hypergraph encoder.
    pub fn new(n_genes: usize, latent_dim: usize, spatial_dim: usize) -> Self {
        Architecture {
            n_genes,
            encoder_hidden: vec![64],
            latent_dim,
            decoder_hidden: vec![64],
            hgcn_hidden: vec![64],
            spatial_dim,
            leaky_slope: 0.01,
        }
    }

    pub fn with_hidden(mut self, width: usize) -> Self {
        self.encoder_hidden = vec![width];
        self.decoder_hidden = vec![width];
        self.hgcn_hidden = vec![width];
        self
    }
}

/// All trainable parameters. Gradients reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dae_encoder: Vec<DenseLayer>,
    pub dae_decoder: Vec<DenseLayer>,
    pub hgcn: Vec<GraphLayer>,
}

fn chain(widths: &[usize]) -> Vec<(usize, usize)> {
    widths.windows(2).map(|w| (w[0], w[1])).collect()
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    // row-major draw order
    let vals: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::from_row_slice(fan_in, fan_out, &vals)
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, seeded.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        if arch.n_genes == 0 || arch.latent_dim == 0 || arch.spatial_dim == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let leaky = Activation::LeakyRelu {
            slope: arch.leaky_slope,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dense = |widths: Vec<usize>, rng: &mut ChaCha8Rng| -> Vec<DenseLayer> {
            let pairs = chain(&widths);
            let last = pairs.len() - 1;
            pairs
                .into_iter()
                .enumerate()
                .map(|(i, (a, b))| DenseLayer {
                    weight: glorot(rng, a, b),
                    bias: Matrix::zeros(1, b),
                    activation: if i == last { Activation::Identity } else { leaky },
                })
                .collect()
        };

        let enc: Vec<usize> = std::iter::once(arch.n_genes)
            .chain(arch.encoder_hidden.iter().copied())
            .chain(std::iter::once(arch.latent_dim))
            .collect();
        let dec: Vec<usize> = std::iter::once(arch.latent_dim + arch.spatial_dim)
            .chain(arch.decoder_hidden.iter().copied())
            .chain(std::iter::once(arch.n_genes))
            .collect();
        let hg: Vec<usize> = std::iter::once(arch.n_genes)
            .chain(arch.hgcn_hidden.iter().copied())
            .chain(std::iter::once(arch.spatial_dim))
            .collect();
        if enc.iter().chain(&dec).chain(&hg).any(|&w| w == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }

        let dae_encoder = dense(enc, &mut rng);
        let dae_decoder = dense(dec, &mut rng);
        let pairs = chain(&hg);
        let last = pairs.len() - 1;
        let hgcn = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (a, b))| GraphLayer {
                weight: glorot(&mut rng, a, b),
                activation: if i == last { Activation::Identity } else { leaky },
            })
            .collect();
        let p = ModelParams {
            dae_encoder,
            dae_decoder,
            hgcn,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_genes(&self) -> usize {
        self.dae_encoder[0].weight.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.dae_encoder.last().map_or(0, |l| l.weight.ncols())
    }

    pub fn spatial_dim(&self) -> usize {
        self.hgcn.last().map_or(0, |l| l.weight.ncols())
    }

    /// Checks that layer widths chain and all values are finite.
    pub fn validate(&self) -> Result<()> {
        if self.dae_encoder.is_empty() || self.dae_decoder.is_empty() || self.hgcn.is_empty() {
            return Err(Error::invalid("every network needs at least one layer"));
        }
        let dense_chain = |layers: &[DenseLayer], what: &str| -> Result<()> {
            for (i, l) in layers.iter().enumerate() {
                if l.bias.nrows() != 1 || l.bias.ncols() != l.weight.ncols() {
                    return Err(Error::dim(format!("{what} layer {i}: bias width")));
                }
                if let Some(next) = layers.get(i + 1) {
                    if next.weight.nrows() != l.weight.ncols() {
                        return Err(Error::dim(format!("{what} layer {} input width", i + 1)));
                    }
                }
            }
            Ok(())
        };
        dense_chain(&self.dae_encoder, "encoder")?;
        dense_chain(&self.dae_decoder, "decoder")?;
        for (i, w) in self.hgcn.windows(2).enumerate() {
            if w[1].weight.nrows() != w[0].weight.ncols() {
                return Err(Error::dim(format!("hgcn layer {} input width", i + 1)));
            }
        }
        let m = self.n_genes();
        if self.dae_decoder.last().map(|l| l.weight.ncols()) != Some(m) {
            return Err(Error::dim("decoder must output one column per gene"));
        }
        if self.hgcn[0].weight.nrows() != m {
            return Err(Error::dim("hypergraph encoder must take one column per gene"));
        }
        if self.dae_decoder[0].weight.nrows() != self.latent_dim() + self.spatial_dim() {
            return Err(Error::dim("decoder input width must equal R + R′"));
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Parameter tensors in a fixed order: encoder (W, b)…, decoder (W, b)…,
    /// hypergraph Θ….
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in self.dae_encoder.iter().chain(&self.dae_decoder) {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.extend(self.hgcn.iter().map(|l| &l.weight));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in self.dae_encoder.iter_mut().chain(self.dae_decoder.iter_mut()) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.extend(self.hgcn.iter_mut().map(|l| &mut l.weight));
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Reads flat parameter `idx` in [`tensors`](Self::tensors) order
    /// (row-major within each tensor).
    pub fn get_flat(&self, idx: usize) -> f64 {
        let (t, r, c) = self.locate(idx);
        self.tensors()[t][(r, c)]
    }

    pub fn set_flat(&mut self, idx: usize, v: f64) {
        let (t, r, c) = self.locate(idx);
        self.tensors_mut()[t][(r, c)] = v;
    }

    fn locate(&self, mut idx: usize) -> (usize, usize, usize) {
        for (t, m) in self.tensors().iter().enumerate() {
            if idx < m.len() {
                return (t, idx / m.ncols(), idx % m.ncols());
            }
            idx -= m.len();
        }
        panic!("parameter index out of range");
    }
}

const MAGIC: &str = "hgdomain-checkpoint";
const VERSION: u32 = 1;

fn write_row_major<W: Write>(w: &mut W, m: &Matrix) -> std::io::Result<()> {
    let mut first = true;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !first {
                write!(w, " ")?;
            }
            write!(w, "{}", m[(r, c)])?;
            first = false;
        }
    }
    writeln!(w)
}

impl ModelParams {
    /// Text checkpoint: versioned header, one `section` per network, each
    /// layer as a dims/activation line followed by row-major value lines.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{MAGIC} {VERSION}")?;
        for (name, layers) in [("dae_encoder", &self.dae_encoder), ("dae_decoder", &self.dae_decoder)] {
            writeln!(w, "section {name} {}", layers.len())?;
            for l in layers {
                writeln!(w, "dense {} {} {}", l.weight.nrows(), l.weight.ncols(), l.activation)?;
                write_row_major(&mut w, &l.weight)?;
                write_row_major(&mut w, &l.bias)?;
            }
        }
        writeln!(w, "section hgcn {}", self.hgcn.len())?;
        for l in &self.hgcn {
            writeln!(w, "graph {} {} {}", l.weight.nrows(), l.weight.ncols(), l.activation)?;
            write_row_major(&mut w, &l.weight)?;
        }
        writeln!(w, "end")
    }

    pub fn read_checkpoint<R: BufRead>(reader: R, origin: &str) -> Result<ModelParams> {
        let mut lines = CheckpointLines {
            inner: reader.lines(),
            line: 0,
            origin,
        };
        let header = lines.next_line()?;
        let mut it = header.split_whitespace();
        if it.next() != Some(MAGIC) {
            return Err(lines.err(0, "not a checkpoint file"));
        }
        match it.next().and_then(|v| v.parse::<u32>().ok()) {
            Some(VERSION) => {}
            Some(v) => return Err(lines.err(0, format!("unsupported checkpoint version {v}"))),
            None => return Err(lines.err(0, "missing checkpoint version")),
        }

        let mut dae_encoder = Vec::new();
        let mut dae_decoder = Vec::new();
        let mut hgcn = Vec::new();
        for expected in ["dae_encoder", "dae_decoder", "hgcn"] {
            let line = lines.next_line()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "section" || parts[1] != expected {
                return Err(lines.err(0, format!("expected `section {expected} <layers>`")));
            }
            let count: usize = parts[2].parse().map_err(|_| lines.err(3, "bad layer count"))?;
            for _ in 0..count {
                let spec = lines.next_line()?;
                let parts: Vec<&str> = spec.split_whitespace().collect();
                let kind = if expected == "hgcn" { "graph" } else { "dense" };
                if parts.len() != 4 || parts[0] != kind {
                    return Err(lines.err(0, format!("expected `{kind} <in> <out> <activation>`")));
                }
                let rows: usize = parts[1].parse().map_err(|_| lines.err(2, "bad input width"))?;
                let cols: usize = parts[2].parse().map_err(|_| lines.err(3, "bad output width"))?;
                let activation: Activation = parts[3].parse().map_err(|e: String| lines.err(4, e))?;
                let weight = lines.matrix(rows, cols)?;
                if kind == "dense" {
                    let bias = lines.matrix(1, cols)?;
                    let layer = DenseLayer {
                        weight,
                        bias,
                        activation,
                    };
                    if expected == "dae_encoder" {
                        dae_encoder.push(layer);
                    } else {
                        dae_decoder.push(layer);
                    }
                } else {
                    hgcn.push(GraphLayer { weight, activation });
                }
            }
        }
        if lines.next_line()?.trim() != "end" {
            return Err(lines.err(0, "expected `end`"));
        }
        let p = ModelParams {
            dae_encoder,
            dae_decoder,
            hgcn,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = table::create(path)?;
        self.write_checkpoint(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        ModelParams::read_checkpoint(std::io::BufReader::new(f), &path.display().to_string())
    }
}

struct CheckpointLines<'a, R> {
    inner: std::io::Lines<R>,
    line: usize,
    origin: &'a str,
}

impl<R: BufRead> CheckpointLines<'_, R> {
    fn err(&self, column: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.origin, self.line, column, msg)
    }

    fn next_line(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(self.err(0, e.to_string())),
            None => Err(self.err(0, "unexpected end of checkpoint")),
        }
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let line = self.next_line()?;
        let mut vals = Vec::new();
        for (i, tok) in line.split_whitespace().enumerate() {
            let v: f64 = tok.parse().map_err(|_| self.err(i + 1, format!("not a number: {tok:?}")))?;
            if !v.is_finite() {
                return Err(self.err(i + 1, "non-finite parameter"));
            }
            vals.push(v);
        }
        // checked against the values actually present, so a bogus header
        // cannot trigger a huge allocation
        let want = rows.checked_mul(cols);
        if rows == 0 || cols == 0 || want != Some(vals.len()) {
            return Err(self.err(0, format!("expected {rows}×{cols} values, found {}", vals.len())));
        }
        Ok(Matrix::from_row_slice(rows, cols, &vals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_dims() {
        let p = ModelParams::init(&Architecture::new(40, 32, 32), 0).unwrap();
        assert_eq!(p.dae_encoder[0].weight.shape(), (40, 64));
        assert_eq!(p.dae_encoder[1].weight.shape(), (64, 32));
        assert_eq!(p.dae_decoder[0].weight.shape(), (64, 64));
        assert_eq!(p.dae_decoder[1].weight.shape(), (64, 40));
        assert_eq!(p.hgcn[1].weight.shape(), (64, 32));
        assert_eq!(p.dae_encoder[1].activation, Activation::Identity);
        assert_eq!(p.hgcn[0].activation, Activation::LeakyRelu { slope: 0.01 });
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = Architecture::new(10, 4, 3);
        let a = ModelParams::init(&arch, 5).unwrap();
        assert_eq!(a, ModelParams::init(&arch, 5).unwrap());
        assert_ne!(a, ModelParams::init(&arch, 6).unwrap());
        let limit = (6.0f64 / 74.0).sqrt();
        assert!(a.dae_encoder[0].weight.iter().all(|w| w.abs() <= limit));
        assert!(a.dae_encoder[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn flat_indexing_covers_all_parameters() {
        let mut p = ModelParams::init(&Architecture::new(3, 2, 2).with_hidden(2), 1).unwrap();
        let n = p.n_parameters();
        for i in 0..n {
            p.set_flat(i, i as f64);
        }
        for i in 0..n {
            assert_eq!(p.get_flat(i), i as f64);
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let p = ModelParams::init(&Architecture::new(7, 3, 2).with_hidden(5), 11).unwrap();
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        let back = ModelParams::read_checkpoint(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let p = ModelParams::init(&Architecture::new(3, 2, 2).with_hidden(2), 0).unwrap();
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let bad_version = text.replacen("checkpoint 1", "checkpoint 9", 1);
        assert!(ModelParams::read_checkpoint(bad_version.as_bytes(), "m").is_err());
        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(ModelParams::read_checkpoint(truncated.as_bytes(), "m").is_err());
        let huge = text.replacen("dense 3 2", "dense 300000000 200000000", 1);
        assert!(ModelParams::read_checkpoint(huge.as_bytes(), "m").is_err());
        let nan = text.replacen("identity\n", "identity\nNaN ", 1);
        assert!(ModelParams::read_checkpoint(nan.as_bytes(), "m").is_err());
    }
}

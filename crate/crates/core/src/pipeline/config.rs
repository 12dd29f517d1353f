use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::clustering::ClusterMethod;
use crate::dataio::Normalization;
use crate::{Error, Result};

/// Synthetic dataset shape given as `DxSxG`: domains, spots per domain, genes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub n_domains: usize,
    pub spots_per_domain: usize,
    pub n_genes: usize,
}

impl FromStr for SynthSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('x').collect();
        let bad = || Error::Usage(format!("synthetic shape {s:?} must look like 3x50x40"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n: Vec<usize> = parts
            .iter()
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if n.contains(&0) {
            return Err(bad());
        }
        Ok(SynthSpec {
            n_domains: n[0],
            spots_per_domain: n[1],
            n_genes: n[2],
        })
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.n_domains, self.spots_per_domain, self.n_genes)
    }
}

/// Every tunable of a run. Fields are set from defaults, then a config file,
/// then command-line flags, all through [`PipelineConfig::set`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub expression: Option<PathBuf>,
    pub coords: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub output: PathBuf,

    pub synth: Option<SynthSpec>,
    pub synth_noise_sd: f64,
    pub synth_mix: f64,

    pub k_neighbors: usize,
    pub tile_size: usize,
    pub tile_pca_components: usize,
    pub mahalanobis_quantile: Option<f64>,
    pub normalize: Normalization,
    pub pca_components: usize,

    pub latent_dim: usize,
    pub spatial_dim: usize,
    pub hidden_dim: usize,
    pub noise_sd: f64,
    pub lambda_re: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub phased: bool,
    pub seed: u64,

    pub cluster_method: ClusterMethod,
    pub n_clusters: Option<usize>,
    pub max_iter: usize,
    pub resolution: f64,
    pub k_snn: usize,
    pub k_lisi: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            expression: None,
            coords: None,
            image: None,
            mask: None,
            truth: None,
            output: PathBuf::from("out"),
            synth: None,
            synth_noise_sd: 0.1,
            synth_mix: 0.0,
            k_neighbors: 6,
            tile_size: 32,
            tile_pca_components: 10,
            mahalanobis_quantile: None,
            normalize: Normalization::Log1p,
            pca_components: 20,
            latent_dim: 32,
            spatial_dim: 32,
            hidden_dim: 64,
            noise_sd: 0.1,
            lambda_re: 1.0,
            learning_rate: 1e-3,
            epochs: 500,
            phased: false,
            seed: 0,
            cluster_method: ClusterMethod::KMeans,
            n_clusters: None,
            max_iter: 300,
            resolution: 1.0,
            k_snn: 15,
            k_lisi: None,
        }
    }
}

/// Keys accepted by [`PipelineConfig::set`], with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("expression", "expression CSV (spot × gene)"),
    ("coords", "coordinates CSV (spot_id,x,y)"),
    ("image", "histology PNG for tile features"),
    ("mask", "tissue mask CSV (spot_id,in_tissue)"),
    ("truth", "ground-truth labels CSV (spot_id,label)"),
    ("output", "output directory"),
    ("synth", "generate a synthetic dataset DxSxG instead of reading inputs"),
    ("synth_noise_sd", "synthetic expression noise sd"),
    ("synth_mix", "fraction of synthetic spots given another domain's signature"),
    ("k_neighbors", "hyperedge size minus one"),
    ("tile_size", "tile edge length in pixels"),
    ("tile_pca_components", "tile feature dimensions kept before Mahalanobis"),
    ("mahalanobis_quantile", "drop neighbours beyond this quantile of tile distance"),
    ("normalize", "none or log1p"),
    ("pca_components", "dimensions of the reduced fused embedding"),
    ("latent_dim", "denoising latent width"),
    ("spatial_dim", "hypergraph latent width"),
    ("hidden_dim", "hidden layer width"),
    ("noise_sd", "latent noise sd"),
    ("lambda_re", "weight of the adjacency reconstruction loss"),
    ("learning_rate", "Adam step size"),
    ("epochs", "training epochs"),
    ("phased", "train the hypergraph encoder before the denoising autoencoder"),
    ("seed", "random seed"),
    ("cluster_method", "kmeans or leiden"),
    ("n_clusters", "k-means cluster count"),
    ("max_iter", "k-means iteration cap"),
    ("resolution", "Leiden resolution"),
    ("k_snn", "shared-nearest-neighbour graph size for Leiden"),
    ("k_lisi", "iLISI neighbourhood size"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Usage(format!("invalid value {value:?} for {key}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "none" | "auto" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(Error::Usage(format!("invalid value {value:?} for {key} (expected true/false)"))),
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "expression" => self.expression = path(value),
            "coords" => self.coords = path(value),
            "image" => self.image = path(value),
            "mask" => self.mask = path(value),
            "truth" => self.truth = path(value),
            "output" => self.output = path(value).ok_or_else(|| Error::Usage("output must not be empty".into()))?,
            "synth" => self.synth = optional(key, value)?,
            "synth_noise_sd" => self.synth_noise_sd = parse(key, value)?,
            "synth_mix" => self.synth_mix = parse(key, value)?,
            "k_neighbors" => self.k_neighbors = parse(key, value)?,
            "tile_size" => self.tile_size = parse(key, value)?,
            "tile_pca_components" => self.tile_pca_components = parse(key, value)?,
            "mahalanobis_quantile" => self.mahalanobis_quantile = optional(key, value)?,
            "normalize" => self.normalize = value.trim().parse().map_err(|_| Error::Usage(format!("invalid value {value:?} for normalize (expected none or log1p)")))?,
            "pca_components" => self.pca_components = parse(key, value)?,
            "latent_dim" => self.latent_dim = parse(key, value)?,
            "spatial_dim" => self.spatial_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "noise_sd" => self.noise_sd = parse(key, value)?,
            "lambda_re" => self.lambda_re = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "phased" => self.phased = boolean(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "cluster_method" => self.cluster_method = value.trim().parse()?,
            "n_clusters" => self.n_clusters = optional(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "resolution" => self.resolution = parse(key, value)?,
            "k_snn" => self.k_snn = parse(key, value)?,
            "k_lisi" => self.k_lisi = optional(key, value)?,
            _ => return Err(Error::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (key, value, line) in parse_config_text(text, origin)? {
            self.set(&key, &value).map_err(|e| match e {
                Error::Usage(m) => Error::Usage(format!("{origin}:{line}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Range checks that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let usage = |m: &str| Err(Error::Usage(m.to_owned()));
        if self.k_neighbors < 1 {
            return usage("k_neighbors must be at least 1");
        }
        if self.tile_size < 1 {
            return usage("tile_size must be at least 1");
        }
        if self.tile_pca_components < 2 {
            return usage("tile_pca_components must be at least 2");
        }
        if let Some(q) = self.mahalanobis_quantile {
            if !(q > 0.0 && q <= 1.0) {
                return usage("mahalanobis_quantile must lie in (0, 1]");
            }
        }
        if self.pca_components < 1 || self.latent_dim < 1 || self.spatial_dim < 1 || self.hidden_dim < 1 {
            return usage("pca_components, latent_dim, spatial_dim and hidden_dim must be positive");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return usage("noise_sd must be non-negative");
        }
        if !(self.lambda_re >= 0.0 && self.lambda_re.is_finite()) {
            return usage("lambda_re must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return usage("learning_rate must be positive");
        }
        if self.epochs < 1 {
            return usage("epochs must be at least 1");
        }
        if self.n_clusters == Some(0) {
            return usage("n_clusters must be positive");
        }
        if self.max_iter < 1 {
            return usage("max_iter must be at least 1");
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return usage("resolution must be positive");
        }
        if self.k_snn < 1 {
            return usage("k_snn must be at least 1");
        }
        if !(self.synth_noise_sd >= 0.0 && self.synth_noise_sd.is_finite()) {
            return usage("synth_noise_sd must be non-negative");
        }
        if !(0.0..1.0).contains(&self.synth_mix) {
            return usage("synth_mix must lie in [0, 1)");
        }
        Ok(())
    }
}

/// `(key, value, line)` triples from a `key = value` file.
pub fn parse_config_text(text: &str, origin: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(origin, i + 1, 0, format!("expected key = value, got {line:?}")));
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::parse(origin, i + 1, 0, "empty key"));
        }
        out.push((k.to_owned(), v.trim().to_owned(), i + 1));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!((c.k_neighbors, c.tile_size, c.pca_components), (6, 32, 20));
        assert_eq!((c.latent_dim, c.spatial_dim, c.epochs, c.seed), (32, 32, 500, 0));
        assert_eq!((c.noise_sd, c.lambda_re, c.learning_rate), (0.1, 1.0, 1e-3));
        assert_eq!(c.normalize, Normalization::Log1p);
    }

    #[test]
    fn every_key_is_settable() {
        let samples = [
            ("expression", "e.csv"),
            ("coords", "c.csv"),
            ("image", "i.png"),
            ("mask", "m.csv"),
            ("truth", "t.csv"),
            ("output", "o"),
            ("synth", "2x3x4"),
            ("synth_noise_sd", "0.5"),
            ("synth_mix", "0.2"),
            ("k_neighbors", "4"),
            ("tile_size", "8"),
            ("tile_pca_components", "3"),
            ("mahalanobis_quantile", "0.9"),
            ("normalize", "none"),
            ("pca_components", "5"),
            ("latent_dim", "7"),
            ("spatial_dim", "9"),
            ("hidden_dim", "11"),
            ("noise_sd", "0.2"),
            ("lambda_re", "0.5"),
            ("learning_rate", "0.01"),
            ("epochs", "3"),
            ("phased", "true"),
            ("seed", "42"),
            ("cluster_method", "leiden"),
            ("n_clusters", "4"),
            ("max_iter", "10"),
            ("resolution", "0.7"),
            ("k_snn", "5"),
            ("k_lisi", "6"),
        ];
        assert_eq!(samples.len(), CONFIG_KEYS.len());
        for ((key, value), (listed, _)) in samples.iter().zip(CONFIG_KEYS) {
            assert_eq!(key, listed);
            let mut c = PipelineConfig::default();
            c.set(key, value).unwrap();
            assert_ne!(c, PipelineConfig::default(), "{key}");
        }
    }

    #[test]
    fn file_then_flag_precedence() {
        let mut c = PipelineConfig::default();
        c.apply_text("# run\nk_neighbors = 8\nseed=3 # trailing\n\nepochs = 10\n", "cfg").unwrap();
        c.set("seed", "9").unwrap();
        assert_eq!((c.k_neighbors, c.seed, c.epochs), (8, 9, 10));
        assert_eq!(c.tile_size, 32);
    }

    #[test]
    fn bad_lines_and_values() {
        let mut c = PipelineConfig::default();
        assert!(matches!(c.apply_text("k_neighbors 8\n", "cfg"), Err(Error::Parse { line: 1, .. })));
        let e = c.apply_text("\nseed = x\n", "cfg").unwrap_err();
        assert!(matches!(&e, Error::Usage(m) if m.contains("cfg:2")), "{e}");
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("cluster_method", "mclust").is_err());
    }

    #[test]
    fn synth_spec_parsing() {
        let s: SynthSpec = "3x50x40".parse().unwrap();
        assert_eq!((s.n_domains, s.spots_per_domain, s.n_genes), (3, 50, 40));
        assert_eq!(s.to_string(), "3x50x40");
        assert!("3x50".parse::<SynthSpec>().is_err());
        assert!("0x5x5".parse::<SynthSpec>().is_err());
    }

    #[test]
    fn range_checks() {
        for (k, v) in [("epochs", "0"), ("learning_rate", "0"), ("resolution", "-1"), ("synth_mix", "1")] {
            let mut c = PipelineConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k}={v}");
        }
    }
}

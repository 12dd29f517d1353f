//! End-to-end orchestration. Each stage function reads and writes the same
//! intermediate files the command-line subcommands use, so a full run and a
//! chain of single-stage runs produce identical artifacts.

mod config;
mod plot;

use std::path::{Path, PathBuf};

pub use config::{parse_config_text, PipelineConfig, SynthSpec, CONFIG_KEYS};
pub use plot::{plot_domains, render_domains_svg, PALETTE};

use crate::clustering::{build_snn_graph, kmeans, leiden_communities, ClusterAssignment, ClusterMethod};
use crate::dataio::{
    self, apply_tissue_mask, generate_synthetic, table, ExpressionMatrix, GroundTruthLabels, SpatialCoords,
    SynthParams,
};
use crate::features::{
    covariance_matrix, default_ridge, extract_tiles, pca_fit_transform, write_tile_features, Image, StatFeaturizer,
    TileFeatures,
};
use crate::hypergraph::{
    adjacency_from_incidence, build_knn_hypergraph, degree_normalization, gate_by_mahalanobis, incidence_matrix,
    Hypergraph,
};
use crate::metrics::{default_k_lisi, MetricReport};
use crate::neuralnet::{train_joint, write_trace_file, Architecture, TrainConfig, TrainOutcome};
use crate::{Error, Matrix, Result};

pub const EXPRESSION_FILE: &str = "expression.csv";
pub const COORDS_FILE: &str = "coords.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const HYPERGRAPH_FILE: &str = "hypergraph.txt";
pub const TILE_FEATURES_FILE: &str = "tile_features.csv";
pub const FUSED_FILE: &str = "fused.csv";
pub const LOSS_FILE: &str = "loss.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EMBEDDING_FILE: &str = "embedding.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const ILISI_FILE: &str = "ilisi.csv";
pub const PLOT_FILE: &str = "domains.svg";

/// Input spots after alignment and masking; expression is not yet
/// normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub expression: ExpressionMatrix,
    pub coords: SpatialCoords,
    pub truth: Option<GroundTruthLabels>,
}

/// Files written by one run, removed again if the run fails.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    created_dir: bool,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Outputs> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            created_dir,
        })
    }

    /// Path for `name` inside the output directory, recorded for cleanup.
    pub fn file(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        if !self.written.contains(&p) {
            self.written.push(p.clone());
        }
        p
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn discard(self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Usage(format!("--{key} is required (or use --synth)")))
}

/// Generates a synthetic dataset from `config.synth`.
pub fn synthesize(config: &PipelineConfig) -> Result<Dataset> {
    let spec = config
        .synth
        .ok_or_else(|| Error::Usage("--synth DxSxG is required".into()))?;
    let params = SynthParams::new(
        spec.n_domains,
        spec.spots_per_domain,
        spec.n_genes,
        config.synth_noise_sd,
        config.synth_mix,
        config.seed,
    );
    let (expression, coords, truth) = generate_synthetic(&params)?;
    Ok(Dataset {
        expression,
        coords,
        truth: Some(truth),
    })
}

pub fn write_dataset(ds: &Dataset, out: &mut Outputs) -> Result<()> {
    dataio::write_expression(&ds.expression, &out.file(EXPRESSION_FILE))?;
    dataio::write_coords(&ds.coords, &out.file(COORDS_FILE))?;
    if let Some(t) = &ds.truth {
        dataio::write_labels_file(&out.file(TRUTH_FILE), ds.expression.spot_ids(), &t.labels)?;
    }
    Ok(())
}

/// Reads expression, coordinates and optional truth (or synthesises them),
/// then applies the tissue mask if one is configured.
pub fn load_dataset(config: &PipelineConfig) -> Result<Dataset> {
    let mut ds = if config.synth.is_some() {
        synthesize(config)?
    } else {
        let expression = dataio::load_expression(required(&config.expression, "expression")?)?;
        let coords = dataio::load_coords(required(&config.coords, "coords")?)?.align_to(expression.spot_ids())?;
        let truth = match &config.truth {
            Some(p) => Some(GroundTruthLabels::from_raw(&dataio::load_labels(p, expression.spot_ids())?)),
            None => None,
        };
        Dataset {
            expression,
            coords,
            truth,
        }
    };
    if let Some(p) = &config.mask {
        let mask = dataio::load_mask(p, ds.expression.spot_ids())?;
        let (e, c) = apply_tissue_mask(&ds.expression, &ds.coords, &mask)?;
        ds.truth = ds.truth.map(|t| t.select(&mask.kept_indices()));
        ds.expression = e;
        ds.coords = c;
    }
    Ok(ds)
}

/// Tile features from the configured image, reduced by PCA.
pub fn tile_features(config: &PipelineConfig, coords: &SpatialCoords) -> Result<Option<TileFeatures>> {
    let Some(path) = &config.image else {
        return Ok(None);
    };
    let image = Image::load_png(path)?;
    let tiles = extract_tiles(&image, coords, config.tile_size)?;
    let raw = TileFeatures::from_tiles(&tiles, &StatFeaturizer)?;
    let n = raw.vectors.nrows();
    let k = config.tile_pca_components.min(n).min(raw.vectors.ncols());
    if k < 2 {
        return Err(Error::invalid("tile features need at least two spots"));
    }
    let (reduced, _) = pca_fit_transform(&raw.vectors, k)?;
    Ok(Some(TileFeatures::new(reduced)?))
}

/// KNN hypergraph over spot coordinates, optionally gated by tile
/// similarity.
pub fn build_hypergraph(
    config: &PipelineConfig,
    coords: &SpatialCoords,
    tiles: Option<&TileFeatures>,
) -> Result<Hypergraph> {
    let hg = build_knn_hypergraph(coords, config.k_neighbors)?;
    match (tiles, config.mahalanobis_quantile) {
        (Some(t), Some(q)) => {
            let cov = covariance_matrix(t, default_ridge(&t.vectors))?;
            gate_by_mahalanobis(&hg, t, &cov, q)
        }
        (None, Some(_)) => Err(Error::Usage("mahalanobis_quantile needs --image".into())),
        _ => Ok(hg),
    }
}

pub fn train_config(config: &PipelineConfig) -> TrainConfig {
    TrainConfig {
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        noise_sd: config.noise_sd,
        lambda_re: config.lambda_re,
        seed: config.seed,
        phased: config.phased,
        ..TrainConfig::default()
    }
}

/// Joint training on normalised expression over the hypergraph.
pub fn train(config: &PipelineConfig, expression: &ExpressionMatrix, hg: &Hypergraph) -> Result<TrainOutcome> {
    if hg.n_vertices() != expression.n_spots() {
        return Err(Error::dim(format!(
            "hypergraph has {} vertices but there are {} spots",
            hg.n_vertices(),
            expression.n_spots()
        )));
    }
    let x = expression.normalized(config.normalize);
    let h = incidence_matrix(hg);
    let norm = degree_normalization(&h, hg.edge_weights())?;
    let adjacency = adjacency_from_incidence(&h);
    let arch = Architecture::new(x.n_genes(), config.latent_dim, config.spatial_dim).with_hidden(config.hidden_dim);
    train_joint(x.values(), &norm, &adjacency, &arch, &train_config(config))
}

/// PCA of the fused embedding followed by the configured clustering.
pub fn cluster(
    config: &PipelineConfig,
    fused: &Matrix,
    truth_domains: Option<usize>,
) -> Result<(Matrix, ClusterAssignment)> {
    let n = fused.nrows();
    if n < 2 {
        return Err(Error::invalid("clustering needs at least two spots"));
    }
    let k = config.pca_components.min(n).min(fused.ncols());
    let (reduced, _) = pca_fit_transform(fused, k)?;
    let assignment = match config.cluster_method {
        ClusterMethod::KMeans => {
            let n_clusters = config.n_clusters.or(truth_domains).ok_or_else(|| {
                Error::Usage("k-means needs --n_clusters (or ground truth to take the domain count from)".into())
            })?;
            kmeans(&reduced, n_clusters, config.seed, config.max_iter)?
        }
        ClusterMethod::Leiden => {
            let g = build_snn_graph(&reduced, config.k_snn.min(n - 1))?;
            leiden_communities(&g, config.resolution, config.seed)?
        }
    };
    Ok((reduced, assignment))
}

pub fn evaluate(
    config: &PipelineConfig,
    embedding: &Matrix,
    labels: &[usize],
    truth: Option<&[usize]>,
) -> Result<MetricReport> {
    let k = config.k_lisi.unwrap_or_else(|| default_k_lisi(embedding.nrows()));
    MetricReport::compute(embedding, labels, truth, k)
}

/// Paths written and the metrics of a completed run.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub metrics: MetricReport,
    pub assignment: ClusterAssignment,
    pub files: Vec<PathBuf>,
}

fn run_stages(config: &PipelineConfig, out: &mut Outputs) -> Result<(MetricReport, ClusterAssignment)> {
    let stage = |s: &'static str| move |e: Error| e.in_stage(s);

    let ds = load_dataset(config).map_err(stage("load"))?;
    if config.synth.is_some() {
        write_dataset(&ds, out).map_err(stage("load"))?;
    }
    let ids = ds.expression.spot_ids().to_vec();

    let hg = (|| {
        let tiles = tile_features(config, &ds.coords)?;
        if let Some(t) = &tiles {
            write_tile_features(&out.file(TILE_FEATURES_FILE), &ids, t)?;
        }
        let hg = build_hypergraph(config, &ds.coords, tiles.as_ref())?;
        hg.save(&out.file(HYPERGRAPH_FILE))?;
        Ok(hg)
    })()
    .map_err(stage("hypergraph"))?;

    let trained = (|| {
        let t = train(config, &ds.expression, &hg)?;
        table::write_matrix_file(&out.file(FUSED_FILE), "f", &ids, &t.embeddings.fused)?;
        write_trace_file(&out.file(LOSS_FILE), &t.trace)?;
        t.params.save(&out.file(CHECKPOINT_FILE))?;
        Ok(t)
    })()
    .map_err(stage("train"))?;

    let truth = ds.truth.as_ref();
    let (embedding, assignment) = (|| {
        let r = cluster(config, &trained.embeddings.fused, truth.map(|t| t.n_domains))?;
        table::write_matrix_file(&out.file(EMBEDDING_FILE), "pc", &ids, &r.0)?;
        dataio::write_labels_file(&out.file(LABELS_FILE), &ids, &r.1.labels)?;
        Ok(r)
    })()
    .map_err(stage("cluster"))?;

    let metrics = (|| {
        let m = evaluate(config, &embedding, &assignment.labels, truth.map(|t| t.labels.as_slice()))?;
        m.save(&out.file(METRICS_FILE))?;
        m.save_per_spot(&out.file(ILISI_FILE), &ids)?;
        Ok(m)
    })()
    .map_err(stage("evaluate"))?;

    plot_domains(&ds.coords, &assignment.labels, &out.file(PLOT_FILE)).map_err(stage("plot"))?;
    Ok((metrics, assignment))
}

/// Runs every stage, writing artifacts to `config.output`. On failure the
/// files written so far are removed and the error names the failing stage.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let mut out = Outputs::create(&config.output)?;
    match run_stages(config, &mut out) {
        Ok((metrics, assignment)) => Ok(PipelineReport {
            metrics,
            assignment,
            files: out.written().to_vec(),
        }),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

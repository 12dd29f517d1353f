//! `hgdomain` command-line tool. Every subcommand accepts `--config FILE`
//! and one `--<key> VALUE` flag per configuration key; flags override the
//! file, which overrides the defaults.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use hgdomain::dataio::{self, table, GroundTruthLabels};
use hgdomain::hypergraph::Hypergraph;
use hgdomain::neuralnet::write_trace_file;
use hgdomain::pipeline::{self, Outputs, PipelineConfig, CONFIG_KEYS};
use hgdomain::{Error, Result};

struct Sub {
    name: &'static str,
    about: &'static str,
    /// Input files beyond the config keys, with their default file name in
    /// the output directory.
    inputs: &'static [(&'static str, &'static str, &'static str)],
}

const SUBCOMMANDS: &[Sub] = &[
    Sub {
        name: "synth",
        about: "Write a synthetic dataset (expression, coordinates, truth)",
        inputs: &[],
    },
    Sub {
        name: "hypergraph",
        about: "Build the KNN hypergraph from coordinates",
        inputs: &[],
    },
    Sub {
        name: "train",
        about: "Train both autoencoders and write the fused embedding",
        inputs: &[("hypergraph", pipeline::HYPERGRAPH_FILE, "hypergraph edge list")],
    },
    Sub {
        name: "cluster",
        about: "Reduce the fused embedding with PCA and cluster it",
        inputs: &[("fused", pipeline::FUSED_FILE, "fused embedding CSV")],
    },
    Sub {
        name: "evaluate",
        about: "Score labels with ARI (given truth) and iLISI",
        inputs: &[
            ("embedding", pipeline::EMBEDDING_FILE, "reduced embedding CSV"),
            ("labels", pipeline::LABELS_FILE, "cluster labels CSV"),
        ],
    },
    Sub {
        name: "plot",
        about: "Draw the domain map as SVG",
        inputs: &[("labels", pipeline::LABELS_FILE, "cluster labels CSV")],
    },
    Sub {
        name: "pipeline",
        about: "Run every stage end to end",
        inputs: &[],
    },
];

fn command() -> Command {
    let mut root = Command::new("hgdomain")
        .about("Spatial domain detection with a KNN hypergraph and joint autoencoders")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in SUBCOMMANDS {
        let mut c = Command::new(sub.name).about(sub.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value configuration file"),
        );
        for &(key, help) in CONFIG_KEYS {
            let mut a = Arg::new(key).long(key).value_name("VALUE").help(help);
            if key == "phased" {
                a = a.num_args(0..=1).default_missing_value("true");
            }
            c = c.arg(a);
        }
        for &(name, default, help) in sub.inputs {
            c = c.arg(
                Arg::new(name)
                    .long(name)
                    .value_name("FILE")
                    .help(format!("{help} [default: <output>/{default}]")),
            );
        }
        root = root.subcommand(c);
    }
    root
}

fn resolve_config(m: &ArgMatches) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        cfg.apply_file(Path::new(path))?;
    }
    for &(key, _) in CONFIG_KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn input(m: &ArgMatches, cfg: &PipelineConfig, name: &str, default: &str) -> PathBuf {
    m.get_one::<String>(name)
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output.join(default))
}

/// Runs `body` with a fresh output set, removing its files on failure.
fn with_outputs(cfg: &PipelineConfig, body: impl FnOnce(&mut Outputs) -> Result<()>) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::create(&cfg.output)?;
    match body(&mut out) {
        Ok(()) => Ok(out.written().to_vec()),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn truth_for(cfg: &PipelineConfig, ids: &[String]) -> Result<Option<GroundTruthLabels>> {
    cfg.truth
        .as_deref()
        .map(|p| dataio::load_labels_subset(p, ids).map(|raw| GroundTruthLabels::from_raw(&raw)))
        .transpose()
}

fn non_negative(raw: &[i64], origin: &Path) -> Result<Vec<usize>> {
    raw.iter()
        .map(|&l| {
            usize::try_from(l).map_err(|_| Error::Invalid(format!("negative label {l} in {}", origin.display())))
        })
        .collect()
}

fn run_synth(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let ds = pipeline::synthesize(cfg)?;
    with_outputs(cfg, |out| pipeline::write_dataset(&ds, out))
}

fn run_hypergraph(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let ds = pipeline::load_dataset(cfg)?;
    with_outputs(cfg, |out| {
        let tiles = pipeline::tile_features(cfg, &ds.coords)?;
        if let Some(t) = &tiles {
            hgdomain::features::write_tile_features(
                &out.file(pipeline::TILE_FEATURES_FILE),
                ds.expression.spot_ids(),
                t,
            )?;
        }
        pipeline::build_hypergraph(cfg, &ds.coords, tiles.as_ref())?.save(&out.file(pipeline::HYPERGRAPH_FILE))
    })
}

fn run_train(cfg: &PipelineConfig, m: &ArgMatches) -> Result<Vec<PathBuf>> {
    let path = cfg
        .expression
        .as_deref()
        .ok_or_else(|| Error::Usage("--expression is required".into()))?;
    let mut expression = dataio::load_expression(path)?;
    if let Some(mask_path) = &cfg.mask {
        let mask = dataio::load_mask(mask_path, expression.spot_ids())?;
        expression = expression.select_rows(&mask.kept_indices());
    }
    let hg = Hypergraph::load(&input(m, cfg, "hypergraph", pipeline::HYPERGRAPH_FILE))?;
    let trained = pipeline::train(cfg, &expression, &hg)?;
    with_outputs(cfg, |out| {
        let ids = expression.spot_ids();
        table::write_matrix_file(&out.file(pipeline::FUSED_FILE), "f", ids, &trained.embeddings.fused)?;
        write_trace_file(&out.file(pipeline::LOSS_FILE), &trained.trace)?;
        trained.params.save(&out.file(pipeline::CHECKPOINT_FILE))
    })
}

fn run_cluster(cfg: &PipelineConfig, m: &ArgMatches) -> Result<Vec<PathBuf>> {
    let (ids, fused) = table::read_matrix(&input(m, cfg, "fused", pipeline::FUSED_FILE))?;
    let truth = truth_for(cfg, &ids)?;
    let (embedding, assignment) = pipeline::cluster(cfg, &fused, truth.map(|t| t.n_domains))?;
    with_outputs(cfg, |out| {
        table::write_matrix_file(&out.file(pipeline::EMBEDDING_FILE), "pc", &ids, &embedding)?;
        dataio::write_labels_file(&out.file(pipeline::LABELS_FILE), &ids, &assignment.labels)
    })
}

fn run_evaluate(cfg: &PipelineConfig, m: &ArgMatches) -> Result<Vec<PathBuf>> {
    let (ids, embedding) = table::read_matrix(&input(m, cfg, "embedding", pipeline::EMBEDDING_FILE))?;
    let labels_path = input(m, cfg, "labels", pipeline::LABELS_FILE);
    let labels = GroundTruthLabels::from_raw(&dataio::load_labels(&labels_path, &ids)?).labels;
    let truth = truth_for(cfg, &ids)?;
    let report = pipeline::evaluate(cfg, &embedding, &labels, truth.as_ref().map(|t| t.labels.as_slice()))?;
    with_outputs(cfg, |out| {
        report.save(&out.file(pipeline::METRICS_FILE))?;
        report.save_per_spot(&out.file(pipeline::ILISI_FILE), &ids)
    })
}

fn run_plot(cfg: &PipelineConfig, m: &ArgMatches) -> Result<Vec<PathBuf>> {
    let labels_path = input(m, cfg, "labels", pipeline::LABELS_FILE);
    let (ids, raw) = dataio::load_label_table(&labels_path)?;
    let labels = non_negative(&raw, &labels_path)?;
    let coords_path = cfg
        .coords
        .as_deref()
        .ok_or_else(|| Error::Usage("--coords is required".into()))?;
    let coords = dataio::load_coords(coords_path)?.subset(&ids)?;
    with_outputs(cfg, |out| pipeline::plot_domains(&coords, &labels, &out.file(pipeline::PLOT_FILE)))
}

fn run(m: &ArgMatches) -> Result<()> {
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let cfg = resolve_config(sub)?;
    let written = match name {
        "synth" => run_synth(&cfg)?,
        "hypergraph" => run_hypergraph(&cfg)?,
        "train" => run_train(&cfg, sub)?,
        "cluster" => run_cluster(&cfg, sub)?,
        "evaluate" => run_evaluate(&cfg, sub)?,
        "plot" => run_plot(&cfg, sub)?,
        "pipeline" => {
            let report = pipeline::run_pipeline(&cfg)?;
            if let Some(ari) = report.metrics.ari {
                println!("ari\t{ari}");
            }
            println!("ilisi_mean\t{}", report.metrics.ilisi_mean);
            report.files
        }
        other => unreachable!("unknown subcommand {other}"),
    };
    for p in written {
        println!("wrote\t{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn flag_overrides_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.cfg");
        std::fs::write(&cfg_path, "seed = 3\nepochs = 7\n").unwrap();
        let m = command()
            .try_get_matches_from(["hgdomain", "pipeline", "--config", cfg_path.to_str().unwrap(), "--seed", "11"])
            .unwrap();
        let cfg = resolve_config(m.subcommand().unwrap().1).unwrap();
        assert_eq!((cfg.seed, cfg.epochs, cfg.k_neighbors), (11, 7, 6));
    }

    #[test]
    fn bare_phased_flag_means_true() {
        let m = command().try_get_matches_from(["hgdomain", "train", "--phased"]).unwrap();
        assert!(resolve_config(m.subcommand().unwrap().1).unwrap().phased);
    }
}

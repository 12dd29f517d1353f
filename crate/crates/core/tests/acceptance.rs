//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use hgdomain::clustering::ClusterMethod;
use hgdomain::dataio::SpatialCoords;
use hgdomain::hypergraph::{adjacency_from_incidence, build_knn_hypergraph, degree_normalization, incidence_matrix};
use hgdomain::metrics::{adjusted_rand_index, ilisi};
use hgdomain::neuralnet::{
    default_pos_weight, gaussian_noise, gradient_check, mse_loss, weighted_bce_loss, Architecture, Batch, ModelParams,
};
use hgdomain::pipeline::{run_pipeline, PipelineConfig, LABELS_FILE, LOSS_FILE, METRICS_FILE, PLOT_FILE};
use hgdomain::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_coords(rng: &mut ChaCha8Rng, n: usize) -> SpatialCoords {
    let pos = Matrix::from_fn(n, 2, |_, _| rng.random_range(0.0..100.0));
    SpatialCoords::new(pos, (0..n).map(|i| format!("s{i}")).collect()).unwrap()
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let (n, m, r) = (30, 20, 8);
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = random_coords(&mut rng, n);
        let h = incidence_matrix(&build_knn_hypergraph(&coords, 6).unwrap());
        let p = degree_normalization(&h, &vec![1.0; n]).unwrap().propagation;
        let a = adjacency_from_incidence(&h);
        let x = Matrix::from_fn(n, m, |_, _| rng.random_range(0.0..2.0));
        let noise = gaussian_noise(n, r, 0.1, seed + 100);
        let batch = Batch {
            x: &x,
            propagation: &p,
            adjacency: &a,
            noise: &noise,
            pos_weight: default_pos_weight(&a),
            lambda_re: 1.0,
        };
        let params = ModelParams::init(&Architecture::new(m, r, r), seed).unwrap();
        worst = worst.max(gradient_check(&params, &batch, 1e-5).map_err(|e| e.to_string())?);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-4 && secs < 10.0,
        format!("5 seeds, max relative error {worst:.3e}, {secs:.2} s"),
    )
}

/// ARI from pair counts: both-same, same-in-a-only, same-in-b-only, both-different.
fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let (mut n11, mut n10, mut n01, mut n00) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
                (false, false) => n00 += 1,
            }
        }
    }
    let num = 2 * (n00 * n11 - n01 * n10);
    let den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=12);
        let ka = rng.random_range(1..=n);
        let kb = rng.random_range(1..=n);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let got = adjusted_rand_index(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((got - ari_by_pairs(&a, &b)).abs());
    }
    let hand = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1]).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-12 && hand == 4.0 / 7.0,
        format!(
            "1000 random pairs, max deviation from pair counting {worst:.1e}; hand case gives {hand} (pair counting gives {}), criterion expects 4/7",
            ari_by_pairs(&[0, 0, 1, 1], &[0, 0, 0, 1])
        ),
    )
}

fn hypergraph_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut asym, mut radius, mut fixed): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut adjacency_mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=60);
        let k = rng.random_range(1..=8.min(n - 1));
        let hg = build_knn_hypergraph(&random_coords(&mut rng, n), k).unwrap();
        let h = incidence_matrix(&hg);
        let norm = degree_normalization(&h, hg.edge_weights()).unwrap();
        let p = &norm.propagation;
        asym = asym.max((p - p.transpose()).amax());
        let eig = p.clone().symmetric_eigen();
        radius = radius.max(eig.eigenvalues.amax());
        let d_half = Matrix::from_fn(n, 1, |i, _| norm.vertex_degrees[i].sqrt());
        fixed = fixed.max((p * &d_half - &d_half).amax());

        let a = adjacency_from_incidence(&h);
        for i in 0..n {
            for j in 0..n {
                let shared = i != j && hg.hyperedges().iter().any(|e| e.contains(&i) && e.contains(&j));
                if a[(i, j)] != if shared { 1.0 } else { 0.0 } {
                    adjacency_mismatches += 1;
                }
            }
        }
    }
    check(
        asym <= 1e-10 && radius <= 1.0 + 1e-8 && fixed <= 1e-10 && adjacency_mismatches == 0,
        format!(
            "100 graphs: asymmetry {asym:.1e}, spectral radius {radius:.12}, fixed-vector residual {fixed:.1e}, adjacency mismatches {adjacency_mismatches}"
        ),
    )
}

fn loss_anchors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 9;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = if rng.random_bool(0.3) { 1.0 } else { 0.0 };
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let half = weighted_bce_loss(&Matrix::from_element(n, n, 0.5), &a, 1.0).map_err(|e| e.to_string())?;
    let clamped = weighted_bce_loss(&a, &a, 1.0).map_err(|e| e.to_string())?;
    let mse = mse_loss(&Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]), &Matrix::zeros(2, 2))
        .map_err(|e| e.to_string())?;
    check(
        (half - std::f64::consts::LN_2).abs() <= 1e-10 && clamped <= 1e-5 && mse == 7.5,
        format!("S = 0.5 gives {half:.15}, S = A gives {clamped:.3e}, hand MSE {mse}"),
    )
}

fn fixture(dir: &Path, name: &str, mix: f64, method: ClusterMethod) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.set("synth", "3x50x40").unwrap();
    cfg.synth_noise_sd = 0.1;
    cfg.synth_mix = mix;
    cfg.seed = 7;
    cfg.cluster_method = method;
    cfg.output = dir.join(name);
    cfg
}

struct Run {
    ari: f64,
    ilisi: f64,
    secs: f64,
}

fn run(cfg: &PipelineConfig) -> Result<Run, String> {
    let start = Instant::now();
    let report = run_pipeline(cfg).map_err(|e| e.to_string())?;
    Ok(Run {
        ari: report.metrics.ari.ok_or("no ARI reported")?,
        ilisi: report.metrics.ilisi_mean,
        secs: start.elapsed().as_secs_f64(),
    })
}

fn recovery(dir: &Path) -> Outcome {
    let mut km_cfg = fixture(dir, "recover_kmeans", 0.0, ClusterMethod::KMeans);
    km_cfg.n_clusters = Some(3);
    let km = run(&km_cfg)?;
    let ld = run(&fixture(dir, "recover_leiden", 0.0, ClusterMethod::Leiden))?;
    let in_range = |v: f64| (1.0..=3.0).contains(&v);
    check(
        km.ari >= 0.8 && ld.ari >= 0.8 && in_range(km.ilisi) && in_range(ld.ilisi) && km.secs.max(ld.secs) < 120.0,
        format!(
            "k-means ARI {:.4} iLISI {:.4} ({:.1} s); Leiden ARI {:.4} iLISI {:.4} ({:.1} s)",
            km.ari, km.ilisi, km.secs, ld.ari, ld.ilisi, ld.secs
        ),
    )
}

fn monotonicity(dir: &Path) -> Outcome {
    let mut aris = Vec::new();
    for mix in [0.0, 0.1, 0.3] {
        aris.push(run(&fixture(dir, &format!("mix_{mix}"), mix, ClusterMethod::KMeans))?.ari);
    }
    check(
        aris.windows(2).all(|w| w[1] <= w[0]),
        format!("k-means ARI at mix 0, 0.1, 0.3: {aris:.4?}"),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let first = fixture(dir, "det_a", 0.0, ClusterMethod::Leiden);
    let second = fixture(dir, "det_b", 0.0, ClusterMethod::Leiden);
    run(&first)?;
    run(&second)?;
    let mut differing = Vec::new();
    for f in [LABELS_FILE, METRICS_FILE, PLOT_FILE] {
        let read = |c: &PipelineConfig| fs::read(c.output.join(f)).map_err(|e| e.to_string());
        if read(&first)? != read(&second)? {
            differing.push(f);
        }
    }
    check(differing.is_empty(), format!("files differing between runs: {differing:?}"))
}

fn ilisi_bounds() -> Outcome {
    // points on a circle with alternating labels
    let n = 40;
    let ring = Matrix::from_fn(n, 2, |i, j| {
        let t = std::f64::consts::TAU * i as f64 / n as f64;
        if j == 0 {
            t.cos()
        } else {
            t.sin()
        }
    });
    let alternating: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut worst: f64 = 0.0;
    for k in [4, 8, 12] {
        let (_, per) = ilisi(&ring, &alternating, k).map_err(|e| e.to_string())?;
        worst = worst.max(per.iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cloud = Matrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0));
    let (single, _) = ilisi(&cloud, &[4; 50], 10).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-9 && single == 1.0,
        format!("alternating ring max |iLISI - 2| {worst:.1e}; single-label mean {single}"),
    )
}

fn training(dir: &Path) -> Outcome {
    let path = dir.join("recover_kmeans").join(LOSS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let total: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let (first, last) = (total[0], *total.last().unwrap());
    // moving-average step t→t+1 changes by (x[t+20] − x[t]) / 20
    let rises = (0..total.len().saturating_sub(20)).filter(|&t| total[t + 20] > total[t]).count();
    check(
        last < 0.5 * first && rises == 0,
        format!("{} epochs, total loss {first:.4} -> {last:.4}, moving-average rises {rises}", total.len()),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let criteria: [Criterion; 9] = [
        ("gradient correctness", Box::new(gradients)),
        ("metric oracles", Box::new(metric_oracles)),
        ("hypergraph algebra", Box::new(hypergraph_algebra)),
        ("loss anchors", Box::new(loss_anchors)),
        ("synthetic recovery", Box::new(|| recovery(d))),
        ("mix monotonicity", Box::new(|| monotonicity(d))),
        ("determinism", Box::new(|| determinism(d))),
        ("iLISI bounds", Box::new(ilisi_bounds)),
        ("training sanity", Box::new(|| training(d))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} of 9 passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each, and exits non-zero if any fails. Criteria run sequentially so their
//! timings are not distorted by parallel tests.

use std::time::Instant;

use bundlelab::manifold::{sample_circle, sample_disjoint_circles, PointCloud};
use bundlelab::runner::{
    emit_report, run_experiment, run_grid, BundleDataset, CircleDataset, ComparisonTable, DatasetConfig,
    ExperimentConfig, ExperimentReport, Objective,
};
use bundlelab::tensor_net::{grad_check, loss_reconstruction, Tensor};
use bundlelab::topo::{betti_at, dominant_scale, pairwise_distances, rips_persistence, scale_within_budget};

mod common;
use common::{layer_stacks, losses, network, oracle, probe_scales, random, random_cloud};

const SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Simplex budget shared with the runner's topology diagnostics.
const MAX_SIMPLICES: usize = 1_500_000;

/// Betti numbers at the dominant scale, built the way the runner builds them.
fn read_betti(cloud: &PointCloud) -> (String, Option<(usize, usize)>) {
    let d = pairwise_distances(cloud).unwrap();
    let scale = scale_within_budget(&d, 0.5 * d.max_distance(), MAX_SIMPLICES);
    let dg = rips_persistence(&d, scale).unwrap();
    let betti = dominant_scale(&dg).ok().map(|s| betti_at(&dg, s));
    (dg.to_csv_string(), betti)
}

fn oracle_equivalence() -> Verdict {
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for seed in 0..50u64 {
        let n = 4 + (seed as usize % 9);
        let pts = random_cloud(seed, n, 2 + (seed as usize % 2));
        let d = pairwise_distances(&PointCloud::from_points(&pts).unwrap()).unwrap();
        let dg = rips_persistence(&d, d.max_distance() + 1.0).unwrap();
        for s in probe_scales(&pts) {
            checked += 1;
            if betti_at(&dg, s) != oracle::betti(&pts, s) {
                mismatches.push((seed, s));
            }
        }
    }
    verdict(
        mismatches.is_empty(),
        format!("{checked} scales over 50 clouds, {} mismatches {:?}", mismatches.len(), &mismatches[..mismatches.len().min(3)]),
    )
}

fn analytic_topology() -> Verdict {
    let mut got = Vec::new();
    for seed in 0..5 {
        let (_, one) = read_betti(&sample_circle(200, 1.0, 0.0, seed).unwrap());
        let (_, two) = read_betti(&sample_disjoint_circles(2, 120, 4.0, 0.0, seed).unwrap());
        got.push((one, two));
    }
    let pass = got.iter().all(|&(a, b)| a == Some((1, 1)) && b == Some((2, 2)));
    verdict(pass, format!("(circle, two circles) per seed: {got:?}"))
}

fn gradient_fidelity() -> Verdict {
    let mut worst = (0.0f64, String::new());
    let mut combos = 0;
    for (layer, stack) in layer_stacks() {
        for seed in 0..10 {
            let net = network(stack.clone(), seed);
            let x = random(6, 4, seed + 100);
            for (name, loss) in losses(seed) {
                let err = grad_check(&net, &x, &loss, 1e-5).unwrap();
                combos += 1;
                if err > worst.0 {
                    worst = (err, format!("{layer} x {name} seed {seed}"));
                }
            }
        }
    }
    verdict(worst.0 < 1e-4, format!("{combos} checks, worst {:.2e} ({})", worst.0, worst.1))
}

fn circle_config(seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(DatasetConfig::Circle(CircleDataset::default()), Objective::Reconstruction);
    config.encoder.latent_dim = 2;
    config.training.seed = seed;
    config
}

/// Reconstruction MSE over the whole clean circle, recomputed from the
/// trained networks.
fn circle_mse(report: &ExperimentReport) -> f64 {
    let c = CircleDataset::default();
    let cloud = sample_circle(c.count, c.radius, c.noise_sigma, c.seed).unwrap();
    let x = Tensor::matrix(cloud.len(), 2, cloud.coords().to_vec()).unwrap();
    let z = report.encoder.infer(&x).unwrap();
    let x_hat = report.decoder.as_ref().unwrap().infer(&z).unwrap();
    loss_reconstruction(&x_hat, &x).unwrap()
}

fn homotopy_preservation(circles: &[ExperimentReport]) -> Verdict {
    let cells: Vec<(f64, Option<(usize, usize)>)> = circles.iter().map(|r| (circle_mse(r), r.betti)).collect();
    let good = cells.iter().filter(|(mse, b)| *mse < 0.01 && *b == Some((1, 1))).count();
    let shown: Vec<String> = cells.iter().map(|(m, b)| format!("mse {m:.2e} betti {b:?}")).collect();
    verdict(good >= 2, format!("{good}/3 seeds: {}", shown.join("; ")))
}

fn bundle_grid() -> Vec<ExperimentConfig> {
    let dataset = DatasetConfig::Bundle(BundleDataset::default());
    [Objective::Classification, Objective::Alignment, Objective::Contrastive, Objective::Reconstruction]
        .into_iter()
        .map(|o| ExperimentConfig::new(dataset.clone(), o))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn classification_cells(grid: &[ExperimentReport]) -> Vec<&ExperimentReport> {
    grid.iter().filter(|r| r.config.objective == Objective::Classification).collect()
}

fn discriminative_collapse(grid: &[ExperimentReport]) -> Verdict {
    let cells = classification_cells(grid);
    let probe = median(cells.iter().map(|r| r.probe_accuracy.unwrap()).collect());
    let ratio = median(cells.iter().map(|r| r.semantic_ratio.unwrap_or(f64::INFINITY)).collect());
    verdict(
        cells.len() == 3 && probe >= 0.90 && ratio < 0.5,
        format!("median probe {probe:.4} (>= 0.90), median semantic collapse ratio {ratio:.4} (< 0.5)"),
    )
}

fn objective_ordering(table: &ComparisonTable) -> Verdict {
    let chain = [Objective::Classification, Objective::Alignment, Objective::Contrastive, Objective::Reconstruction];
    let medians: Vec<String> = chain
        .iter()
        .map(|&o| format!("{o} {:.4}", table.median_for(o).and_then(|m| m.probe_accuracy).unwrap_or(f64::NAN)))
        .collect();
    let probe = |o| table.median_for(o).and_then(|m| m.probe_accuracy).unwrap_or(f64::NAN);
    let gap = probe(Objective::Classification) - probe(Objective::Reconstruction);
    verdict(
        table.ordered(&chain) && gap >= 0.15,
        format!("medians {}; classification - reconstruction = {gap:.4}", medians.join(", ")),
    )
}

fn convexity(all: &[&ExperimentReport]) -> Verdict {
    let rates: Vec<(String, f64)> = all
        .iter()
        .flat_map(|r| {
            r.convexity
                .iter()
                .map(move |(name, rate)| (format!("{}/{}/{name}", r.config.objective, r.config.training.seed), *rate))
        })
        .collect();
    let bad: Vec<&(String, f64)> = rates.iter().filter(|(_, r)| *r != 0.0).collect();
    let pairs = all.first().map_or(0, |r| r.config.diagnostics.convexity_pairs);
    verdict(
        !rates.is_empty() && bad.is_empty(),
        format!("{} affine readouts x {pairs} pairs, nonzero rates: {bad:?}", rates.len()),
    )
}

fn expand_and_snap(grid: &[ExperimentReport]) -> Verdict {
    let mut shrank = 0;
    let mut expanded = 0;
    let mut shown = Vec::new();
    for r in classification_cells(grid) {
        let s = &r.series;
        let last = s.len() - 1;
        let within_down = s.within_class[last] < s.within_class[0];
        let peak = s.expansion[1..last].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        shrank += usize::from(within_down);
        expanded += usize::from(peak > s.expansion[0]);
        shown.push(format!(
            "seed {}: within {:.3}->{:.3}, expansion {:.3} peak {:.3}",
            r.config.training.seed, s.within_class[0], s.within_class[last], s.expansion[0], peak
        ));
    }
    verdict(
        shrank == 3 && expanded >= 2,
        format!("within-class shrank {shrank}/3, expanded {expanded}/3 ({})", shown.join("; ")),
    )
}

fn report_csvs(report: &ExperimentReport) -> Vec<Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    emit_report(report, dir.path())
        .unwrap()
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

fn determinism(grid: &[ExperimentReport], circles: &[ExperimentReport], table: &ComparisonTable) -> Verdict {
    let mut same = Vec::new();
    let cls = classification_cells(grid)[0];
    same.push(("classification report", report_csvs(cls) == report_csvs(&run_experiment(&cls.config).unwrap())));
    same.push((
        "circle report",
        report_csvs(&circles[0]) == report_csvs(&run_experiment(&circles[0].config).unwrap()),
    ));
    let again = ComparisonTable::from_reports(grid).unwrap();
    same.push(("comparison table", again.to_csv_string() == table.to_csv_string()));
    let topo = |seed| read_betti(&sample_disjoint_circles(2, 120, 4.0, 0.0, seed).unwrap()).0;
    same.push(("topology diagram", topo(0) == topo(0)));
    let bad: Vec<&str> = same.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(bad.is_empty(), format!("{} reruns compared, differing: {bad:?}", same.len()))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, limit: Option<f64>, secs: f64, v: Verdict| {
        let in_time = limit.is_none_or(|l| secs < l);
        let pass = v.pass && in_time;
        failures += usize::from(!pass);
        let budget = limit.map_or(String::new(), |l| format!(" / {l:.0}s"));
        println!(
            "[{}] {id}. {name} ({secs:.1}s{budget}): {}{}",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            if in_time { "" } else { " [over time budget]" }
        );
    };
    fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
        let t = Instant::now();
        let out = f();
        (out, t.elapsed().as_secs_f64())
    }

    let (v, s) = timed(oracle_equivalence);
    report(1, "persistence oracle equivalence", Some(10.0), s, v);
    let (v, s) = timed(analytic_topology);
    report(2, "analytic topology", Some(30.0), s, v);
    let (v, s) = timed(gradient_fidelity);
    report(3, "gradient fidelity", Some(60.0), s, v);
    let ((circles, v), s) = timed(|| {
        let circles: Vec<ExperimentReport> = SEEDS.iter().map(|&seed| run_experiment(&circle_config(seed)).unwrap()).collect();
        let v = homotopy_preservation(&circles);
        (circles, v)
    });
    report(4, "reconstruction preserves the circle", Some(120.0), s, v);

    let (grid, grid_secs) = timed(|| run_grid(&bundle_grid(), &SEEDS).unwrap());
    let cls_secs: f64 = classification_cells(&grid).iter().map(|r| r.wall_seconds).sum();
    report(5, "discriminative collapse", Some(300.0), cls_secs, discriminative_collapse(&grid));
    let table = ComparisonTable::from_reports(&grid).unwrap();
    report(6, "objective ordering", Some(900.0), grid_secs, objective_ordering(&table));
    let all: Vec<&ExperimentReport> = grid.iter().chain(&circles).collect();
    report(7, "affine readouts have convex regions", None, 0.0, convexity(&all));
    report(8, "expand and snap", None, 0.0, expand_and_snap(&grid));
    let (v, s) = timed(|| determinism(&grid, &circles, &table));
    report(9, "byte-identical reruns", None, s, v);

    print!("{}", table.to_csv_string());
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

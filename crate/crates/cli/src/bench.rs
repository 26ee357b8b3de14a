use std::time::Instant;

use anyhow::Result;
use panograph::cues::ColumnGrid;
use panograph::evaluation::{evaluate, summarize, to_csv, AlignedErrors, Pooling};
use panograph::graph::build_graph;
use panograph::scene::{synth_scene, Cluster, RoomShape, SynthParams, MAX_CLUSTER_SIZE};
use panograph::solvers::{greedy_spanning_tree, pgo, Solution};
use panograph::Pose2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::commands::{ground_truth, noise_spec, pgo_config};
use crate::io::{emit, usage, write_atomic};
use crate::svg::{self, Estimate, Panel};
use crate::{BenchArgs, NoiseArgs, Shape};

const METHODS: [&str; 2] = ["greedy", "pgo"];
const COLORS: [&str; 2] = ["#e07b00", "#1f5fd1"];

struct Run {
    solution: Solution,
    errors: AlignedErrors,
}

struct ClusterResult {
    size: usize,
    rooms: Vec<Vec<panograph::Vec2>>,
    truth: Vec<Pose2>,
    /// `[scale][method]`
    runs: Vec<[Run; 2]>,
}

fn validate(a: &BenchArgs) -> Result<()> {
    if a.clusters == 0 {
        return usage("--clusters must be positive");
    }
    if a.sizes.is_empty()
        || a.sizes
            .iter()
            .any(|&s| !(2..=MAX_CLUSTER_SIZE).contains(&s))
    {
        return usage(format!("cluster sizes must lie in 2..={MAX_CLUSTER_SIZE}"));
    }
    if a.noise_scales.is_empty() {
        return usage("--noise-scales needs at least one value");
    }
    Ok(())
}

fn one_cluster(a: &BenchArgs, index: usize, seed: u64, grid: &ColumnGrid) -> Result<ClusterResult> {
    let size = a.sizes[index % a.sizes.len()];
    let shape = match a.shape {
        Shape::Convex => RoomShape::Convex,
        Shape::Notched => RoomShape::Notched,
        Shape::Mixed if index.is_multiple_of(2) => RoomShape::Convex,
        Shape::Mixed => RoomShape::Notched,
    };
    let params = SynthParams {
        rooms: 1,
        cameras_per_room: size,
        shape,
        ..SynthParams::default()
    };
    let scene = synth_scene(seed, &params)?;
    let cluster = Cluster::new(scene.clusters[0].clone(), 0)?;
    let gt = ground_truth(&scene);
    let cfg = pgo_config(a.pgo_edges);
    let noise_args = NoiseArgs {
        sigma_t: a.sigma_t,
        sigma_theta: a.sigma_theta,
        outlier_factor: a.outlier_factor,
    };
    let mut runs = Vec::with_capacity(a.noise_scales.len());
    for &scale in &a.noise_scales {
        let noise = noise_spec(&noise_args, scale)?;
        // same draws at every scale, so the sweep varies only the magnitude
        let g = build_graph(&cluster, &scene, grid, noise.as_ref(), seed)?;
        let greedy = greedy_spanning_tree(&g)?;
        let refined = pgo(&g, &greedy, &cfg)?;
        let run = |solution: Solution| -> Result<Run> {
            let errors = evaluate(&solution, &gt)?;
            Ok(Run { solution, errors })
        };
        runs.push([run(greedy)?, run(refined)?]);
    }
    Ok(ClusterResult {
        size,
        rooms: scene
            .rooms
            .values()
            .map(|l| l.vertices().to_vec())
            .collect(),
        truth: cluster.poses(&scene)?,
        runs,
    })
}

fn method_label(a: &BenchArgs, method: &str, scale: f64) -> String {
    if a.noise_scales.len() == 1 {
        method.to_string()
    } else {
        format!("{method}@x{scale}")
    }
}

fn panels(a: &BenchArgs, results: &[ClusterResult]) -> Vec<Panel> {
    results
        .iter()
        .take(a.svg_panels)
        .enumerate()
        .map(|(k, r)| {
            let runs = &r.runs[0];
            let estimates = (0..2)
                .map(|m| Estimate {
                    label: method_label(a, METHODS[m], a.noise_scales[0]),
                    color: COLORS[m],
                    poses: runs[m]
                        .solution
                        .poses
                        .iter()
                        .map(|p| runs[m].errors.alignment.compose(p))
                        .collect(),
                })
                .collect();
            Panel {
                title: format!(
                    "cluster {k} ({} panos) ATE {:.3} / {:.3} m",
                    r.size,
                    runs[0].errors.mean_translation(),
                    runs[1].errors.mean_translation()
                ),
                rooms: r.rooms.clone(),
                truth: r.truth.clone(),
                estimates,
            }
        })
        .collect()
}

pub fn run(a: &BenchArgs) -> Result<()> {
    validate(a)?;
    let start = Instant::now();
    let grid = ColumnGrid::new(a.width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let seeds: Vec<u64> = (0..a.clusters).map(|_| rng.random()).collect();
    let results = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &s)| one_cluster(a, k, s, &grid))
        .collect::<Result<Vec<_>>>()?;

    let pooling = if a.per_cluster {
        Pooling::PerCluster
    } else {
        Pooling::PerPano
    };
    let mut sizes = a.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut rows = Vec::new();
    for (si, &scale) in a.noise_scales.iter().enumerate() {
        for &size in &sizes {
            for (m, method) in METHODS.iter().enumerate() {
                let errs: Vec<AlignedErrors> = results
                    .iter()
                    .filter(|r| r.size == size)
                    .map(|r| r.runs[si][m].errors.clone())
                    .collect();
                if errs.is_empty() {
                    continue;
                }
                rows.push(summarize(
                    &errs,
                    size,
                    &method_label(a, method, scale),
                    "all",
                    pooling,
                )?);
            }
        }
    }
    emit(a.output.as_deref(), &to_csv(&rows))?;
    if let Some(path) = &a.svg {
        write_atomic(path, svg::render(&panels(a, &results)).as_bytes())?;
    }
    eprintln!(
        "bench: {} clusters, {} rows in {:.2}s",
        results.len(),
        rows.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Result};
use panograph::cues::{correspondence_and_covis, edge_covis_score, ColumnGrid};
use panograph::evaluation::{evaluate, summarize, to_csv, AlignedErrors, Pooling};
use panograph::graph::{build_graph, classify_connectivity, NoiseSpec, PoseGraph};
use panograph::losses::LossInstance;
use panograph::message_passing::reference::LinearReference;
use panograph::message_passing::{infer_with_origin_selection, mean_covis_scorer};
use panograph::scene::{synth_scene, Cluster, RoomShape, Scene, SynthParams};
use panograph::solvers::{greedy_spanning_tree, pgo, PgoConfig, PgoEdgeSet, Solution};
use panograph::Pose2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::{emit, read_text, usage, write_atomic};
use crate::{
    ClusterArgs, CuesArgs, EdgeSet, EvalArgs, GraphArgs, LossCheckArgs, Method, MpArgs, MpDemoArgs,
    NoiseArgs, Shape, SolveArgs, SynthArgs,
};

pub fn load_scene(path: &Path) -> Result<Scene> {
    Ok(Scene::from_json_str(&read_text(path)?)?)
}

pub fn load_graph(path: &Path) -> Result<PoseGraph> {
    Ok(PoseGraph::from_json_str(&read_text(path)?)?)
}

pub fn ground_truth(scene: &Scene) -> BTreeMap<String, Pose2> {
    scene
        .panos
        .iter()
        .map(|(id, cam)| (id.clone(), cam.pose()))
        .collect()
}

pub fn pgo_config(edges: EdgeSet) -> PgoConfig {
    PgoConfig {
        edges: match edges {
            EdgeSet::TreePlusOne => PgoEdgeSet::TreePlusOne,
            EdgeSet::All => PgoEdgeSet::All,
        },
        ..PgoConfig::default()
    }
}

fn resolve_cluster(args: &ClusterArgs) -> Result<(Scene, Cluster, ColumnGrid)> {
    let scene = load_scene(&args.scene)?;
    let ids = match (&args.cluster, &args.panos) {
        (Some(k), None) => match scene.clusters.get(*k) {
            Some(ids) => ids.clone(),
            None => {
                return usage(format!(
                    "cluster {k} does not exist; the scene has {}",
                    scene.clusters.len()
                ))
            }
        },
        (None, Some(ids)) => {
            for id in ids {
                scene.camera(id)?;
            }
            ids.clone()
        }
        _ => return usage("select a cluster with --cluster or --panos"),
    };
    let cluster = Cluster::new(ids, args.origin)?;
    let grid = ColumnGrid::new(args.width)?;
    Ok((scene, cluster, grid))
}

pub fn noise_spec(n: &NoiseArgs, scale: f64) -> Result<Option<NoiseSpec>> {
    let valid = |v: f64| v.is_finite() && v >= 0.0;
    if !valid(n.sigma_t) || !valid(n.sigma_theta) || !valid(scale) {
        return usage("noise std-devs and scales must be finite and non-negative");
    }
    if n.outlier_factor
        .is_some_and(|f| !(f.is_finite() && f > 0.0))
    {
        return usage("outlier factor must be positive");
    }
    if n.sigma_t == 0.0 && n.sigma_theta == 0.0 {
        return Ok(None);
    }
    Ok(Some(NoiseSpec {
        sigma_t: scale * n.sigma_t,
        sigma_theta: scale * n.sigma_theta,
        outlier_factor: n.outlier_factor,
    }))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let shape = match a.shape {
        Shape::Convex => RoomShape::Convex,
        Shape::Notched => RoomShape::Notched,
        Shape::Mixed => return usage("synth takes --shape convex or notched"),
    };
    let params = SynthParams {
        rooms: a.rooms,
        cameras_per_room: a.panos_per_room,
        size_range: (a.min_size, a.max_size),
        shape,
        margin: a.margin,
    };
    let scene = synth_scene(a.seed, &params)?;
    emit(a.output.as_deref(), &scene.to_json_string())
}

pub fn cues(a: &CuesArgs) -> Result<()> {
    let (scene, cluster, grid) = resolve_cluster(&a.cluster)?;
    fs::create_dir_all(&a.output)?;
    let ids = &cluster.pano_ids;
    let mut report = String::new();
    for src in ids {
        for dst in ids {
            if src == dst {
                continue;
            }
            let cue = correspondence_and_covis(&scene, src, dst, &grid)?;
            let stem = format!("{src}__{dst}");
            write_atomic(
                &a.output.join(format!("{stem}.cues.json")),
                cue.to_json_string().as_bytes(),
            )?;
            if a.binary {
                let mut bytes = Vec::new();
                cue.write_binary(&mut bytes)?;
                write_atomic(&a.output.join(format!("{stem}.cues.bin")), &bytes)?;
            }
            let _ = writeln!(report, "{src} {dst} {:.6}", edge_covis_score(&cue));
        }
    }
    emit(None, &report)
}

pub fn graph(a: &GraphArgs) -> Result<()> {
    let (scene, cluster, grid) = resolve_cluster(&a.cluster)?;
    let noise = noise_spec(&a.noise, 1.0)?;
    let seed = match (&noise, a.seed) {
        (Some(_), None) => return usage("--seed is required with noise"),
        (_, s) => s.unwrap_or(0),
    };
    let g = build_graph(&cluster, &scene, &grid, noise.as_ref(), seed)?;
    emit(a.output.as_deref(), &g.to_json_string())
}

/// Per-node features for the reference pipeline: mean outgoing and incoming
/// observed co-visibility, padded with seeded uniform noise.
fn demo_features(g: &PoseGraph, seed: u64, dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim < 2 {
        return usage("feature size must be at least 2");
    }
    let n = g.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_score = |pick: &dyn Fn(usize) -> Option<f64>| {
        let v: Vec<f64> = (0..n).filter_map(pick).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok((0..n)
        .map(|i| {
            let out = mean_score(&|j| g.edge(i, j).map(|e| e.covis_score));
            let inc = mean_score(&|j| g.edge(j, i).map(|e| e.covis_score));
            let mut f = vec![out, inc];
            f.extend((2..dim).map(|_| rng.random_range(-1.0..1.0)));
            f
        })
        .collect())
}

fn mp_solution(g: &PoseGraph, seed: u64, mp: &MpArgs) -> Result<Solution> {
    if mp.layers == 0 || mp.dense_width == 0 {
        return usage("layers and dense width must be positive");
    }
    let features = demo_features(g, seed, mp.dim)?;
    let fns = LinearReference::new(seed, mp.dim, mp.dense_width, mp.layers);
    Ok(infer_with_origin_selection(
        g.nodes(),
        features,
        &fns,
        mp.layers,
        mean_covis_scorer,
    )?)
}

pub fn estimate(
    g: &PoseGraph,
    method: Method,
    cfg: &PgoConfig,
    seed: Option<u64>,
    mp: &MpArgs,
) -> Result<Solution> {
    match method {
        Method::Greedy => Ok(greedy_spanning_tree(g)?),
        Method::Pgo => {
            let init = greedy_spanning_tree(g)?;
            Ok(pgo(g, &init, cfg)?)
        }
        Method::MpDemo => match seed {
            Some(s) => mp_solution(g, s, mp),
            None => usage("--seed is required for mp-demo"),
        },
    }
}

pub fn solve(a: &SolveArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let sol = estimate(&g, a.method, &pgo_config(a.pgo_edges), a.seed, &a.mp)?;
    emit(a.output.as_deref(), &sol.to_json_string())
}

pub fn connectivity_label(
    scene: &Scene,
    sol: &Solution,
    grid: &ColumnGrid,
    threshold: f64,
) -> Result<&'static str> {
    let cluster = Cluster::new(sol.node_ids.clone(), sol.origin_index)?;
    let g = build_graph(&cluster, scene, grid, None, 0)?;
    Ok(classify_connectivity(&g, threshold).label.as_str())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return usage("threshold must lie in [0, 1]");
    }
    let scene = load_scene(&a.scene)?;
    let gt = ground_truth(&scene);
    let grid = ColumnGrid::new(a.width)?;
    let mut groups: BTreeMap<(usize, &'static str), Vec<AlignedErrors>> = BTreeMap::new();
    for path in &a.poses {
        let sol = Solution::from_json_str(&read_text(path)?)?;
        let label = connectivity_label(&scene, &sol, &grid, a.threshold)?;
        groups
            .entry((sol.node_ids.len(), label))
            .or_default()
            .push(evaluate(&sol, &gt)?);
    }
    let pooling = if a.per_cluster {
        Pooling::PerCluster
    } else {
        Pooling::PerPano
    };
    let rows = groups
        .iter()
        .map(|((size, label), errs)| summarize(errs, *size, &a.method, label, pooling))
        .collect::<panograph::Result<Vec<_>>>()?;
    emit(a.output.as_deref(), &to_csv(&rows))
}

pub fn loss_check(a: &LossCheckArgs) -> Result<()> {
    if a.instances == 0 || a.nodes < 2 || a.width == 0 || a.step.is_nan() || a.step <= 0.0 {
        return usage(
            "need at least one instance, two nodes, a positive width and a positive step",
        );
    }
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    for k in 0..a.instances as u64 {
        let inst = LossInstance::random(a.seed.wrapping_add(k), a.nodes, a.width);
        for c in inst.check_all(a.step)? {
            match worst.iter_mut().find(|(n, _)| *n == c.name) {
                Some(w) => w.1 = w.1.max(c.rel_err),
                None => worst.push((c.name, c.rel_err)),
            }
        }
    }
    let mut report = String::new();
    let mut failed = 0;
    for (name, err) in &worst {
        let ok = *err <= a.tolerance;
        failed += usize::from(!ok);
        let _ = writeln!(
            report,
            "{:<5} {name:<24} max rel err {err:.3e}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    emit(None, &report)?;
    if failed > 0 {
        bail!(
            "{failed} loss gradient(s) exceed tolerance {:e}",
            a.tolerance
        );
    }
    Ok(())
}

pub fn mp_demo(a: &MpDemoArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let sol = mp_solution(&g, a.seed, &a.mp)?;
    let mut out = format!(
        "origin {} (mean predicted co-visibility {:.6})\n",
        sol.origin(),
        sol.diagnostics.final_cost
    );
    for (id, p) in sol.node_ids.iter().zip(&sol.poses) {
        let t = p.translation();
        let _ = writeln!(
            out,
            "{id} theta_deg {:.6} x {:.6} y {:.6}",
            p.theta().to_degrees(),
            t.x,
            t.y
        );
    }
    emit(None, &out)
}

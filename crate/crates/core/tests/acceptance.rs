//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use panograph::cues::{boundary_angle_row, correspondence_and_covis, edge_covis_score, ColumnGrid};
use panograph::evaluation::{align_2d, evaluate, summarize, to_csv, Pooling, CSV_HEADER};
use panograph::graph::{build_graph, EdgeObservation, NoiseSpec, PoseGraph};
use panograph::losses::{
    ac_loss, boundary_loss, covis_loss, edge_loss, global_node_loss, gradcheck, node_loss,
    relative_node_loss, EdgeLossComponents, GroundTruth, LossInstance, LossWeights, PosePrediction,
    Predictions, Reduction, BCE_EPS,
};
use panograph::message_passing::reference::{CueOracle, LinearReference};
use panograph::message_passing::{
    infer_with_origin_selection, mean_covis_scorer, run, select_origin, step, step_in_order,
    MpGraph, DEFAULT_LAYERS,
};
use panograph::scene::{
    sample_clusters, synth_scene, Camera, Cluster, Layout, RoomShape, SamplingOptions, Scene,
    SynthParams,
};
use panograph::solvers::{
    between_jacobians, between_residual, greedy_spanning_tree, pgo, PgoConfig, Solution,
};
use panograph::{wrap_angle, Angle, Pose2, Vec2};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

// ---------------------------------------------------------------------------
// independent oracles

fn hmat(theta: f64, x: f64, y: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, x, s, c, y, 0.0, 0.0, 1.0)
}

fn mat_of(p: &Pose2) -> Matrix3<f64> {
    hmat(p.theta(), p.translation().x, p.translation().y)
}

fn random_pose(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    (
        rng.random_range(-PI..PI),
        rng.random_range(-20.0..20.0),
        rng.random_range(-20.0..20.0),
    )
}

fn max_abs(m: Matrix3<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Between-factor cost written directly from poses, for the grid oracle.
fn cycle_cost(poses: &[(f64, f64, f64)], meas: &[(usize, usize, (f64, f64, f64))]) -> f64 {
    let cfg = PgoConfig::default();
    let (wt, wr) = (1.0 / cfg.odometry.sigma_t, 1.0 / cfg.odometry.sigma_theta);
    let (pt, pr) = (1.0 / cfg.prior.sigma_t, 1.0 / cfg.prior.sigma_theta);
    let o = poses[0];
    let mut c = (o.0 * pr).powi(2) + (o.1 * pt).powi(2) + (o.2 * pt).powi(2);
    for &(i, j, (zt, zx, zy)) in meas {
        let (ti, xi, yi) = poses[i];
        let (tj, xj, yj) = poses[j];
        let (s, co) = ti.sin_cos();
        let (dx, dy) = (xj - xi, yj - yi);
        let ex = co * dx + s * dy - zx;
        let ey = -s * dx + co * dy - zy;
        let mut et = tj - ti - zt;
        et = et.sin().atan2(et.cos());
        c += (ex * wt).powi(2) + (ey * wt).powi(2) + (et * wr).powi(2);
    }
    0.5 * c
}

// ---------------------------------------------------------------------------
// shared fixtures

fn single_room_cluster(seed: u64, n: usize, shape: RoomShape) -> (Scene, Cluster) {
    let params = SynthParams {
        rooms: 1,
        cameras_per_room: n,
        shape,
        ..SynthParams::default()
    };
    let scene = synth_scene(seed, &params).expect("synthetic scene");
    let ids: Vec<String> = scene.panos.keys().cloned().collect();
    let cluster = Cluster::new(ids, 0).expect("cluster");
    (scene, cluster)
}

fn gt_map(scene: &Scene, cluster: &Cluster) -> BTreeMap<String, Pose2> {
    cluster
        .pano_ids
        .iter()
        .map(|id| (id.clone(), scene.panos[id].pose()))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// criteria

fn pose_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..100_000 {
        let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
        let (pa, pb) = (
            Pose2::from_parts(a.0, a.1, a.2),
            Pose2::from_parts(b.0, b.1, b.2),
        );
        let (ma, mb) = (hmat(a.0, a.1, a.2), hmat(b.0, b.1, b.2));
        let err = match k % 3 {
            0 => max_abs(mat_of(&pa.compose(&pb)) - ma * mb),
            1 => max_abs(mat_of(&pa.inverse()) - ma.try_inverse().unwrap()),
            _ => max_abs(mat_of(&Pose2::relative(&pa, &pb)) - ma.try_inverse().unwrap() * mb),
        };
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-12 && within(elapsed, Duration::from_secs(1)),
        format!("max err {worst:.2e}, {:.3}s", elapsed.as_secs_f64()),
    )
}

fn zero_noise_exactness() -> Outcome {
    let start = Instant::now();
    let grid = ColumnGrid::default();
    let mut worst_t = 0.0f64;
    let mut worst_r = 0.0f64;
    for seed in 0..100u64 {
        let n = 3 + (seed % 3) as usize;
        let shape = if seed % 2 == 0 {
            RoomShape::Convex
        } else {
            RoomShape::Notched
        };
        let (scene, cluster) = single_room_cluster(seed, n, shape);
        let g = build_graph(&cluster, &scene, &grid, None, seed).expect("graph");
        let gt = gt_map(&scene, &cluster);
        let greedy = greedy_spanning_tree(&g).expect("greedy");
        let refined = pgo(&g, &greedy, &PgoConfig::default()).expect("pgo");
        let origin = gt[cluster.origin()];
        for sol in [&greedy, &refined] {
            let e = evaluate(sol, &gt).expect("evaluate");
            worst_t = e.translation.iter().fold(worst_t, |a, v| a.max(*v));
            worst_r = e.rotation.iter().fold(worst_r, |a, v| a.max(*v));
            // gauge-fixed comparison in the origin frame
            for (id, p) in sol.node_ids.iter().zip(&sol.poses) {
                let want = Pose2::relative(&origin, &gt[id]);
                worst_t = worst_t.max((p.translation() - want.translation()).norm());
                worst_r = worst_r.max(wrap_angle(p.theta() - want.theta()).radians().abs());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_t < 1e-6 && worst_r < 1e-6 && within(elapsed, Duration::from_secs(5)),
        format!(
            "max ATE {worst_t:.2e} m, max ARE {worst_r:.2e} rad, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn lm_correctness() -> Outcome {
    // Jacobians against central differences
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst_jac = 0.0f64;
    let h = 1e-6;
    for _ in 0..1000 {
        let mut v = || {
            Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.0..3.0),
            )
        };
        let (xi, xj) = (v(), v());
        let rel = Pose2::relative(
            &Pose2::from_parts(xi.z, xi.x, xi.y),
            &Pose2::from_parts(xj.z, xj.x, xj.y),
        );
        let z = Pose2::from_parts(
            rel.theta() + 0.25,
            rel.translation().x - 0.1,
            rel.translation().y + 0.3,
        );
        let (ai, aj) = between_jacobians(&xi, &xj);
        let mut ni = Matrix3::zeros();
        let mut nj = Matrix3::zeros();
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            ni.set_column(
                k,
                &((between_residual(&(xi + e), &xj, &z) - between_residual(&(xi - e), &xj, &z))
                    / (2.0 * h)),
            );
            nj.set_column(
                k,
                &((between_residual(&xi, &(xj + e), &z) - between_residual(&xi, &(xj - e), &z))
                    / (2.0 * h)),
            );
        }
        for (a, n) in [(ai, ni), (aj, nj)] {
            worst_jac = worst_jac.max((a - n).norm() / a.norm().max(n.norm()));
        }
    }

    // accepted-step cost traces on noisy graphs
    let grid = ColumnGrid::new(128).unwrap();
    let noise = NoiseSpec {
        sigma_t: 0.1,
        sigma_theta: 0.05,
        outlier_factor: None,
    };
    let mut monotone = true;
    let mut runs = 0;
    for seed in 0..40u64 {
        let (scene, cluster) =
            single_room_cluster(1000 + seed, 3 + (seed % 3) as usize, RoomShape::Notched);
        let g = build_graph(&cluster, &scene, &grid, Some(&noise), seed).unwrap();
        let sol = pgo(
            &g,
            &greedy_spanning_tree(&g).unwrap(),
            &PgoConfig::default(),
        )
        .unwrap();
        monotone &= sol.diagnostics.cost_trace.windows(2).all(|w| w[1] < w[0]);
        runs += 1;
    }

    // inconsistent 3-cycle against a brute-force grid search
    let meas = [
        (0usize, 1usize, (0.3, 2.0, 0.1)),
        (1, 2, (0.5, 0.2, 1.8)),
        (0, 2, (0.5, 1.3, 2.4)),
    ];
    let mut g = PoseGraph::new(vec!["a".into(), "b".into(), "c".into()], 0).unwrap();
    for &(i, j, (t, x, y)) in &meas {
        g.add_edge(EdgeObservation {
            src: i,
            dst: j,
            rel_pose: Pose2::from_parts(t, x, y),
            covis_score: 1.0,
            cues: None,
        })
        .unwrap();
    }
    let init = greedy_spanning_tree(&g).unwrap();
    let sol = pgo(&g, &init, &PgoConfig::default()).unwrap();

    let mut best: Vec<f64> = init.poses[1..]
        .iter()
        .flat_map(|p| [p.theta(), p.translation().x, p.translation().y])
        .collect();
    let as_poses = |x: &[f64]| vec![(0.0, 0.0, 0.0), (x[0], x[1], x[2]), (x[3], x[4], x[5])];
    let mut best_cost = cycle_cost(&as_poses(&best), &meas);
    let mut step_size = 0.5;
    let resolution = 1e-3;
    while step_size >= resolution {
        let mut improved = true;
        while improved {
            improved = false;
            // full 3^6 neighborhood at the current resolution
            for code in 0..729usize {
                let mut cand = best.clone();
                let mut c = code;
                for v in cand.iter_mut() {
                    *v += (c % 3) as f64 * step_size - step_size;
                    c /= 3;
                }
                let cost = cycle_cost(&as_poses(&cand), &meas);
                if cost < best_cost - 1e-15 {
                    best = cand;
                    best_cost = cost;
                    improved = true;
                }
            }
        }
        step_size *= 0.5;
    }
    let got: Vec<f64> = sol.poses[1..]
        .iter()
        .flat_map(|p| [p.theta(), p.translation().x, p.translation().y])
        .collect();
    let grid_gap = got
        .iter()
        .zip(&best)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let got_cost = cycle_cost(&as_poses(&got), &meas);
    let pass = worst_jac < 1e-5
        && monotone
        && grid_gap <= 2.0 * resolution
        && got_cost <= best_cost + 1e-12;
    outcome(
        pass,
        format!(
            "jacobian rel err {worst_jac:.1e}; {runs} traces strictly decreasing: {monotone}; \
             grid gap {grid_gap:.1e}, cost {got_cost:.6} vs grid {best_cost:.6}"
        ),
    )
}

fn statistical_ordering() -> Outcome {
    let start = Instant::now();
    let grid = ColumnGrid::default();
    let clean = NoiseSpec {
        sigma_t: 0.1,
        sigma_theta: 0.05,
        outlier_factor: None,
    };
    let outlier = NoiseSpec {
        outlier_factor: Some(10.0),
        ..clean
    };
    let cfg = PgoConfig::default();
    let mut ate = [[0.0f64; 2]; 2]; // [clean|outlier][greedy|pgo]
    let count = 500u64;
    for seed in 0..count {
        let (scene, cluster) = single_room_cluster(5000 + seed, 5, RoomShape::Notched);
        let gt = gt_map(&scene, &cluster);
        for (k, noise) in [&clean, &outlier].into_iter().enumerate() {
            let g = build_graph(&cluster, &scene, &grid, Some(noise), seed).unwrap();
            let greedy = greedy_spanning_tree(&g).unwrap();
            let refined = pgo(&g, &greedy, &cfg).unwrap();
            ate[k][0] += evaluate(&greedy, &gt).unwrap().mean_translation();
            ate[k][1] += evaluate(&refined, &gt).unwrap().mean_translation();
        }
    }
    for row in ate.iter_mut() {
        for v in row.iter_mut() {
            *v /= count as f64;
        }
    }
    let elapsed = start.elapsed();
    let greedy_delta = ate[1][0] - ate[0][0];
    let pgo_delta = ate[1][1] - ate[0][1];
    let pass = ate[0][1] <= ate[0][0]
        && pgo_delta > greedy_delta
        && within(elapsed, Duration::from_secs(60));
    outcome(
        pass,
        format!(
            "clean ATE greedy {:.4} m, pgo {:.4} m; outlier degradation greedy {greedy_delta:+.4} m, \
             pgo {pgo_delta:+.4} m; {:.1}s",
            ate[0][0],
            ate[0][1],
            elapsed.as_secs_f64()
        ),
    )
}

fn cue_geometry() -> Outcome {
    let grid = ColumnGrid::default();
    let w = grid.width();

    // correspondence round trip over convex rooms: column k of i maps to an
    // azimuth in j, the j→i row is sampled there and mapped back to a column
    let (mut hits, mut total, mut nearest_hits) = (0usize, 0usize, 0usize);
    let near = |k: usize, back: f64| {
        let d = (grid.nearest_column(back) as i64 - k as i64).rem_euclid(w as i64);
        d.min(w as i64 - d) <= 1
    };
    for seed in 0..100u64 {
        let (scene, cluster) = single_room_cluster(9000 + seed, 2, RoomShape::Convex);
        let (a, b) = (&cluster.pano_ids[0], &cluster.pano_ids[1]);
        let ab = correspondence_and_covis(&scene, a, b, &grid).unwrap();
        let ba = correspondence_and_covis(&scene, b, a, &grid).unwrap();
        for k in 0..w {
            let Some(alpha) = ab.alpha[k] else { continue };
            total += 1;
            if ba.sample_alpha(alpha).is_some_and(|back| near(k, back)) {
                hits += 1;
            }
            // whole-column lookup, reported for reference
            if ba.alpha[grid.nearest_column(alpha)].is_some_and(|back| near(k, back)) {
                nearest_hits += 1;
            }
        }
    }
    let frac = hits as f64 / total as f64;

    // boundary angle in a regular 32-gon around radius 2
    let r = 2.0;
    let n = 32;
    let rv = 2.0 * r / (1.0 + (PI / n as f64).cos());
    let room = Layout::new(
        (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                Vec2::new(rv * t.cos(), rv * t.sin())
            })
            .collect(),
    )
    .unwrap();
    let h = 1.0;
    let cam = Camera {
        position: Vec2::zeros(),
        yaw: Angle::new(0.3),
        height: h,
        room_id: "r".into(),
    };
    let row = boundary_angle_row(&cam, &room, &grid).unwrap();
    let phi_err = row
        .iter()
        .map(|v| (v - h.atan2(r)).abs())
        .fold(0.0f64, f64::max);

    // rotation augmentation shifts rows exactly
    let mut exact = true;
    for seed in 0..20u64 {
        let (mut scene, cluster) = single_room_cluster(700 + seed, 3, RoomShape::Notched);
        let (a, b) = (cluster.pano_ids[0].clone(), cluster.pano_ids[1].clone());
        let before_ab = correspondence_and_covis(&scene, &a, &b, &grid).unwrap();
        let before_ba = correspondence_and_covis(&scene, &b, &a, &grid).unwrap();
        let shift = (seed as usize * 97 + 13) % w;
        let rotated = scene.panos[&a].rotated_by_columns(shift, &grid);
        scene.panos.insert(a.clone(), rotated);
        let after_ab = correspondence_and_covis(&scene, &a, &b, &grid).unwrap();
        let after_ba = correspondence_and_covis(&scene, &b, &a, &grid).unwrap();
        exact &= after_ab == before_ab.shift_columns(shift);
        exact &= after_ba.phi == before_ba.phi && after_ba.covis == before_ba.covis;
        for (x, y) in after_ba.alpha.iter().zip(&before_ba.alpha) {
            match (x, y) {
                (Some(x), Some(y)) => {
                    let expected = y - TAU * shift as f64 / w as f64;
                    exact &= wrap_angle(x - expected).radians().abs() < 1e-11;
                }
                (None, None) => {}
                _ => exact = false,
            }
        }
    }

    outcome(
        frac >= 0.99 && phi_err < 1e-3 && exact,
        format!(
            "round trip {:.2}% of {total} columns ({:.2}% with whole-column lookup); \
             32-gon max phi err {phi_err:.2e}; shift equivariance exact: {exact}",
            100.0 * frac,
            100.0 * nearest_hits as f64 / total as f64
        ),
    )
}

fn losses() -> Outcome {
    // ground truth gives zero
    let inst = LossInstance::random(0, 4, 16);
    let origin = inst.origin.clone();
    let gt = inst.gt.clone();
    let og = gt[&origin];
    let at_gt: Predictions = gt
        .iter()
        .map(|(k, p)| {
            (
                k.clone(),
                PosePrediction::from_pose(&Pose2::relative(&og, p)),
            )
        })
        .collect();
    let w = LossWeights::default();
    let ng = global_node_loss(&at_gt, &gt, &origin).unwrap().0;
    let nr = relative_node_loss(&at_gt, &gt, &origin).unwrap().0;
    let n = node_loss(&at_gt, &gt, &origin, &w).unwrap();
    let b = boundary_loss(&inst.phi.1, &inst.phi.1, Reduction::Sum)
        .unwrap()
        .0;
    let ac = ac_loss(&inst.alpha.1, &inst.alpha.1, &inst.alpha.2, Reduction::Sum)
        .unwrap()
        .0;
    let cv = covis_loss(&inst.covis.1, &inst.covis.1, Reduction::Sum)
        .unwrap()
        .0;
    let columns = inst.covis.1.iter().map(Vec::len).sum::<usize>() as f64;
    let floor = columns * -(1.0 - BCE_EPS).ln();
    let e = edge_loss(&EdgeLossComponents { ac, b, cv }, &w).unwrap();
    let zero = ng == 0.0
        && nr < 1e-24
        && n < 1e-24
        && b == 0.0
        && ac == 0.0
        && cv <= floor * (1.0 + 1e-9)
        && e <= floor * (1.0 + 1e-9);

    // gradients against central differences
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let inst = LossInstance::random(100 + seed, 2 + (seed % 4) as usize, 12);
        for c in inst.check_all(gradcheck::DEFAULT_STEP).unwrap() {
            worst = worst.max(c.rel_err);
        }
    }

    // hand-computed node loss: b sits at (2, 0); its prediction is off by (0.3, 0.4)
    let gt2: GroundTruth = [
        ("a".to_string(), Pose2::identity()),
        ("b".to_string(), Pose2::from_parts(0.0, 2.0, 0.0)),
    ]
    .into();
    let pred2: Predictions = [
        (
            "a".to_string(),
            PosePrediction::new(Vec2::new(1.0, 0.0), Vec2::zeros()),
        ),
        (
            "b".to_string(),
            PosePrediction::new(Vec2::new(1.0, 0.0), Vec2::new(2.3, 0.4)),
        ),
    ]
    .into();
    // global 0.25; relative 0.25 in each direction; 0.25 + 0.1 * 0.5
    let hand = node_loss(&pred2, &gt2, "a", &w).unwrap();
    let beta_ok = w.beta_r == 0.1 && (hand - 0.30).abs() < 1e-12;

    outcome(
        zero && worst < 1e-6 && beta_ok,
        format!("zero at ground truth: {zero}; max FD rel err {worst:.1e}; node loss hand value {hand:.12}"),
    )
}

fn message_passing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut equivariant = true;
    let mut order_free = true;
    let mut dup_free = true;
    let d = 4;
    let width = 8;
    for trial in 0..50u64 {
        let n = rng.random_range(2..7);
        let feats: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let fns = LinearReference::new(trial, d, width, DEFAULT_LAYERS);
        let g = MpGraph::complete(feats.clone(), 0, DEFAULT_LAYERS).unwrap();
        let out = run(&g, &fns).unwrap();

        // permute the non-origin nodes
        let mut perm: Vec<usize> = (1..n).collect();
        perm.shuffle(&mut rng);
        perm.insert(0, 0);
        let pfeats: Vec<Vec<f64>> = perm.iter().map(|&k| feats[k].clone()).collect();
        let pout = run(&MpGraph::complete(pfeats, 0, DEFAULT_LAYERS).unwrap(), &fns).unwrap();
        for (k, &src) in perm.iter().enumerate() {
            equivariant &= pout.graph.nodes[k] == out.graph.nodes[src];
            equivariant &= pout.poses[k] == out.poses[src];
        }
        for (&(i, j), rows) in &pout.dense {
            equivariant &= *rows == out.dense[&(perm[i], perm[j])];
        }

        // shuffled visiting order at every layer
        let mut cur = g.clone();
        for layer in 0..DEFAULT_LAYERS {
            let mut eo: Vec<(usize, usize)> = cur.edges.keys().copied().collect();
            let mut no: Vec<usize> = (0..n).collect();
            eo.shuffle(&mut rng);
            no.shuffle(&mut rng);
            let shuffled = step_in_order(&cur, &fns, layer, &eo, &no).unwrap();
            let plain = step(&cur, &fns, layer).unwrap();
            order_free &= shuffled == plain;
            cur = plain;
        }
        order_free &= cur == out.graph;

        // every neighbor of node 0 duplicated
        let mut f2 = feats.clone();
        f2.extend(feats[1..].iter().cloned());
        let mut g2 = MpGraph::complete(f2, 0, 1).unwrap();
        g2.edges.retain(|&(i, j), _| {
            let copy = |k: usize| k >= n;
            !(copy(i) && copy(j)) && !(copy(i) && j != 0) && !(copy(j) && i != 0)
        });
        let single = MpGraph::complete(feats, 0, 1).unwrap();
        dup_free &=
            step(&single, &fns, 0).unwrap().nodes[0] == step(&g2, &fns, 0).unwrap().nodes[0];
    }

    // origin selection with ground-truth cues
    let grid = ColumnGrid::new(128).unwrap();
    let mut agree = 0;
    let mut clusters = 0;
    for seed in 0..10u64 {
        let params = SynthParams {
            rooms: 3,
            cameras_per_room: 5,
            shape: if seed % 2 == 0 {
                RoomShape::Notched
            } else {
                RoomShape::Convex
            },
            ..SynthParams::default()
        };
        let scene = synth_scene(300 + seed, &params).unwrap();
        for cluster in sample_clusters(&scene, seed, &SamplingOptions::default()) {
            let oracle = CueOracle::new(&scene, &cluster, &grid).unwrap();
            let sol = infer_with_origin_selection(
                &cluster.pano_ids,
                oracle.features(),
                &oracle,
                DEFAULT_LAYERS,
                mean_covis_scorer,
            )
            .unwrap();
            let m = cluster.len();
            let direct: Vec<f64> = (0..m)
                .map(|i| {
                    let s: Vec<f64> = (0..m)
                        .filter(|&j| j != i)
                        .map(|j| {
                            edge_covis_score(
                                &correspondence_and_covis(
                                    &scene,
                                    &cluster.pano_ids[i],
                                    &cluster.pano_ids[j],
                                    &grid,
                                )
                                .unwrap(),
                            )
                        })
                        .collect();
                    mean(&s)
                })
                .collect();
            clusters += 1;
            if Some(sol.origin_index) == select_origin(&direct) {
                agree += 1;
            }
        }
    }

    outcome(
        equivariant && order_free && dup_free && agree == clusters,
        format!(
            "equivariant: {equivariant}; order independent: {order_free}; duplicate invariant: {dup_free}; \
             origin agrees on {agree}/{clusters} clusters"
        ),
    )
}

fn evaluation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let ids: Vec<String> = (0..5).map(|k| format!("p{k}")).collect();
    let gt: BTreeMap<String, Pose2> = ids
        .iter()
        .map(|id| {
            let (t, x, y) = random_pose(&mut rng);
            (id.clone(), Pose2::from_parts(t, x / 4.0, y / 4.0))
        })
        .collect();
    let noisy: Vec<Pose2> = ids
        .iter()
        .map(|id| {
            let p = gt[id];
            Pose2::from_parts(
                p.theta() + rng.random_range(-0.1..0.1),
                p.translation().x + rng.random_range(-0.3..0.3),
                p.translation().y + rng.random_range(-0.3..0.3),
            )
        })
        .collect();
    let sol = |poses: Vec<Pose2>| Solution {
        node_ids: ids.clone(),
        origin_index: 0,
        poses,
        diagnostics: Default::default(),
    };
    let base = evaluate(&sol(noisy.clone()), &gt).unwrap();
    let mut gauge = 0.0f64;
    for _ in 0..1000 {
        let (t, x, y) = random_pose(&mut rng);
        let tf = Pose2::from_parts(t, x, y);
        let moved = evaluate(&sol(noisy.iter().map(|p| tf.compose(p)).collect()), &gt).unwrap();
        for (a, b) in moved.translation.iter().zip(&base.translation) {
            gauge = gauge.max((a - b).abs());
        }
        for (a, b) in moved.rotation.iter().zip(&base.rotation) {
            gauge = gauge.max((a - b).abs());
        }
    }

    let mut recover = 0.0f64;
    for _ in 0..100 {
        let (t, x, y) = random_pose(&mut rng);
        let tf = Pose2::from_parts(t, x, y);
        let target: Vec<Vec2> = gt.values().map(|p| p.translation()).collect();
        let pred: Vec<Vec2> = target.iter().map(|q| tf.inverse().apply(*q)).collect();
        let got = align_2d(&pred, &target).unwrap();
        recover = recover.max(max_abs(mat_of(&got) - hmat(t, x, y)));
    }

    let summary = summarize(&[base], 5, "pgo", "fully", Pooling::PerPano).unwrap();
    let csv = to_csv(&[summary]);
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let layout = csv.starts_with(CSV_HEADER)
        && header
            == [
                "group_size",
                "connectivity",
                "method",
                "rot_mean_deg",
                "rot_med_deg",
                "rot_std_deg",
                "tr_mean_m",
                "tr_med_m",
                "tr_std_m",
            ]
        && csv.lines().nth(1).map(|l| l.split(',').count()) == Some(9);

    outcome(
        gauge < 1e-9 && recover < 1e-9 && layout,
        format!("gauge max diff {gauge:.1e}; recovery err {recover:.1e}; csv layout ok: {layout}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("pose algebra", pose_algebra),
        ("zero-noise exactness", zero_noise_exactness),
        ("LM correctness", lm_correctness),
        ("statistical ordering", statistical_ordering),
        ("cue geometry", cue_geometry),
        ("losses", losses),
        ("message passing", message_passing),
        ("evaluation", evaluation),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} criterion {}: {name} ({})", k + 1, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

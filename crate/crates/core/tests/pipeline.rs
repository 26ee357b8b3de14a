use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use panograph::cues::{ColumnGrid, CueSet};
use panograph::evaluation::{evaluate, summarize, Pooling};
use panograph::graph::{
    build_graph, classify_connectivity, ConnectivityLabel, NoiseSpec, PoseGraph,
};
use panograph::message_passing::reference::LinearReference;
use panograph::message_passing::{run, MpGraph, DEFAULT_LAYERS};
use panograph::scene::{
    load_scene, permute_origin, sample_clusters, synth_scene, RoomShape, SamplingOptions, Scene,
    SynthParams,
};
use panograph::solvers::{greedy_spanning_tree, pgo, PgoConfig, Solution};
use panograph::Pose2;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

/// Replays a recorded output; set `PANOGRAPH_BLESS=1` to record it again.
fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("PANOGRAPH_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden file {name} differs");
}

#[test]
fn reference_message_passing_golden() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let feats: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let fns = LinearReference::new(7, 4, 6, DEFAULT_LAYERS);
    let out = run(&MpGraph::complete(feats, 0, DEFAULT_LAYERS).unwrap(), &fns).unwrap();
    let mut text = String::new();
    for (k, n) in out.graph.nodes.iter().enumerate() {
        let bits: Vec<String> = n
            .features
            .iter()
            .map(|v| format!("{:016x}", v.to_bits()))
            .collect();
        text += &format!("node {k} {}\n", bits.join(" "));
    }
    for (k, p) in out.poses.iter().enumerate() {
        let bits: Vec<String> = [p.r.x, p.r.y, p.t.x, p.t.y]
            .iter()
            .map(|v| format!("{:016x}", v.to_bits()))
            .collect();
        text += &format!("pose {k} {}\n", bits.join(" "));
    }
    let covis: Vec<String> = out.dense[&(0, 1)]
        .covis
        .iter()
        .map(|v| format!("{:016x}", v.to_bits()))
        .collect();
    text += &format!("covis 0 1 {}\n", covis.join(" "));
    check_golden("mp_reference.txt", &text);
}

#[test]
fn unit_square_cues_golden() {
    let scene = load_scene(golden("unit_square.scene.json")).unwrap();
    assert_eq!((scene.rooms.len(), scene.panos.len()), (1, 3));
    let grid = ColumnGrid::new(16).unwrap();
    let cue = panograph::cues::correspondence_and_covis(&scene, "a", "b", &grid).unwrap();
    assert!(cue.covis.iter().all(|&c| c));
    check_golden("unit_square_a_b.cues.json", &cue.to_json_string());
    assert_eq!(CueSet::from_json_str(&cue.to_json_string()).unwrap(), cue);
}

fn noisy_run(
    scene: &Scene,
    seed: u64,
) -> Vec<(Solution, Solution, BTreeMap<String, Pose2>, PoseGraph)> {
    let grid = ColumnGrid::new(128).unwrap();
    let noise = NoiseSpec {
        sigma_t: 0.05,
        sigma_theta: 0.02,
        outlier_factor: None,
    };
    sample_clusters(scene, seed, &SamplingOptions::default())
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let c = permute_origin(&c, seed + k as u64).unwrap();
            let g = build_graph(&c, scene, &grid, Some(&noise), seed + k as u64).unwrap();
            let greedy = greedy_spanning_tree(&g).unwrap();
            let refined = pgo(&g, &greedy, &PgoConfig::default()).unwrap();
            let gt = c
                .pano_ids
                .iter()
                .map(|id| (id.clone(), scene.panos[id].pose()))
                .collect();
            (greedy, refined, gt, g)
        })
        .collect()
}

#[test]
fn end_to_end_is_deterministic_and_bounded() {
    let params = SynthParams {
        rooms: 3,
        cameras_per_room: 5,
        shape: RoomShape::Notched,
        ..SynthParams::default()
    };
    let scene = synth_scene(7, &params).unwrap();
    let again = synth_scene(7, &params).unwrap();
    assert_eq!(scene.to_json_string(), again.to_json_string());

    let a = noisy_run(&scene, 3);
    let b = noisy_run(&scene, 3);
    assert!(!a.is_empty());
    let mut greedy_errs = Vec::new();
    let mut pgo_errs = Vec::new();
    for ((g1, p1, gt, graph), (g2, p2, _, _)) in a.iter().zip(&b) {
        assert_eq!(g1, g2);
        assert_eq!(p1, p2);
        assert_eq!(p1.poses[p1.origin_index], Pose2::identity());
        assert!(p1.diagnostics.converged);
        let class = classify_connectivity(graph, 0.1);
        if class.label == ConnectivityLabel::Fully {
            assert!(class.weak_pairs.is_empty());
        }
        greedy_errs.push(evaluate(g1, gt).unwrap());
        pgo_errs.push(evaluate(p1, gt).unwrap());
    }
    let g = summarize(&greedy_errs, 5, "greedy", "all", Pooling::PerPano).unwrap();
    let p = summarize(&pgo_errs, 5, "pgo", "all", Pooling::PerPano).unwrap();
    assert!(g.tr_mean_m < 1.0 && p.tr_mean_m < 1.0, "{g:?} {p:?}");
    assert!(p.rot_med_deg <= p.rot_mean_deg + p.rot_std_deg);
}

#[test]
fn file_formats_round_trip() {
    let scene = synth_scene(12, &SynthParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.scene.json");
    std::fs::write(&path, scene.to_json_string()).unwrap();
    assert_eq!(load_scene(&path).unwrap(), scene);

    let cluster = &sample_clusters(&scene, 1, &SamplingOptions::default())[0];
    let g = build_graph(cluster, &scene, &ColumnGrid::new(32).unwrap(), None, 0).unwrap();
    let g2 = PoseGraph::from_json_str(&g.to_json_string()).unwrap();
    assert_eq!(g2.to_json_string(), g.to_json_string());
    let sol = greedy_spanning_tree(&g2).unwrap();
    let back = Solution::from_json_str(&sol.to_json_string()).unwrap();
    assert_eq!(back.node_ids, sol.node_ids);
    assert_eq!(back.origin_index, sol.origin_index);
    assert_eq!(back.diagnostics, sol.diagnostics);
    for (a, b) in back.poses.iter().zip(&sol.poses) {
        assert!((a.to_matrix() - b.to_matrix()).abs().max() < 1e-15);
    }
}

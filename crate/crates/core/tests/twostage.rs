use clusternet::graph::{generate_sbm, split_edges, structural_features};
use clusternet::twostage::{auc, predict_adjacency, train_link_predictor, AdjacencyMode, LinkConfig};

fn setup() -> (clusternet::graph::Graph, clusternet::graph::EdgeSplit) {
    let g = generate_sbm(&[25, 25], 0.4, 0.02, 9).unwrap();
    let split = split_edges(&g, 0.3, 1).unwrap();
    (g, split)
}

fn cfg() -> LinkConfig {
    LinkConfig {
        epochs: 60,
        hidden: 16,
        embed: 16,
        ..LinkConfig::default()
    }
}

#[test]
fn predictor_learns_block_structure() {
    let (g, split) = setup();
    let observed = split.train_graph(&g).unwrap();
    let feats = structural_features(&observed, 16, 16, 0);
    let model = train_link_predictor(&observed, &feats, &cfg()).unwrap();
    assert!(model.loss_history.last().unwrap() < model.loss_history.first().unwrap());
    let blocks = g.blocks().unwrap();
    let (mut within, mut across, mut nw, mut na) = (0.0, 0.0, 0, 0);
    for u in 0..50 {
        for v in u + 1..50 {
            if blocks[u] == blocks[v] {
                within += model.score(u, v);
                nw += 1;
            } else {
                across += model.score(u, v);
                na += 1;
            }
        }
    }
    assert!(within / nw as f64 > across / na as f64);
    let a = auc(&model, &split.held_edges, &g, 3).unwrap();
    assert!(a > 0.5, "auc {a}");
}

#[test]
fn reconstructions_contain_observed_edges() {
    let (g, split) = setup();
    let observed = split.train_graph(&g).unwrap();
    let feats = structural_features(&observed, 16, 16, 0);
    let model = train_link_predictor(&observed, &feats, &cfg()).unwrap();
    let top = predict_adjacency(&model, &observed, 20, AdjacencyMode::TopM).unwrap();
    let tg = top.graph.as_ref().unwrap();
    assert_eq!(tg.m(), observed.m() + 20);
    assert!(observed.edges().iter().all(|&(u, v)| tg.has_edge(u, v)));
    let exp = predict_adjacency(&model, &observed, 0, AdjacencyMode::Expected).unwrap();
    for &(u, v) in observed.edges() {
        assert_eq!(exp.probs.get(u, v), 1.0);
    }
    assert!(exp.probs.data().iter().all(|p| (0.0..=1.0).contains(p)));
}

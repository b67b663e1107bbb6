#![allow(dead_code)]

use lomia::data::{generate_sbm, SbmConfig};
use lomia::graph::Graph;

pub fn sbm(n: usize, c: usize, intra: f64, inter: f64, d: usize, signal: f64, seed: u64) -> Graph {
    generate_sbm(&SbmConfig {
        num_nodes: n,
        num_classes: c,
        intra_edge_prob: intra,
        inter_edge_prob: inter,
        feature_dim: d,
        feature_signal: signal,
        seed,
    })
    .unwrap()
}

/// Multinomial logistic regression on raw features, fitted by batch gradient
/// descent; returns accuracy on `test`.
pub fn logistic_probe_accuracy(g: &Graph, train: &[usize], test: &[usize]) -> f64 {
    let d = g.feature_dim();
    let c = g.num_classes();
    let mut w = vec![vec![0.0; d + 1]; c];
    let x = |v: usize| -> Vec<f64> {
        let mut row: Vec<f64> = g.feature_row(v).iter().map(|a| a - 0.5).collect();
        row.push(1.0);
        row
    };
    let scores = |w: &Vec<Vec<f64>>, xv: &[f64]| -> Vec<f64> {
        w.iter().map(|wc| wc.iter().zip(xv).map(|(a, b)| a * b).sum()).collect()
    };
    for _ in 0..300 {
        let mut grad = vec![vec![0.0; d + 1]; c];
        for &v in train {
            let xv = x(v);
            let s = scores(&w, &xv);
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|a| (a - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for k in 0..c {
                let coef = e[k] / z - f64::from(u8::from(k == g.label(v)));
                for (gk, xi) in grad[k].iter_mut().zip(&xv) {
                    *gk += coef * xi;
                }
            }
        }
        for k in 0..c {
            for (wk, gk) in w[k].iter_mut().zip(&grad[k]) {
                *wk -= 2.0 * gk / train.len() as f64;
            }
        }
    }
    let correct = test
        .iter()
        .filter(|&&v| {
            let s = scores(&w, &x(v));
            let best = (0..c).max_by(|&a, &b| s[a].total_cmp(&s[b]).then(b.cmp(&a))).unwrap();
            best == g.label(v)
        })
        .count();
    correct as f64 / test.len() as f64
}

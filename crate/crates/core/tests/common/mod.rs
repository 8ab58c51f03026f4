//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use hetembed::classify::logreg_loss_grad;
use hetembed::docembed::{dmm_loss_grad, dmm_step};
use hetembed::hetgraph::HetGraph;
use hetembed::seed;
use hetembed::sgns::{sgns_pair_update, EmbeddingMatrix};
use rand::Rng;

const H: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

fn random_matrix(rng: &mut seed::Rng, rows: usize, dim: usize) -> EmbeddingMatrix {
    let mut m = EmbeddingMatrix::zeros(rows, dim);
    for id in 0..rows as u32 {
        m.input_mut(id).iter_mut().for_each(|x| *x = rng.gen_range(-0.8..0.8));
        m.output_mut(id).iter_mut().for_each(|x| *x = rng.gen_range(-0.8..0.8));
    }
    m
}

fn pair_loss(m: &EmbeddingMatrix, center: u32, context: u32, negs: &[u32]) -> f64 {
    let mut c = m.clone();
    sgns_pair_update(&mut c, center, context, negs, 0.0).unwrap()
}

/// Worst relative error of the SGNS pair update over 100 random cases.
///
/// The update applied by `sgns_pair_update` is `-lr·∇L`; `∇L` is recovered
/// from it and compared against central differences of the returned loss.
pub fn sgns_worst_error() -> f64 {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut rng = seed::rng(11, &[case]);
        let rows = rng.gen_range(3..12);
        let dim = rng.gen_range(1..9);
        let m = random_matrix(&mut rng, rows, dim);
        let center = rng.gen_range(0..rows as u32);
        let context = rng.gen_range(0..rows as u32);
        let negs: Vec<u32> = (0..rng.gen_range(0..6)).map(|_| rng.gen_range(0..rows as u32)).collect();

        let lr = 1e-3;
        let mut after = m.clone();
        sgns_pair_update(&mut after, center, context, &negs, lr).unwrap();

        for j in 0..dim {
            let analytic = (m.input(center)[j] - after.input(center)[j]) / lr;
            let (mut p, mut q) = (m.clone(), m.clone());
            p.input_mut(center)[j] += H;
            q.input_mut(center)[j] -= H;
            let numeric = (pair_loss(&p, center, context, &negs) - pair_loss(&q, center, context, &negs)) / (2.0 * H);
            worst = worst.max(rel_err(analytic, numeric));
        }
        for t in 0..rows as u32 {
            for j in 0..dim {
                let analytic = (m.output(t)[j] - after.output(t)[j]) / lr;
                let (mut p, mut q) = (m.clone(), m.clone());
                p.output_mut(t)[j] += H;
                q.output_mut(t)[j] -= H;
                let numeric = (pair_loss(&p, center, context, &negs) - pair_loss(&q, center, context, &negs)) / (2.0 * H);
                worst = worst.max(rel_err(analytic, numeric));
            }
        }
    }
    worst
}

fn random_rows(rng: &mut seed::Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-0.8..0.8)).collect()).collect()
}

/// Worst relative error of the DMM constituent gradient over 100 random
/// cases; also checks that the training step applies `-lr·count·grad`.
pub fn dmm_worst_error() -> f64 {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut rng = seed::rng(12, &[case]);
        let dim = rng.gen_range(1..9);
        let vocab = rng.gen_range(2..10);
        let (n_tags, n_words) = (rng.gen_range(1..4), rng.gen_range(0..6));
        let tags = random_rows(&mut rng, n_tags, dim);
        let words = random_rows(&mut rng, n_words, dim);
        let outputs: Vec<f64> = (0..vocab * dim).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let target = rng.gen_range(0..vocab as u32);
        let negs: Vec<u32> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..vocab as u32)).collect();

        let (_, grad) = dmm_loss_grad(&tags, &words, &outputs, target, &negs).unwrap();
        let loss = |t: &[Vec<f64>], w: &[Vec<f64>]| dmm_loss_grad(t, w, &outputs, target, &negs).unwrap().0;
        // every averaged constituent shares the same gradient
        for which in 0..tags.len() + words.len() {
            for j in 0..dim {
                let (mut tp, mut wp, mut tq, mut wq) = (tags.clone(), words.clone(), tags.clone(), words.clone());
                if which < tags.len() {
                    tp[which][j] += H;
                    tq[which][j] -= H;
                } else {
                    wp[which - tags.len()][j] += H;
                    wq[which - tags.len()][j] -= H;
                }
                let numeric = (loss(&tp, &wp) - loss(&tq, &wq)) / (2.0 * H);
                worst = worst.max(rel_err(grad[j], numeric));
            }
        }

        // the trainer's step moves every constituent by -lr·count·grad
        let lr = 0.05;
        let count = (tags.len() + words.len()) as f64;
        let (mut t2, mut w2, mut o2) = (tags.clone(), words.clone(), outputs.clone());
        dmm_step(&mut t2, &mut w2, &mut o2, target, &negs, lr).unwrap();
        for (before, after) in tags.iter().chain(&words).zip(t2.iter().chain(&w2)) {
            for j in 0..dim {
                let expected = before[j] - lr * count * grad[j];
                assert!((after[j] - expected).abs() < 1e-12);
            }
        }
    }
    worst
}

/// Worst relative error of the logistic-regression gradient.
pub fn logreg_worst_error() -> f64 {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut rng = seed::rng(13, &[case]);
        let n = rng.gen_range(2..30);
        let d = rng.gen_range(1..8);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let l2 = if case % 2 == 0 { 0.0 } else { rng.gen_range(0.0..0.5) };
        let (_, gw, gb) = logreg_loss_grad(&x, &y, &w, b, l2);
        const H: f64 = 1e-5;
        for j in 0..d {
            let (mut p, mut q) = (w.clone(), w.clone());
            p[j] += H;
            q[j] -= H;
            let numeric = (logreg_loss_grad(&x, &y, &p, b, l2).0 - logreg_loss_grad(&x, &y, &q, b, l2).0) / (2.0 * H);
            worst = worst.max(rel_err(gw[j], numeric));
        }
        let numeric = (logreg_loss_grad(&x, &y, &w, b + H, l2).0 - logreg_loss_grad(&x, &y, &w, b - H, l2).0) / (2.0 * H);
        worst = worst.max(rel_err(gb, numeric));
    }
    worst
}

/// BFS from `start` visiting neighbors in ascending id, truncated to `k`.
pub fn bfs_ball(g: &HetGraph, start: u32, k: usize) -> Vec<u32> {
    let mut seen = vec![false; g.node_count()];
    let mut order = vec![start];
    seen[start as usize] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let mut nbrs: Vec<u32> = g.all_neighbor_ids(v).to_vec();
        nbrs.sort_unstable();
        for u in nbrs {
            if !seen[u as usize] {
                seen[u as usize] = true;
                order.push(u);
                queue.push_back(u);
            }
        }
    }
    order.truncate(k);
    order
}

/// Pearson correlation straight from its definition, two-pass.
pub fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

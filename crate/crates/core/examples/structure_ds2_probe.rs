use ttcd_core::data::{compute_norm, make_windows, normalize};
use ttcd_core::numeric::{Array, ParamSet, Tape};
use ttcd_core::structure::{StructureKind, StructureLearner};
use ttcd_core::synth::{generate, DatasetId, GenSpec};
use ttcd_core::train::adam::Adam;

// Structure learner alone on raw normalized ds2 windows.
fn main() {
    let h: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let lambda: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.9);
    let (ds, _) = generate(&GenSpec::new(DatasetId::Ds2, 1000, 102)).unwrap();
    let stats = compute_norm(&ds).unwrap();
    let windows = make_windows(&ds, 4).unwrap();
    let normed = normalize(&windows.windows, &stats).unwrap();
    let (nw, l, n) = (windows.count(), 5usize, 5usize);
    let mut tvals = vec![0.0; nw * n];
    for w in 0..nw {
        for v in 0..n {
            tvals[w * n + v] = normed.data()[(w * l + (l - 1)) * n + v];
        }
    }
    let targets = Array::from_vec(vec![nw, n], tvals).unwrap();
    let sl = StructureLearner::new(n, 4, h, StructureKind::FullGrid).unwrap();
    let mut params = ParamSet::new();
    sl.init_params(&mut params, 3).unwrap();
    let mut adam = Adam::new(0.003);
    let n_epochs: usize = std::env::var("EPOCHS").ok().and_then(|s| s.parse().ok()).unwrap_or(600);
    for epoch in 0..n_epochs {
        let mut tape = Tape::new();
        let bp = tape.bind_params(&params);
        let x = tape.constant(normed.clone());
        let fwd = sl.forward(&mut tape, &bp, x).unwrap();
        let tid = tape.constant(targets.clone());
        let diff = tape.sub(fwd.predictions, tid).unwrap();
        let sq = tape.mul(diff, diff).unwrap();
        let mse = tape.mean_all(sq).unwrap();
        let tve = tape.mul_const(mse, n as f64).unwrap();
        let l1 = tape.sum_all(fwd.adjacency).unwrap();
        let l1s = tape.mul_const(l1, lambda).unwrap();
        let loss = tape.add(tve, l1s).unwrap();
        if epoch % 500 == 0 {
            println!(
                "epoch {epoch}: tve={:.4} l1={:.4}",
                tape.value(tve).as_scalar().unwrap(),
                tape.value(l1).as_scalar().unwrap()
            );
        }
        let grads = tape.backward(loss).unwrap();
        adam.step(&mut params, &grads).unwrap();
    }
    let adj = sl.extract_adjacency(&params).unwrap();
    let mut entries: Vec<(f64, String)> = Vec::new();
    for src in 0..n {
        for lag in 0..=4 {
            for dst in 0..n {
                let w = adj.get(src, lag, dst);
                if w > 0.01 {
                    entries.push((w, format!("X{}--{}-->X{}", src + 1, lag, dst + 1)));
                }
            }
        }
    }
    entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("truth: X2-1->X2 X1-1->X2 X3-1->X3 X1-4->X3 X4-1->X4 X3-3->X4 X2-0->X4 X5-2->X5 X1-1->X5");
    for (w, label) in entries.iter().take(14) {
        println!("  {label}  {w:.4}");
    }
}

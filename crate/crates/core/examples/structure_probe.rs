use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use ttcd_core::data::{compute_norm, make_windows, normalize, TimeSeriesDataset};
use ttcd_core::numeric::{Array, ParamSet, Tape};
use ttcd_core::structure::{StructureKind, StructureLearner};
use ttcd_core::train::adam::Adam;

// x2_t = 0.8 * x1_{t-1} + 0.3 eps ; x1 white noise
fn main() {
    let t = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x1 = vec![0.0; t];
    let mut x2 = vec![0.0; t];
    for i in 0..t {
        x1[i] = normal.sample(&mut rng);
        x2[i] = if i > 0 { 0.8 * x1[i - 1] } else { 0.0 } + 0.3 * normal.sample(&mut rng);
    }
    let mut vals = vec![0.0; t * 2];
    for i in 0..t {
        vals[i * 2] = x1[i];
        vals[i * 2 + 1] = x2[i];
    }
    let ds = TimeSeriesDataset::new(
        vec!["X1".into(), "X2".into()],
        Array::from_vec(vec![t, 2], vals).unwrap(),
        None,
    )
    .unwrap();
    let stats = compute_norm(&ds).unwrap();
    let windows = make_windows(&ds, 1).unwrap();
    let normed = normalize(&windows.windows, &stats).unwrap();
    let nw = windows.count();
    // targets = last row of each normalized window
    let mut tvals = vec![0.0; nw * 2];
    for w in 0..nw {
        tvals[w * 2] = normed.data()[(w * 2 + 1) * 2];
        tvals[w * 2 + 1] = normed.data()[(w * 2 + 1) * 2 + 1];
    }
    let targets = Array::from_vec(vec![nw, 2], tvals).unwrap();

    let sl = StructureLearner::new(2, 1, 4, StructureKind::FullGrid).unwrap();
    let mut params = ParamSet::new();
    sl.init_params(&mut params, 3).unwrap();
    let mut adam = Adam::new(0.01);
    for epoch in 0..400 {
        let mut tape = Tape::new();
        let bp = tape.bind_params(&params);
        let x = tape.constant(normed.clone());
        let fwd = sl.forward(&mut tape, &bp, x).unwrap();
        let tid = tape.constant(targets.clone());
        let diff = tape.sub(fwd.predictions, tid).unwrap();
        let sq = tape.mul(diff, diff).unwrap();
        let tve = tape.mean_all(sq).unwrap();
        let l1 = tape.sum_all(fwd.adjacency).unwrap();
        let l1s = tape.mul_const(l1, 0.02).unwrap();
        let loss = tape.add(tve, l1s).unwrap();
        if epoch % 100 == 0 {
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
    println!("adjacency ((src,lag) x dst):");
    for src in 0..2 {
        for lag in 0..=1 {
            for dst in 0..2 {
                let w = adj.get(src, lag, dst);
                if w > 1e-3 {
                    println!("  X{}--lag{}-->X{}  {:.4}", src + 1, lag, dst + 1, w);
                }
            }
        }
    }
}

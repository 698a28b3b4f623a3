use std::time::Instant;
use ttcd_core::synth::{generate_ds1, DatasetId, GenSpec};
use ttcd_core::train::{train, HyperParams, VariantId};

fn main() {
    let (ds, _) = generate_ds1(&GenSpec::new(DatasetId::Ds1, 1000, 7)).unwrap();
    let hp = HyperParams {
        epochs: 30,
        max_rounds: 1,
        seed: 7,
        omega: 10.0,
        ..HyperParams::default()
    };
    let t0 = Instant::now();
    let out = match train(&ds, 5, &hp, VariantId::Full) { Ok(o) => o, Err(e) => { eprintln!("train error: {e}"); std::process::exit(1); } };
    let dt = t0.elapsed().as_secs_f64();
    println!("30 epochs in {:.2}s -> {:.0} ms/epoch", dt, dt * 1000.0 / 30.0);
    println!("final h = {:.3e}, edges = {}", out.report.final_h, out.graph.edge_count());
}

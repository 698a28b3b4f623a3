use std::time::Instant;
use ttcd_core::metrics::score;
use ttcd_core::synth::{generate, truth_graph, DatasetId, GenSpec};
use ttcd_core::train::{train, HyperParams, VariantId};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ds_id = if args.get(1).map(|s| s.as_str()) == Some("ds2") {
        DatasetId::Ds2
    } else {
        DatasetId::Ds1
    };
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let omega: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.17);
    let variant = match args.get(4).map(|s| s.as_str()) {
        Some(v) => VariantId::parse(v).unwrap(),
        None => VariantId::Full,
    };
    let l_max = ds_id.max_structural_lag();
    let (ds, truth) = generate(&GenSpec::new(ds_id, 1000, 100 + seed)).unwrap();
    let mut hp = HyperParams {
        seed,
        omega,
        ..HyperParams::default()
    };
    if let Ok(v) = std::env::var("EPOCHS") {
        hp.epochs = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("LR") {
        hp.lr = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("LAMBDA1") {
        hp.lambda1 = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("ROUNDS") {
        hp.max_rounds = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("HIDDEN") {
        hp.hidden_channels = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("WARMUP") {
        hp.warmup_epochs = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("PRUNE_LR") {
        hp.prune_lr = Some(v.parse().unwrap());
    }
    let t0 = Instant::now();
    match train(&ds, l_max, &hp, variant) {
        Ok(out) => {
            let sc = score(&out.graph, &truth_graph(ds_id).unwrap()).unwrap();
            println!(
                "{} seed={} variant={} omega={}: shd={} f1={:.3} fdr={:.3} tp={} fp={} fn={} | h={:.2e} rounds={} epochs={} {:.0}s",
                ds_id.as_str(), seed, variant.as_str(), omega,
                sc.shd, sc.f1, sc.fdr, sc.tp, sc.fp, sc.fn_,
                out.report.final_h, out.report.rounds, out.report.epochs_run,
                t0.elapsed().as_secs_f64()
            );
            let _ = truth;
            // top adjacency entries for inspection
            let adj = &out.adjacency;
            let names = ds.names();
            let mut entries: Vec<(f64, String)> = Vec::new();
            for src in 0..adj.n_vars {
                for lag in 0..=adj.l_max {
                    for dst in 0..adj.n_vars {
                        let w = adj.get(src, lag, dst);
                        if w > 1e-4 {
                            entries.push((w, format!("{}--{}-->{}", names[src], lag, names[dst])));
                        }
                    }
                }
            }
            entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            if std::env::var("OMEGA_SWEEP").is_ok() {
                use ttcd_core::structure::{threshold_graph, ThresholdSpec};
                let truth = truth_graph(ds_id).unwrap();
                for om in [0.002, 0.004, 0.007, 0.01, 0.02, 0.04, 0.07, 0.1, 0.17] {
                    match threshold_graph(&out.adjacency, ds.names(), ThresholdSpec::new(om).unwrap()) {
                        Ok(g) => {
                            let s = score(&g, &truth).unwrap();
                            println!(
                                "  omega={om}: shd={} f1={:.3} fdr={:.3} tp={} fp={}",
                                s.shd, s.f1, s.fdr, s.tp, s.fp
                            );
                        }
                        Err(_) => println!("  omega={om}: cyclic"),
                    }
                }
            }
            if std::env::var("RECOVERY_TRACES").is_ok() {
                let tr = &out.report.traces;
                let fmt = |v: &[f64]| -> String {
                    v.iter().step_by(50).map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
                };
                if let Some(lr) = &tr.l_r {
                    println!("  L_r   : {}", fmt(lr));
                }
                println!("  L_tve : {}", fmt(&tr.l_tve));
                let hs: Vec<String> = tr.h.iter().step_by(50).map(|x| format!("{x:.1e}")).collect();
                println!("  h     : {}", hs.join(" "));
                println!("  L_s   : {}", fmt(&tr.l_s));
            }
            for (w, label) in entries.iter().take(16) {
                println!("  {label}  {w:.4}");
            }
        }
        Err(e) => println!("{} seed={}: TRAIN ERROR {e} after {:.0}s", ds_id.as_str(), seed, t0.elapsed().as_secs_f64()),
    }
}
// trace printer appended at build time via env var RECOVERY_TRACES

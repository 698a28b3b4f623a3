use ttcd_core::synth::{generate, DatasetId, GenSpec};
fn main() {
    let (ds, _) = generate(&GenSpec::new(DatasetId::Ds2, 1000, 102)).unwrap();
    ds.save_csv(std::path::Path::new("/tmp/ds2.csv")).unwrap();
}

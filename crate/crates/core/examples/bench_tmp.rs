use satk_core::dataset::{DatasetConfig, Split, SyntheticDataset};
use satk_core::toynet::{ToyAttention, ToyNet, ToyNetConfig};
use satk_core::train::{evaluate, train, TrainConfig};
use satk_core::{Rng, SaConfig};
use std::time::Instant;

fn main() {
    let data = SyntheticDataset::generate(DatasetConfig::default()).unwrap();
    print!("untrained accs:");
    for seed in 0..10 {
        let net = ToyNet::build(ToyNetConfig::default(), &mut Rng::new(seed)).unwrap();
        let acc = evaluate(&net, &data, Split::Val).unwrap();
        print!(" {acc:.3}");
    }
    println!();
    // The remaining ablation variants.
    for (name, cfg) in [
        ("wo_gn", SaConfig::with_groups(8).without_gn()),
        ("wo_shuffle", SaConfig::with_groups(8).without_shuffle()),
        ("wo_fc", SaConfig::with_groups(8).without_fc()),
        ("conv1x1", SaConfig::with_groups(8).with_conv_gate()),
    ] {
        let t0 = Instant::now();
        let mut net = ToyNet::build(
            ToyNetConfig::with_attention(ToyAttention::Sa(cfg)),
            &mut Rng::new(1),
        )
        .unwrap();
        let h = train(&mut net, &data, &TrainConfig::default()).unwrap();
        let last = h.epochs.last().unwrap();
        println!(
            "{name}: {:.1?} loss {:.4} train {:.3} val {:.3} finite {}",
            t0.elapsed(),
            last.loss,
            last.train_acc,
            last.val_acc,
            h.all_finite()
        );
    }
}

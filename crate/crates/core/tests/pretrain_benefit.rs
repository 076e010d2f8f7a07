mod common;

use common::{desk, pretrained, DESK_ZLIN};
use zlin::harness::{insert_dropout, stream, train_network, MetricsWriter, Stream};
use zlin::layers::DropoutRates;
use zlin::Network;

fn train_loss_after(
    net: Network<f32>,
    desk: &common::Desk,
    cfg: &zlin::harness::ExperimentConfig,
    layers: usize,
) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let mut m = MetricsWriter::create(&dir.path().join("m.csv"), layers).unwrap();
    let mut loss = f64::NAN;
    train_network(net, &desk.data, cfg, &mut m, |r| loss = r.train.loss).unwrap();
    loss
}

#[test]
fn pretrained_zlin_fits_faster_than_random_init() {
    let desk = desk();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..5u64 {
        let (mut cfg, net) = pretrained(&desk, DESK_ZLIN, seed);
        cfg.train.epochs = 5;
        let arch = cfg.validate().unwrap();
        let layers = arch.hidden.len();
        let from_pretraining = train_loss_after(
            insert_dropout(&net, DropoutRates::default()).unwrap(),
            &desk,
            &cfg,
            layers,
        );
        let fresh = arch.build::<f32>(
            desk.data.train.dims(),
            DropoutRates::default(),
            &mut stream(seed, Stream::Init),
        );
        let from_scratch = train_loss_after(fresh, &desk, &cfg, layers);
        if from_pretraining < from_scratch {
            wins += 1;
        }
        pairs.push((from_pretraining, from_scratch));
    }
    eprintln!("epoch-5 training loss, pretrained vs random init: {pairs:?}");
    assert!(wins >= 4, "pretrained won {wins}/5: {pairs:?}");
}

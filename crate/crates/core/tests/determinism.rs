use hte::data::{gen_counter3d, gen_sin16};
use hte::model_io::to_bytes;
use hte::{train_ensemble, Dataset, Mode, PartitionKind, TrainConfig};

fn bytes_with_threads(ds: &Dataset, cfg: &TrainConfig, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| to_bytes(&train_ensemble(ds, cfg).unwrap()).unwrap())
}

#[test]
fn thread_count_does_not_change_models() {
    let sin = gen_sin16(1000, 5);
    let cube = gen_counter3d(1500, 6);
    let cases = [
        (
            &sin,
            TrainConfig {
                trees: 8,
                seed: 9,
                ..Default::default()
            },
        ),
        (
            &sin,
            TrainConfig {
                trees: 4,
                candidates: 5,
                seed: 10,
                ..Default::default()
            },
        ),
        (
            &cube,
            TrainConfig {
                trees: 4,
                mode: Mode::Kht,
                seed: 11,
                ..Default::default()
            },
        ),
        (
            &cube,
            TrainConfig {
                trees: 3,
                mode: Mode::Kht,
                partition: PartitionKind::Adaptive,
                min_leaf: 200,
                seed: 12,
                ..Default::default()
            },
        ),
    ];
    for (ds, cfg) in cases {
        assert_eq!(
            bytes_with_threads(ds, &cfg, 1),
            bytes_with_threads(ds, &cfg, 8)
        );
    }
}

#[test]
fn seed_changes_the_model() {
    let ds = gen_sin16(300, 1);
    let a = bytes_with_threads(
        &ds,
        &TrainConfig {
            seed: 1,
            ..Default::default()
        },
        2,
    );
    let b = bytes_with_threads(
        &ds,
        &TrainConfig {
            seed: 2,
            ..Default::default()
        },
        2,
    );
    assert_ne!(a, b);
}

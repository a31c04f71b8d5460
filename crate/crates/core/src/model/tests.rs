use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn small() -> ModelConfig {
    ModelConfig {
        n_r: 6,
        n_c: 4,
        d_cell: 10,
        d_hidden: 12,
        d_reduce: 4,
        conv_channels: vec![5, 6],
        d_coarse: 8,
        d_fine_per_cell: 3,
        ..ModelConfig::desk()
    }
}

fn random_tensor(cfg: &ModelConfig, rng: &mut impl Rng) -> WindowTensor {
    WindowTensor {
        n_r: cfg.n_r,
        n_c: cfg.n_c,
        dim: cfg.d_cell,
        data: (0..cfg.n_r * cfg.n_c * cfg.d_cell).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn triplet_loss_examples() {
    let a = [1.0, 0.0];
    assert!((triplet_loss(&a, &a, &a, 0.2).unwrap() - 0.2).abs() < 1e-12);
    assert_eq!(triplet_loss(&a, &a, &[-1.0, 0.0], 0.2).unwrap(), 0.0);
    assert_eq!(triplet_loss(&a, &[0.6, 0.8], &[0.0, 1.0], 0.2).unwrap(), 0.0);
    assert!(triplet_loss(&a, &[1.0], &a, 0.2).is_err());
}

#[test]
fn mining_rules() {
    let losses = [0.0, 0.1, 0.5, 0.19, 0.3, 0.0];
    assert_eq!(mine_semihard(&losses, 0.2, 2), vec![1, 3]);
    assert_eq!(mine_semihard(&losses, 0.2, 4), vec![1, 3, 4, 2]);
    assert_eq!(mine_semihard(&losses, 0.2, 10), vec![1, 3, 4, 2]);
    assert!(mine_semihard(&[0.0, 0.0], 0.2, 4).is_empty());
}

#[test]
fn outputs_are_unit_and_deterministic() {
    let cfg = small();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in [ModelKind::Coarse, ModelKind::Fine] {
        let m = Model::init(kind, &cfg, 7).unwrap();
        for _ in 0..20 {
            let t = random_tensor(&cfg, &mut rng);
            let e = m.embed(&t).unwrap();
            assert_eq!(e.len(), m.dim());
            assert!((norm(&e) - 1.0).abs() < 1e-6);
            assert_eq!(e, m.embed(&t).unwrap());
        }
    }
}

#[test]
fn shape_mismatch_is_an_error() {
    let cfg = small();
    let m = Model::init(ModelKind::Coarse, &cfg, 0).unwrap();
    let t = WindowTensor {
        n_r: 5,
        n_c: 4,
        dim: 10,
        data: vec![0.0; 200],
    };
    assert!(matches!(m.embed(&t), Err(ModelError::Shape { .. })));
}

#[test]
fn fine_embedding_is_normalized_concatenation_of_cell_codes() {
    let cfg = small();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = Model::init(ModelKind::Fine, &cfg, 3).unwrap();
    let mut t = random_tensor(&cfg, &mut rng);
    let codes = |t: &WindowTensor| -> Vec<f64> {
        t.data.chunks(t.dim).flat_map(|c| m.fine_cell_code(c)).collect()
    };
    let z = codes(&t);
    let n = norm(&z);
    let direct = m.embed(&t).unwrap();
    assert_eq!(direct, z.iter().map(|v| v / n).collect::<Vec<_>>());

    t.cell_mut(2, 1).iter_mut().for_each(|v| *v = 0.0);
    let z2 = codes(&t);
    let dpc = cfg.d_fine_per_cell;
    let slot = (2 * cfg.n_c + 1) * dpc;
    for (i, (a, b)) in z.iter().zip(&z2).enumerate() {
        if !(slot..slot + dpc).contains(&i) {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn gradient_check_small_config() {
    let cfg = small();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [ModelKind::Coarse, ModelKind::Fine] {
        let m = Model::init(kind, &cfg, 11).unwrap();
        let mut table = CellTable::new(cfg.d_cell);
        let ws: Vec<Vec<u32>> = (0..3).map(|_| table.intern_tensor(&random_tensor(&cfg, &mut rng))).collect();
        // A margin above 4 keeps the hinge active for unit vectors.
        let r = gradient_check(&m, &table, [&ws[0], &ws[1], &ws[2]], 5.0, 1e-4, 40, 5);
        assert!(r.loss > 0.0);
        assert!(r.checked > 50, "{r:?}");
        assert!(r.max_rel_error < 1e-4, "{kind:?}: {r:?}");
    }
}

#[test]
fn gradient_check_inactive_hinge_is_exact() {
    let cfg = small();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = Model::init(ModelKind::Fine, &cfg, 1).unwrap();
    let mut table = CellTable::new(cfg.d_cell);
    let a = table.intern_tensor(&random_tensor(&cfg, &mut rng));
    let n = table.intern_tensor(&random_tensor(&cfg, &mut rng));
    let e = m.embed_many(&table, &[&a, &n]);
    let margin = sq_dist(&e[0], &e[1]) * 0.5;
    let r = gradient_check(&m, &table, [&a, &a, &n], margin, 1e-4, 20, 0);
    assert_eq!(r.loss, 0.0);
    assert_eq!(r.max_rel_error, 0.0);
}

fn toy_sets(cfg: &ModelConfig, seed: u64) -> TripletSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = TripletSet::new(cfg.d_cell);
    let base = random_tensor(cfg, &mut rng);
    let protos: Vec<WindowTensor> = (0..4)
        .map(|_| {
            let mut t = base.clone();
            t.data.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
            t
        })
        .collect();
    let mut by_class = vec![Vec::new(); protos.len()];
    for (c, p) in protos.iter().enumerate() {
        for _ in 0..4 {
            let mut t = p.clone();
            t.data.iter_mut().for_each(|v| *v += rng.random_range(-0.4..0.4));
            by_class[c].push(set.add_window(&t));
        }
    }
    for c in 0..protos.len() {
        for &a in &by_class[c] {
            for &p in &by_class[c] {
                if a == p {
                    continue;
                }
                let n = by_class[(c + 1) % protos.len()][(a as usize) % 4];
                set.triplets.push([a, p, n]);
            }
        }
    }
    set
}

#[test]
fn zero_episodes_return_initialization() {
    let cfg = ModelConfig {
        episodes: 0,
        seed: 9,
        ..small()
    };
    let set = toy_sets(&cfg, 1);
    let (c, f, log) = train_models(&set, &set, &cfg).unwrap();
    assert_eq!(c, Model::init(ModelKind::Coarse, &cfg, 9).unwrap());
    assert_eq!(f, Model::init(ModelKind::Fine, &cfg, 9).unwrap());
    assert!(log.episodes.is_empty());
}

#[test]
fn training_without_triplets_fails() {
    let cfg = small();
    let empty = TripletSet::new(cfg.d_cell);
    let set = toy_sets(&cfg, 1);
    assert!(matches!(train_models(&empty, &set, &cfg), Err(ModelError::NoTriplets("coarse"))));
    assert!(matches!(train_models(&set, &empty, &cfg), Err(ModelError::NoTriplets("fine"))));
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let cfg = ModelConfig {
        episodes: 150,
        learning_rate: 0.1,
        candidates: 24,
        batch_size: 8,
        ..small()
    };
    let set = toy_sets(&cfg, 2);
    let (c1, f1, log) = train_models(&set, &set, &cfg).unwrap();
    let (c2, f2, _) = train_models(&set, &set, &cfg).unwrap();
    assert_eq!(c1.params, c2.params);
    assert_eq!(f1.params, f2.params);
    let mean = |xs: &[EpisodeLog], pick: fn(&EpisodeLog) -> f64| xs.iter().map(pick).sum::<f64>() / xs.len() as f64;
    let head = &log.episodes[..20];
    let tail = &log.episodes[130..];
    assert!(mean(tail, |e| e.fine.mean_loss) < mean(head, |e| e.fine.mean_loss));
    assert!(mean(tail, |e| e.coarse.mean_loss) < mean(head, |e| e.coarse.mean_loss));
}

#[test]
fn model_file_round_trip_and_mismatch() {
    let cfg = small();
    for kind in [ModelKind::Coarse, ModelKind::Fine] {
        let m = Model::init(kind, &cfg, 4).unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = Model::load(buf.as_slice(), Some(&cfg)).unwrap();
        assert_eq!(back, m);
        let other = ModelConfig {
            d_reduce: 5,
            ..cfg.clone()
        };
        assert!(matches!(Model::load(buf.as_slice(), Some(&other)), Err(ModelError::ConfigMismatch)));
    }
    assert!(Model::load(&b"{\"format\":\"x\"}"[..], None).is_err());
}

#[test]
fn presets_validate() {
    assert_eq!(ModelConfig::full().d_fine(), 16_000);
    ModelConfig::full().validate().unwrap();
    ModelConfig::desk().validate().unwrap();
    let bad = ModelConfig {
        margin: 0.0,
        ..ModelConfig::desk()
    };
    assert!(bad.validate().is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn unit(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, dim).prop_filter_map("nonzero", |v| {
            let n = norm(&v);
            (n > 1e-3).then(|| v.iter().map(|x| x / n).collect())
        })
    }

    proptest! {
        #[test]
        fn loss_nonnegative_and_rotation_invariant(a in unit(3), p in unit(3), n in unit(3),
                                                   m in 0.01f64..1.0, angles in proptest::array::uniform3(-3.2f64..3.2)) {
            let l = triplet_loss(&a, &p, &n, m).unwrap();
            prop_assert!(l >= 0.0);
            let rot = rotation(angles);
            let r = |v: &[f64]| -> Vec<f64> { (0..3).map(|i| (0..3).map(|j| rot[i][j] * v[j]).sum()).collect() };
            let lr = triplet_loss(&r(&a), &r(&p), &r(&n), m).unwrap();
            prop_assert!((l - lr).abs() < 1e-9);
        }
    }

    fn rotation([x, y, z]: [f64; 3]) -> [[f64; 3]; 3] {
        let (sx, cx) = x.sin_cos();
        let (sy, cy) = y.sin_cos();
        let (sz, cz) = z.sin_cos();
        let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
        let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
        mul(mul(rz, ry), rx)
    }

    fn mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut o = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        o
    }
}

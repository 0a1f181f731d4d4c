use std::sync::Arc;

use fastnn::conv::{ConvPolicy, ConvShape, Dispatcher};
use fastnn::energy::{train_rbm, Crbm, PretrainConfig, Rbm, UnitKind};
use fastnn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

fn bars() -> Tensor {
    Tensor::from_vec(
        &[4, 4],
        vec![
            1., 1., 0., 0., //
            0., 0., 1., 1., //
            1., 0., 1., 0., //
            0., 1., 0., 1.,
        ],
    )
    .unwrap()
}

fn bars_error() -> f32 {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rbm = Rbm::new(4, 8, UnitKind::Binary, UnitKind::Binary, &mut rng);
    let config = PretrainConfig {
        epochs: 200,
        batch_size: 4,
        lr: 0.5,
        k: 1,
        shuffle: false,
    };
    *train_rbm(&mut rbm, &bars(), &config, &mut rng).unwrap().last().unwrap()
}

/// `-ln sum_h exp(-E(v, h))` by enumerating every hidden configuration.
fn enumerated_free_energy(rbm: &Rbm, v: &[f32]) -> f64 {
    let (nv, nh) = (rbm.visible(), rbm.hidden());
    let (w, bv, bh) = (rbm.w.to_vec(), rbm.bv.to_vec(), rbm.bh.to_vec());
    let mut z = 0.0f64;
    for hp in 0..1usize << nh {
        let mut e = 0.0f64;
        for i in 0..nv {
            e -= v[i] as f64 * bv[i] as f64;
        }
        for j in (0..nh).filter(|j| hp >> j & 1 == 1) {
            e -= bh[j] as f64;
            for i in 0..nv {
                e -= w[j * nv + i] as f64 * v[i] as f64;
            }
        }
        z += (-e).exp();
    }
    -z.ln()
}

fn free_energy_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mut rbm = Rbm::new(3, 2, UnitKind::Binary, UnitKind::Binary, &mut rng);
        rbm.w.map_inplace(|_| rng.random_range(-2.0..2.0));
        rbm.bv.map_inplace(|_| rng.random_range(-1.0..1.0));
        rbm.bh.map_inplace(|_| rng.random_range(-1.0..1.0));
        let v: Vec<f32> = (0..8).flat_map(|p| (0..3).map(move |i| (p >> i & 1) as f32)).collect();
        let got = rbm.free_energy_per_sample(&Tensor::from_vec(&[8, 3], v.clone()).unwrap()).unwrap();
        for (r, f) in got.iter().enumerate() {
            worst = worst.max((*f as f64 - enumerated_free_energy(&rbm, &v[r * 3..r * 3 + 3])).abs());
        }
    }
    worst
}

fn one_by_one_error() -> f32 {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (nv, nh, nb) = (6, 4, 5);
    let mut rbm = Rbm::new(nv, nh, UnitKind::Binary, UnitKind::Binary, &mut rng);
    rbm.w.map_inplace(|_| rng.random_range(-1.0..1.0));
    rbm.bv.map_inplace(|_| rng.random_range(-0.5..0.5));
    rbm.bh.map_inplace(|_| rng.random_range(-0.5..0.5));
    let data: Vec<f32> = (0..nb * nv).map(|_| (rng.random::<f32>() < 0.5) as u8 as f32).collect();

    let mut crbm = Crbm::from_parts(
        ConvShape::new(1, nv, nh, (1, 1), (1, 1)),
        rbm.w.clone().reshape(&[nh, nv, 1, 1]).unwrap(),
        rbm.bv.clone(),
        rbm.bh.clone(),
        UnitKind::Binary,
        UnitKind::Binary,
    )
    .unwrap()
    .with_policy(ConvPolicy::with_dispatcher(Arc::new(Dispatcher::defaults())));

    rbm.cd_k(&Tensor::from_vec(&[nb, nv], data.clone()).unwrap(), 1, 0.1, &mut ChaCha8Rng::seed_from_u64(5))
        .unwrap();
    crbm.cd1(&Tensor::from_vec(&[nb, nv, 1, 1], data).unwrap(), 0.1, &mut ChaCha8Rng::seed_from_u64(5))
        .unwrap();

    let diff = |a: &Tensor, b: &Tensor| {
        a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max)
    };
    diff(&crbm.kernels, &rbm.w.clone().reshape(&[nh, nv, 1, 1]).unwrap())
        .max(diff(&crbm.bv, &rbm.bv))
        .max(diff(&crbm.bh, &rbm.bh))
}

pub fn criterion() -> Outcome {
    let recon = bars_error();
    let fe = free_energy_error();
    let crbm = one_by_one_error();
    Outcome::check(
        recon < 0.1 && fe < 1e-4 && crbm < 1e-6,
        format!(
            "bars reconstruction {recon:.4} (< 0.1), free energy vs enumeration {fe:.2e} (< 1e-4), \
             1x1 CRBM vs RBM {crbm:.2e} (< 1e-6)"
        ),
    )
}

use std::time::Instant;

use pclab_core::autodiff::Tape;
use pclab_core::geometry::PointCloud;
use pclab_core::networks::{
    cloud_leaf, discriminator_logit, ForwardCtx, NetKind, NetworkSpec, WeightBlob,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
#[ignore]
fn dgcnn_phase_cost() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let spec = NetworkSpec::new(NetKind::Dgcnn).with_width(0.25).with_points(512).with_knn(8);
    let blob = WeightBlob::init(&spec, &mut rng).unwrap();
    let cloud = PointCloud::new((0..512).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect());

    // knn alone at the widest feature dim
    let feats: Vec<f64> = (0..512 * 64).map(|_| rng.gen()).collect();
    let t0 = Instant::now();
    for _ in 0..5 {
        pclab_core::networks::knn_indices(&feats, 512, 64, 8).unwrap();
    }
    println!("knn x5 (d=64): {:?}", t0.elapsed());

    // forward only
    let t0 = Instant::now();
    let mut tape = Tape::new();
    let placed = blob.place(&mut tape).unwrap();
    let x = cloud_leaf(&mut tape, &cloud).unwrap();
    let logit = {
        let mut ctx = ForwardCtx::new(&mut tape, &blob, &placed, true);
        discriminator_logit(&mut ctx, &spec, x).unwrap()
    };
    println!("forward: {:?} ({} nodes)", t0.elapsed(), tape.len());

    // backward
    let t0 = Instant::now();
    let ids = blob.trainable_ids(&placed);
    let _ = tape.backward(logit, &ids, false).unwrap();
    println!("backward: {:?} ({} nodes)", t0.elapsed(), tape.len());
}

#[test]
#[ignore]
fn raw_matmul_cost() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let (m, k, n) = (4096usize, 128usize, 256usize);
    let a: Vec<f64> = (0..m * k).map(|_| rng.gen()).collect();
    let b: Vec<f64> = (0..k * n).map(|_| rng.gen()).collect();
    let t0 = Instant::now();
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let cr = &mut c[i * n..(i + 1) * n];
        for (p, &av) in ar.iter().enumerate() {
            let br = &b[p * n..(p + 1) * n];
            for (cv, &bv) in cr.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    }
    let el = t0.elapsed();
    let flops = (2 * m * k * n) as f64;
    println!(
        "matmul {}x{}x{}: {:?} = {:.2} GFLOP/s (checksum {})",
        m, k, n, el, flops / el.as_secs_f64() / 1e9, c[0]
    );
}

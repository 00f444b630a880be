use rand::Rng;

use super::tape::{Tape, TensorId};
use crate::{Error, Result};

/// Gradient penalty over a batch: mean of (||grad_x D(x_hat)|| - 1)^2 with
/// x_hat = eps * real + (1 - eps) * fake, eps uniform per sample.
///
/// `score` evaluates the critic on one interpolated sample and must return a
/// scalar node. The inner gradients are recorded with `create_graph`, so the
/// returned penalty node is differentiable with respect to anything the critic
/// read from the tape (its weights in particular).
pub fn gradient_penalty_with<R, F>(
    tape: &mut Tape,
    reals: &[TensorId],
    fakes: &[TensorId],
    rng: &mut R,
    mut score: F,
) -> Result<TensorId>
where
    R: Rng,
    F: FnMut(&mut Tape, TensorId) -> Result<TensorId>,
{
    if reals.is_empty() || reals.len() != fakes.len() {
        return Err(Error::invalid(format!(
            "gradient_penalty: batch sizes {} vs {}",
            reals.len(),
            fakes.len()
        )));
    }
    let mut total: Option<TensorId> = None;
    for (&real, &fake) in reals.iter().zip(fakes) {
        if tape.shape(real) != tape.shape(fake) {
            return Err(Error::invalid(
                "gradient_penalty: real and fake shapes differ",
            ));
        }
        let eps: f64 = rng.gen();
        let a = tape.scale(real, eps)?;
        let b = tape.scale(fake, 1.0 - eps)?;
        let mixed = tape.add(a, b)?;
        let s = score(tape, mixed)?;
        if tape.shape(s) != (1, 1) {
            return Err(Error::invalid(
                "gradient_penalty: critic output must be scalar",
            ));
        }
        let grads = tape.backward(s, &[mixed], true)?;
        let g = grads[0].id.expect("create_graph retains ids");
        let sq = tape.squared_norm(g)?;
        let norm = tape.sqrt(sq)?;
        let shifted = tape.add_scalar(norm, -1.0)?;
        let pen = tape.mul(shifted, shifted)?;
        total = Some(match total {
            None => pen,
            Some(t) => tape.add(t, pen)?,
        });
    }
    let sum = total.expect("non-empty batch");
    tape.scale(sum, 1.0 / reals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Critic D(x) = w . flatten(x) for a fixed weight leaf.
    fn linear_score(w: TensorId) -> impl FnMut(&mut Tape, TensorId) -> crate::Result<TensorId> {
        move |t: &mut Tape, x: TensorId| {
            let (r, c) = t.shape(x);
            let flat = t.reshape(x, 1, r * c)?;
            let wt = t.transpose(w)?;
            t.matmul(flat, wt)
        }
    }

    #[test]
    fn unit_norm_linear_critic_gives_zero_penalty() {
        let mut t = Tape::new();
        // ||w|| = 1.
        let w = t.leaf(1, 4, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let real = t.leaf(2, 2, vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        let fake = t.leaf(2, 2, vec![-0.5, 0.4, 0.0, 0.7]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let pen =
            gradient_penalty_with(&mut t, &[real], &[fake], &mut rng, linear_score(w)).unwrap();
        assert!(t.scalar_value(pen).abs() < 1e-12);
    }

    #[test]
    fn norm_three_linear_critic_penalty_and_weight_grad() {
        let mut t = Tape::new();
        // w = (3, 0, 0, 0), so ||w|| = 3.
        let w = t.leaf(1, 4, vec![3.0, 0.0, 0.0, 0.0]).unwrap();
        let real = t.leaf(2, 2, vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        let fake = t.leaf(2, 2, vec![-0.5, 0.4, 0.0, 0.7]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let pen =
            gradient_penalty_with(&mut t, &[real], &[fake], &mut rng, linear_score(w)).unwrap();
        // (||w|| - 1)^2 = 4.
        assert!((t.scalar_value(pen) - 4.0).abs() < 1e-12);
        // d/dw (||w|| - 1)^2 = 2(||w|| - 1) w / ||w|| = (4/3) w.
        let g = t.backward(pen, &[w], false).unwrap();
        let expected = [4.0, 0.0, 0.0, 0.0];
        for (got, want) in g[0].data.iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }
    }

    #[test]
    fn batch_mismatch_rejected() {
        let mut t = Tape::new();
        let w = t.leaf(1, 4, vec![1.0; 4]).unwrap();
        let real = t.leaf(2, 2, vec![0.0; 4]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert!(gradient_penalty_with(&mut t, &[real], &[], &mut rng, linear_score(w)).is_err());
    }
}

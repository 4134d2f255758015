use super::denoiser::{Denoiser, GuidanceCombiner, GuidanceSpace};
use super::schedule::{reverse_step, Schedule};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_compatible(z_t: &Tensor, x: &Tensor, aligned: &Tensor, comb: &GuidanceCombiner) -> Result<()> {
    for (name, t) in [("condition", x), ("aligned neighbour", aligned)] {
        if t.height() != z_t.height() || t.width() != z_t.width() {
            return Err(Error::invalid(format!(
                "{name} is {}x{}, latent is {}x{}",
                t.height(),
                t.width(),
                z_t.height(),
                z_t.width()
            )));
        }
    }
    if comb.channels() != z_t.channels() {
        return Err(Error::invalid(format!(
            "combiner has {} channels, latent has {}",
            comb.channels(),
            z_t.channels()
        )));
    }
    Ok(())
}

/// Guided update from an already computed denoiser prediction `eps`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn guided_update(
    z_t: &Tensor,
    eps: &Tensor,
    x: &Tensor,
    aligned_prev: &Tensor,
    gu: &dyn Denoiser,
    comb: &GuidanceCombiner,
    space: GuidanceSpace,
    t: usize,
    sched: &Schedule,
    noise: &Tensor,
) -> Result<Tensor> {
    check_compatible(z_t, x, aligned_prev, comb)?;
    if comb.is_zero() {
        return reverse_step(z_t, eps, t, sched, noise);
    }
    let g = gu.predict(z_t, t, sched, &[x, aligned_prev])?;
    let correction = comb.apply(&g)?;
    match space {
        GuidanceSpace::Output => reverse_step(z_t, eps, t, sched, noise)?.add(&correction),
        GuidanceSpace::Epsilon => reverse_step(z_t, &eps.add(&correction)?, t, sched, noise),
    }
}

/// One guided reverse step: `reverse_step(DU(z_t, x)) + comb(GU(z_t, x, aligned))`.
///
/// With [`GuidanceSpace::Epsilon`] the combined guider output is added to
/// `ε̂` instead and the standard update is applied once. A combiner that is
/// identically zero skips the guider and returns the unguided step.
#[allow(clippy::too_many_arguments)]
pub fn guided_step(
    z_t: &Tensor,
    x: &Tensor,
    aligned_prev: &Tensor,
    du: &dyn Denoiser,
    gu: &dyn Denoiser,
    comb: &GuidanceCombiner,
    space: GuidanceSpace,
    t: usize,
    sched: &Schedule,
    noise: &Tensor,
) -> Result<Tensor> {
    check_compatible(z_t, x, aligned_prev, comb)?;
    let eps = du.predict(z_t, t, sched, &[x])?;
    if !eps.same_dims(z_t) {
        return Err(Error::invalid("denoiser output shape differs from its input"));
    }
    guided_update(z_t, &eps, x, aligned_prev, gu, comb, space, t, sched, noise)
}

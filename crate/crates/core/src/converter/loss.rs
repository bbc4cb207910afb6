use rand::Rng;

use super::ConverterPair;
use crate::nn::{Graph, NodeId, Tensor};
use crate::{Error, Result};

/// Generator objective and its six terms (batch means).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLoss {
    pub total: f64,
    /// `E[max(0, -D_x(G_yx(y)))]`
    pub adv_x: f64,
    /// `E[max(0, -D_y(G_xy(x)))]`
    pub adv_y: f64,
    /// `E[|G_yx(G_xy(x)) - x|]`
    pub cycle_x: f64,
    /// `E[|G_xy(G_yx(y)) - y|]`
    pub cycle_y: f64,
    /// `E[|G_yx(x) - x|]`
    pub identity_x: f64,
    /// `E[|G_xy(y) - y|]`
    pub identity_y: f64,
}

impl GeneratorLoss {
    pub fn terms(&self) -> [f64; 6] {
        [self.adv_x, self.adv_y, self.cycle_x, self.cycle_y, self.identity_x, self.identity_y]
    }

    pub fn cycle(&self) -> f64 {
        self.cycle_x + self.cycle_y
    }
}

/// Discriminator objective and its four hinge terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorLoss {
    pub total: f64,
    /// `E[max(0, m - D_x(x))]`
    pub real_x: f64,
    /// `E[max(0, m - D_y(y))]`
    pub real_y: f64,
    /// `E[max(0, m + D_x(G_yx(y)))]`
    pub fake_x: f64,
    /// `E[max(0, m + D_y(G_xy(x)))]`
    pub fake_y: f64,
}

impl DiscriminatorLoss {
    pub fn terms(&self) -> [f64; 4] {
        [self.real_x, self.real_y, self.fake_x, self.fake_y]
    }
}

fn check_batches(pair: &ConverterPair, x: &Tensor, y: &Tensor) -> Result<()> {
    if x.is_empty() || y.is_empty() || x.shape()[0] == 0 || y.shape()[0] == 0 {
        return Err(Error::EmptyInput("converter batch"));
    }
    let crop = pair.config.crop_frames;
    for t in [x, y] {
        if t.shape().len() != 3 {
            return Err(Error::ShapeMismatch { op: "converter batch", detail: format!("{:?}", t.shape()) });
        }
        if t.shape()[2] != crop {
            return Err(Error::FrameCountMismatch { expected: crop, found: t.shape()[2] });
        }
    }
    Ok(())
}

/// Builds the generator objective. Adversarial terms score trimmed generator
/// outputs; cycle and identity terms compare full crops. `rng` supplies the
/// discriminator input noise (`D_x` first, then `D_y`).
pub fn generator_loss<R: Rng + ?Sized>(
    pair: &ConverterPair,
    batch_x: &Tensor,
    batch_y: &Tensor,
    rng: &mut R,
) -> Result<(Graph, NodeId, GeneratorLoss)> {
    check_batches(pair, batch_x, batch_y)?;
    let cfg = &pair.config;
    let (trim, keep) = (cfg.trim_frames, cfg.critic_frames());
    let mut g = Graph::new();
    let gxy = pair.g_xy.bind(&mut g, &pair.store);
    let gyx = pair.g_yx.bind(&mut g, &pair.store);
    let dx = pair.d_x.bind(&mut g, &pair.store);
    let dy = pair.d_y.bind(&mut g, &pair.store);
    let x = g.constant(batch_x.clone());
    let y = g.constant(batch_y.clone());

    let fake_y = gxy.forward(&mut g, x)?;
    let fake_x = gyx.forward(&mut g, y)?;
    let fake_x_trim = g.trim_frames(fake_x, trim, keep)?;
    let fake_y_trim = g.trim_frames(fake_y, trim, keep)?;
    let score_x = dx.forward(&mut g, fake_x_trim, Some(&mut *rng))?;
    let score_y = dy.forward(&mut g, fake_y_trim, Some(&mut *rng))?;
    let adv_x = g.hinge(score_x, 0.0, -1.0)?;
    let adv_y = g.hinge(score_y, 0.0, -1.0)?;

    let back_x = gyx.forward(&mut g, fake_y)?;
    let back_y = gxy.forward(&mut g, fake_x)?;
    let cycle_x = g.mean_abs_diff(back_x, x)?;
    let cycle_y = g.mean_abs_diff(back_y, y)?;

    let same_x = gyx.forward(&mut g, x)?;
    let same_y = gxy.forward(&mut g, y)?;
    let identity_x = g.mean_abs_diff(same_x, x)?;
    let identity_y = g.mean_abs_diff(same_y, y)?;

    let total = g.weighted_sum(vec![
        (adv_x, 1.0),
        (adv_y, 1.0),
        (cycle_x, cfg.lambda_cy),
        (cycle_y, cfg.lambda_cy),
        (identity_x, cfg.lambda_id),
        (identity_y, cfg.lambda_id),
    ])?;
    let v = |n: NodeId| g.value(n).item();
    let terms = GeneratorLoss {
        total: v(total),
        adv_x: v(adv_x),
        adv_y: v(adv_y),
        cycle_x: v(cycle_x),
        cycle_y: v(cycle_y),
        identity_x: v(identity_x),
        identity_y: v(identity_y),
    };
    Ok((g, total, terms))
}

/// Builds the discriminator objective. Generator outputs enter as constants,
/// so no gradient reaches generator parameters. Real inputs are the trimmed
/// centres of the crops. Noise order: real `x`, real `y`, fake `x`, fake `y`.
pub fn discriminator_loss<R: Rng + ?Sized>(
    pair: &ConverterPair,
    batch_x: &Tensor,
    batch_y: &Tensor,
    rng: &mut R,
) -> Result<(Graph, NodeId, DiscriminatorLoss)> {
    check_batches(pair, batch_x, batch_y)?;
    let cfg = &pair.config;
    let (trim, keep, m) = (cfg.trim_frames, cfg.critic_frames(), cfg.margin);
    let fake_y = pair.g_xy.infer(&pair.store, batch_x)?;
    let fake_x = pair.g_yx.infer(&pair.store, batch_y)?;

    let mut g = Graph::new();
    let dx = pair.d_x.bind(&mut g, &pair.store);
    let dy = pair.d_y.bind(&mut g, &pair.store);
    let x = g.constant(batch_x.clone());
    let y = g.constant(batch_y.clone());
    let fx = g.constant(fake_x);
    let fy = g.constant(fake_y);
    let [x, y, fx, fy] = [x, y, fx, fy].map(|n| g.trim_frames(n, trim, keep));
    let (x, y, fx, fy) = (x?, y?, fx?, fy?);

    let s_real_x = dx.forward(&mut g, x, Some(&mut *rng))?;
    let s_real_y = dy.forward(&mut g, y, Some(&mut *rng))?;
    let s_fake_x = dx.forward(&mut g, fx, Some(&mut *rng))?;
    let s_fake_y = dy.forward(&mut g, fy, Some(&mut *rng))?;
    let real_x = g.hinge(s_real_x, m, -1.0)?;
    let real_y = g.hinge(s_real_y, m, -1.0)?;
    let fake_x = g.hinge(s_fake_x, m, 1.0)?;
    let fake_y = g.hinge(s_fake_y, m, 1.0)?;
    let total = g.weighted_sum(vec![(real_x, 1.0), (real_y, 1.0), (fake_x, 1.0), (fake_y, 1.0)])?;
    let v = |n: NodeId| g.value(n).item();
    let terms = DiscriminatorLoss {
        total: v(total),
        real_x: v(real_x),
        real_y: v(real_y),
        fake_x: v(fake_x),
        fake_y: v(fake_y),
    };
    Ok((g, total, terms))
}

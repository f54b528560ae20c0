use std::path::Path;

use nalgebra::DMatrix;

use crate::container::Container;
use crate::control::dynamics::{CostSpec, HistoryEncoding, LtvEpisode};
use crate::control::rollout::{episode_loss_and_gradient, rollout, EpisodeResult};
use crate::control::stability::Certificate;
use crate::error::{Error, Result};
use crate::neural::Network;
use crate::oco::{Evaluation, LossOracle, OnlineAlgorithm, RegretTrace, RunFailure};
use crate::rng::GENERATOR_ID;
use crate::tensor::Tensor;

pub const TAG: &str = "ltv_episode";

/// Counterfactual episode loss `L(θ)` as an online loss.
pub struct EpisodeOracle<'a, N: Network + ?Sized> {
    pub net: &'a N,
    pub episode: &'a LtvEpisode,
    pub encoding: HistoryEncoding,
}

impl<N: Network + ?Sized> LossOracle for EpisodeOracle<'_, N> {
    fn evaluate(&self, theta: &Tensor) -> Result<Evaluation> {
        let (value, grad) = episode_loss_and_gradient(self.net, theta, self.episode, self.encoding)?;
        Ok(Evaluation::new(value, grad))
    }

    fn value(&self, theta: &Tensor) -> Result<f64> {
        crate::control::rollout::counterfactual_rollout(self.net, theta, self.episode, self.encoding)
            .map(|r| r.loss)
    }
}

#[derive(Clone, Debug)]
pub struct EpisodicRun {
    pub trace: RegretTrace,
    pub theta: Tensor,
    /// Episodes as seen by the learner: recovered disturbances in place of
    /// the injected ones.
    pub recorded: Vec<LtvEpisode>,
    pub results: Vec<EpisodeResult>,
}

/// Episodic online gradient descent: play each episode with the current
/// `θ_t`, rebuild it from recovered disturbances, and step on the gradient of
/// its counterfactual loss.
///
/// The network's `θ` is set to the final iterate. On failure the trace holds
/// the completed episodes.
pub fn run_episodic<N, A, I>(
    net: &mut N,
    algorithm: &mut A,
    episodes: I,
    encoding: HistoryEncoding,
) -> std::result::Result<EpisodicRun, RunFailure>
where
    N: Network + ?Sized,
    A: OnlineAlgorithm + ?Sized,
    I: IntoIterator<Item = LtvEpisode>,
{
    let mut trace = RegretTrace::new();
    let mut recorded = Vec::new();
    let mut results = Vec::new();
    for (idx, ep) in episodes.into_iter().enumerate() {
        let round = idx + 1;
        let attempt = (|| -> Result<(EpisodeResult, LtvEpisode, Tensor)> {
            let theta = algorithm.iterate();
            let res = rollout(&*net, theta, &ep, encoding)?;
            let seen = ep.with_disturbances(res.recovered.clone())?;
            let (_, grad) = episode_loss_and_gradient(&*net, theta, &seen, encoding)?;
            Ok((res, seen, grad))
        })();
        let (res, seen, grad) = match attempt {
            Ok(v) => v,
            Err(e) => {
                return Err(RunFailure {
                    round,
                    partial: trace,
                    source: e,
                })
            }
        };
        trace.push_loss(res.loss);
        if let Err(e) = algorithm.update(&grad) {
            let source = match e {
                Error::NonFinite { what, .. } => Error::NonFinite { round, what },
                other => other,
            };
            return Err(RunFailure {
                round,
                partial: trace,
                source,
            });
        }
        recorded.push(seen);
        results.push(res);
    }
    let theta = algorithm.iterate().clone();
    net.set_theta(theta.clone()).map_err(|e| RunFailure {
        round: trace.len(),
        partial: trace.clone(),
        source: e,
    })?;
    Ok(EpisodicRun {
        trace,
        theta,
        recorded,
        results,
    })
}

fn stack(ms: &[DMatrix<f64>]) -> Tensor {
    let (r, c) = (ms[0].nrows(), ms[0].ncols());
    let mut data = Vec::with_capacity(ms.len() * r * c);
    for m in ms {
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
    }
    Tensor::from_vec(&[ms.len(), r, c], data).expect("sized")
}

fn unstack(t: &Tensor) -> Result<Vec<DMatrix<f64>>> {
    let [k, r, c] = <[usize; 3]>::try_from(t.shape())
        .map_err(|_| Error::Container("expected a K × rows × cols tensor".into()))?;
    Ok((0..k)
        .map(|i| DMatrix::from_row_slice(r, c, &t.as_slice()[i * r * c..(i + 1) * r * c]))
        .collect())
}

fn rows(vs: &[Vec<f64>]) -> Tensor {
    let n = vs.first().map_or(0, Vec::len);
    Tensor::from_vec(&[vs.len(), n], vs.concat()).expect("sized")
}

fn unrows(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    let [_, n] = <[usize; 2]>::try_from(t.shape())
        .map_err(|_| Error::Container("expected a K × n tensor".into()))?;
    Ok(t.as_slice().chunks_exact(n.max(1)).map(<[f64]>::to_vec).collect())
}

pub fn episode_to_container(ep: &LtvEpisode) -> Result<Container> {
    let mut c = Container::new(TAG)
        .with_field("horizon", ep.horizon())
        .with_field("d_x", ep.d_x())
        .with_field("d_u", ep.d_u())
        .with_field("w_bound", ep.w_bound)
        .with_field("cost", ep.cost.tag())
        .with_field("certificate", ep.certificate)
        .with_field("generator", GENERATOR_ID)
        .with_tensor("A", stack(&ep.a))
        .with_tensor("B", stack(&ep.b))
        .with_tensor("w", rows(&ep.w))
        .with_tensor("x1", Tensor::vector(ep.x1.clone()));
    match &ep.cost {
        CostSpec::Zero => {}
        CostSpec::QuadraticTracking { targets, mu } => {
            c = c.with_field("mu", mu).with_tensor("targets", rows(targets));
        }
        CostSpec::Custom(cost) => {
            return Err(Error::invalid(format!(
                "custom cost `{}` cannot be serialized",
                cost.name()
            )))
        }
    }
    if let Some(f) = &ep.gains {
        c = c.with_tensor("F", stack(f));
    }
    Ok(c)
}

pub fn episode_from_container(c: &Container) -> Result<LtvEpisode> {
    c.expect_tag(TAG)?;
    let cost_tag: String = c.field("cost")?;
    let cost = match cost_tag.as_str() {
        "zero" => CostSpec::Zero,
        "quadratic_tracking" => CostSpec::QuadraticTracking {
            targets: unrows(c.tensor("targets")?)?,
            mu: c.field("mu")?,
        },
        other => return Err(Error::Container(format!("unknown cost `{other}`"))),
    };
    let ep = LtvEpisode {
        x1: c.tensor("x1")?.as_slice().to_vec(),
        a: unstack(c.tensor("A")?)?,
        b: unstack(c.tensor("B")?)?,
        w: unrows(c.tensor("w")?)?,
        cost,
        gains: match c.tensor("F") {
            Ok(t) => Some(unstack(t)?),
            Err(_) => None,
        },
        w_bound: c.field("w_bound")?,
        certificate: c.field::<Option<Certificate>>("certificate")?,
    };
    ep.validate().map_err(|e| Error::Container(e.to_string()))?;
    if (ep.horizon(), ep.d_x(), ep.d_u()) != (c.field("horizon")?, c.field("d_x")?, c.field("d_u")?) {
        return Err(Error::Container("tensor shapes disagree with header".into()));
    }
    Ok(ep)
}

pub fn save_episode(ep: &LtvEpisode, path: &Path) -> Result<()> {
    episode_to_container(ep)?.save(path)
}

pub fn load_episode(path: &Path) -> Result<LtvEpisode> {
    episode_from_container(&Container::load(path)?)
}

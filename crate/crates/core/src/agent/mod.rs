//! Observation encoders, audio-visual fusion, the recurrent actor-critic
//! policy, waypoint selection and execution, and the continuous-action
//! discretizer.

pub mod discretize;
mod layers;
mod profile;
mod waypoint;

pub use discretize::{ContinuousDiscretizer, DiscretizedStep};
pub use layers::{
    AudioDecoder, ConvLayer, ConvStackEncoder, DecoderCache, LinearLayer, SpatialEncoder,
    SpatialLayer, TconvLayer,
};
pub use profile::{NetProfile, ProfileError};
pub use waypoint::{
    execute_waypoint, select_waypoint, waypoint_mask, waypoint_offset, SelectMode, WaypointOutcome,
};

use rand::Rng;

use crate::acoustics::BinauralSpectrogram;
use crate::grid::{AgentPose, Cell, DepthScan, GeometricMap};
use crate::nn::{gru_backward, gru_forward, GruCache, GruParams, NnError, Tensor};

/// Everything the policy sees at one decision point, produced at the same
/// environment step.
///
/// The stored geometric map is allocentric; the view handed to the encoder
/// is egocentric — centered on the agent and rotated so the heading points
/// up — which keeps it aligned with the binaural cue (interaural level
/// difference is left/right relative to the heading) and with the
/// egocentric action map.
#[derive(Debug, Clone)]
pub struct Observation {
    pub spectrogram: BinauralSpectrogram,
    pub depth: DepthScan,
    /// Egocentric geometric-map planes `(2, H, W)`: occupancy then
    /// exploration, agent at the center facing up.
    pub gmap: Tensor,
}

impl Observation {
    pub fn new(
        spectrogram: BinauralSpectrogram,
        depth: DepthScan,
        gmap: &GeometricMap,
        pose: AgentPose,
    ) -> Self {
        Observation { spectrogram, depth, gmap: egocentric_planes(gmap, pose) }
    }

    /// Cheap throwaway observation used only as a swap target when moving
    /// a real observation out of a buffer.
    pub fn placeholder() -> Self {
        Observation {
            spectrogram: BinauralSpectrogram::zeros(1, 1),
            depth: DepthScan { distances: vec![1.0], fov_degrees: 0.0, max_range: 1.0 },
            gmap: Tensor::zeros(&[2, 1, 1]),
        }
    }

    fn audio_planes(&self) -> Tensor {
        let (f, t, _) = self.spectrogram.shape();
        Tensor::from_vec(&[2, f, t], self.spectrogram.as_planes())
    }

    fn depth_planes(&self, max_range: f64) -> Tensor {
        let vals: Vec<f64> = self.depth.distances.iter().map(|&d| d / max_range).collect();
        Tensor::from_vec(&[1, 1, vals.len()], vals)
    }
}

/// All learnable state of the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub profile: NetProfile,
    pub audio: ConvStackEncoder,
    pub spatial: SpatialEncoder,
    pub fusion: ConvStackEncoder,
    pub depth: ConvStackEncoder,
    pub gru: GruParams,
    pub actor: LinearLayer,
    pub critic: LinearLayer,
    pub aux_decoder: Option<AudioDecoder>,
}

/// Per-step activations needed to run the backward pass.
pub struct PolicyCache {
    audio: layers::ConvStackCache,
    spatial: layers::SpatialCache,
    fusion: layers::ConvStackCache,
    depth: layers::ConvStackCache,
    gru_in: Vec<f64>,
    gru: GruCache,
    pub h_new: Vec<f64>,
    pub audio_embed: Vec<f64>,
}

/// Output of one policy evaluation.
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub value: f64,
    pub h_new: Vec<f64>,
}

impl Policy {
    pub fn init(profile: NetProfile, rng: &mut impl Rng) -> Self {
        profile.build_policy(rng)
    }

    /// Pure forward pass; `h_prev` has `profile.hidden` entries.
    pub fn forward(&self, obs: &Observation, h_prev: &[f64]) -> Result<PolicyOutput, NnError> {
        let (out, _) = self.forward_cached(obs, h_prev)?;
        Ok(out)
    }

    pub fn forward_cached(
        &self,
        obs: &Observation,
        h_prev: &[f64],
    ) -> Result<(PolicyOutput, PolicyCache), NnError> {
        let audio_in = obs.audio_planes();
        let (audio_embed, audio_cache) = self.audio.forward(&audio_in)?;
        let (spatial_map, spatial_cache) = self.spatial.forward(&audio_in)?;
        let fusion_in = concat_channels(&spatial_map, &obs.gmap)?;
        let (fusion_embed, fusion_cache) = self.fusion.forward(&fusion_in)?;
        let depth_in = obs.depth_planes(self.profile.max_range);
        let (depth_embed, depth_cache) = self.depth.forward(&depth_in)?;

        let mut gru_in =
            Vec::with_capacity(audio_embed.len() + fusion_embed.len() + depth_embed.len());
        gru_in.extend_from_slice(&audio_embed);
        gru_in.extend_from_slice(&fusion_embed);
        gru_in.extend_from_slice(&depth_embed);
        let (h_new, gru_cache) = gru_forward(&gru_in, h_prev, &self.gru)?;
        let logits = self.actor.forward(&h_new)?;
        let value = self.critic.forward(&h_new)?[0];
        let _ = (audio_in, fusion_in, depth_in);
        Ok((
            PolicyOutput { logits, value, h_new: h_new.clone() },
            PolicyCache {
                audio: audio_cache,
                spatial: spatial_cache,
                fusion: fusion_cache,
                depth: depth_cache,
                gru_in,
                gru: gru_cache,
                h_new,
                audio_embed,
            },
        ))
    }

    /// Backward pass for one step. `grad_logits`, `grad_value`, and
    /// `grad_h_future` (the BPTT gradient flowing in from the next step)
    /// combine into gradients accumulated in `grads`; returns the gradient
    /// w.r.t. `h_prev`. `grad_audio_embed_extra` carries the auxiliary
    /// reconstruction gradient into the audio encoder when that loss is
    /// enabled.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        cache: &PolicyCache,
        h_prev: &[f64],
        grad_logits: &[f64],
        grad_value: f64,
        grad_h_future: &[f64],
        grad_audio_embed_extra: Option<&[f64]>,
        grads: &mut Policy,
    ) -> Result<Vec<f64>, NnError> {
        let mut grad_h = self.actor.backward(grad_logits, &cache.h_new, &mut grads.actor)?;
        let gv = self.critic.backward(&[grad_value], &cache.h_new, &mut grads.critic)?;
        for i in 0..grad_h.len() {
            grad_h[i] += gv[i] + grad_h_future[i];
        }
        let (grad_gru_in, grad_h_prev) =
            gru_backward(&grad_h, &cache.gru_in, h_prev, &self.gru, &cache.gru, &mut grads.gru);

        let embed = self.profile.embed;
        let mut grad_audio = grad_gru_in[0..embed].to_vec();
        if let Some(extra) = grad_audio_embed_extra {
            for (a, b) in grad_audio.iter_mut().zip(extra) {
                *a += b;
            }
        }
        let grad_fusion = &grad_gru_in[embed..2 * embed];
        let grad_depth = &grad_gru_in[2 * embed..3 * embed];

        let g_audio_in = self.audio.backward(&grad_audio, &cache.audio, &mut grads.audio)?;
        let g_fusion_in = self.fusion.backward(grad_fusion, &cache.fusion, &mut grads.fusion)?;
        self.depth.backward(grad_depth, &cache.depth, &mut grads.depth)?;

        // The first two fusion channels came from the spatial encoder.
        let g_spatial_out = split_first_channels(&g_fusion_in, 2);
        let g_spatial_in =
            self.spatial.backward(&g_spatial_out, &cache.spatial, &mut grads.spatial)?;
        // Both audio paths share the spectrogram input; the sum is the
        // total input gradient (unused downstream, observations are leaves).
        let _ = (g_audio_in, g_spatial_in);
        Ok(grad_h_prev)
    }

    pub fn zero_hidden(&self) -> Vec<f64> {
        vec![0.0; self.profile.hidden]
    }

    /// Zero-valued clone used as a gradient accumulator.
    pub fn zeros_like(&self) -> Policy {
        Policy {
            profile: self.profile.clone(),
            audio: self.audio.zeros_like(),
            spatial: self.spatial.zeros_like(),
            fusion: self.fusion.zeros_like(),
            depth: self.depth.zeros_like(),
            gru: GruParams::zeros(self.gru.input_size(), self.gru.hidden_size()),
            actor: self.actor.zeros_like(),
            critic: self.critic.zeros_like(),
            aux_decoder: self.aux_decoder.as_ref().map(|d| d.zeros_like()),
        }
    }

    /// Named parameter tensors in a fixed order; the checkpoint format and
    /// the optimizer state both follow this order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        visit_stack(&mut out, "audio", &self.audio);
        for (i, layer) in self.spatial.layers.iter().enumerate() {
            let (k, b) = match layer {
                SpatialLayer::Conv(c) => (&c.kernels, &c.bias),
                SpatialLayer::Tconv(t) => (&t.kernels, &t.bias),
            };
            out.push((format!("spatial.{i}.kernels"), k));
            out.push((format!("spatial.{i}.bias"), b));
        }
        visit_stack(&mut out, "fusion", &self.fusion);
        visit_stack(&mut out, "depth", &self.depth);
        out.push(("gru.w_r".into(), &self.gru.w_r));
        out.push(("gru.u_r".into(), &self.gru.u_r));
        out.push(("gru.w_z".into(), &self.gru.w_z));
        out.push(("gru.u_z".into(), &self.gru.u_z));
        out.push(("gru.w".into(), &self.gru.w));
        out.push(("gru.u".into(), &self.gru.u));
        out.push(("actor.weight".into(), &self.actor.weight));
        out.push(("actor.bias".into(), &self.actor.bias));
        out.push(("critic.weight".into(), &self.critic.weight));
        out.push(("critic.bias".into(), &self.critic.bias));
        if let Some(dec) = &self.aux_decoder {
            out.push(("aux.fc.weight".into(), &dec.fc.weight));
            out.push(("aux.fc.bias".into(), &dec.fc.bias));
            for (i, t) in dec.tconvs.iter().enumerate() {
                out.push((format!("aux.tconv.{i}.kernels"), &t.kernels));
                out.push((format!("aux.tconv.{i}.bias"), &t.bias));
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        visit_stack_mut(&mut out, "audio", &mut self.audio);
        for (i, layer) in self.spatial.layers.iter_mut().enumerate() {
            let (k, b) = match layer {
                SpatialLayer::Conv(c) => (&mut c.kernels, &mut c.bias),
                SpatialLayer::Tconv(t) => (&mut t.kernels, &mut t.bias),
            };
            out.push((format!("spatial.{i}.kernels"), k));
            out.push((format!("spatial.{i}.bias"), b));
        }
        visit_stack_mut(&mut out, "fusion", &mut self.fusion);
        visit_stack_mut(&mut out, "depth", &mut self.depth);
        out.push(("gru.w_r".into(), &mut self.gru.w_r));
        out.push(("gru.u_r".into(), &mut self.gru.u_r));
        out.push(("gru.w_z".into(), &mut self.gru.w_z));
        out.push(("gru.u_z".into(), &mut self.gru.u_z));
        out.push(("gru.w".into(), &mut self.gru.w));
        out.push(("gru.u".into(), &mut self.gru.u));
        out.push(("actor.weight".into(), &mut self.actor.weight));
        out.push(("actor.bias".into(), &mut self.actor.bias));
        out.push(("critic.weight".into(), &mut self.critic.weight));
        out.push(("critic.bias".into(), &mut self.critic.bias));
        if let Some(dec) = &mut self.aux_decoder {
            out.push(("aux.fc.weight".into(), &mut dec.fc.weight));
            out.push(("aux.fc.bias".into(), &mut dec.fc.bias));
            for (i, t) in dec.tconvs.iter_mut().enumerate() {
                out.push((format!("aux.tconv.{i}.kernels"), &mut t.kernels));
                out.push((format!("aux.tconv.{i}.bias"), &mut t.bias));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Add `scale * other` into this policy's tensors (gradient merging).
    pub fn accumulate(&mut self, other: &Policy, scale: f64) {
        let mut mine = self.named_params_mut();
        let theirs = other.named_params();
        assert_eq!(mine.len(), theirs.len());
        for ((_, a), (_, b)) in mine.iter_mut().zip(theirs.iter()) {
            a.add_scaled(b, scale);
        }
    }
}

fn visit_stack<'a>(
    out: &mut Vec<(String, &'a Tensor)>,
    prefix: &str,
    stack: &'a ConvStackEncoder,
) {
    for (i, c) in stack.convs.iter().enumerate() {
        out.push((format!("{prefix}.conv{i}.kernels"), &c.kernels));
        out.push((format!("{prefix}.conv{i}.bias"), &c.bias));
    }
    out.push((format!("{prefix}.fc.weight"), &stack.fc.weight));
    out.push((format!("{prefix}.fc.bias"), &stack.fc.bias));
}

fn visit_stack_mut<'a>(
    out: &mut Vec<(String, &'a mut Tensor)>,
    prefix: &str,
    stack: &'a mut ConvStackEncoder,
) {
    for (i, c) in stack.convs.iter_mut().enumerate() {
        out.push((format!("{prefix}.conv{i}.kernels"), &mut c.kernels));
        out.push((format!("{prefix}.conv{i}.bias"), &mut c.bias));
    }
    out.push((format!("{prefix}.fc.weight"), &mut stack.fc.weight));
    out.push((format!("{prefix}.fc.bias"), &mut stack.fc.bias));
}

fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (ca, h, w) = match a.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(NnError::Shape(format!("expected 3-d tensor, got {s:?}"))),
    };
    let (cb, hb, wb) = match b.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(NnError::Shape(format!("expected 3-d tensor, got {s:?}"))),
    };
    if (h, w) != (hb, wb) {
        return Err(NnError::Shape(format!(
            "spatial mismatch: {h}x{w} vs {hb}x{wb} when fusing channels"
        )));
    }
    let mut data = Vec::with_capacity((ca + cb) * h * w);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Ok(Tensor::from_vec(&[ca + cb, h, w], data))
}

fn split_first_channels(t: &Tensor, c: usize) -> Tensor {
    let (_, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    Tensor::from_vec(&[c, h, w], t.data()[..c * h * w].to_vec())
}

//! Network profiles: the architecture family bound to a sample rate and
//! geometric-map size.
//!
//! The paper-scale profiles (`replica44k`, `mp3d16k`) reproduce the
//! published layer shapes against 200x200 maps and exist for shape
//! fidelity; the desk profiles are scaled-down variants of the same stack
//! layout sized for small grids and fast training.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::layers::{
    AudioDecoder, ConvLayer, ConvStackEncoder, LinearLayer, SpatialEncoder, SpatialLayer,
    TconvLayer,
};
use super::Policy;
use crate::nn::GruParams;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("unknown profile {0:?} (expected desk16k|desk44k|replica44k|mp3d16k)")]
    UnknownProfile(String),
    #[error("profile {0} requires sample rate {1}, config says {2}")]
    SampleRateMismatch(String, u32, u32),
    #[error("layer stack does not fit: {0}")]
    StackTooDeep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_ch: usize,
    pub k: (usize, usize),
    pub stride: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpatialSpec {
    Conv(ConvSpec),
    Tconv(ConvSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetProfile {
    pub name: String,
    pub sample_rate: u32,
    /// Spectrogram plane shape `(freq, time)`.
    pub spec_shape: (usize, usize),
    pub audio_convs: Vec<ConvSpec>,
    pub spatial_layers: Vec<SpatialSpec>,
    pub fusion_convs: Vec<ConvSpec>,
    pub depth_convs: Vec<ConvSpec>,
    pub embed: usize,
    pub hidden: usize,
    pub map_size: (usize, usize),
    pub n_rays: usize,
    pub max_range: f64,
    pub action_k: usize,
}

impl NetProfile {
    /// Construct a named profile. `hidden` and `action_k` may be overridden
    /// by the run config afterwards.
    pub fn named(
        name: &str,
        map_size: (usize, usize),
        n_rays: usize,
        max_range: f64,
    ) -> Result<NetProfile, ProfileError> {
        let c = |out_ch, k, stride| ConvSpec { out_ch, k, stride };
        let base = match name {
            "desk16k" => NetProfile {
                name: name.into(),
                sample_rate: 16000,
                spec_shape: (65, 26),
                audio_convs: vec![
                    c(8, (5, 5), (2, 2)),
                    c(16, (3, 3), (2, 2)),
                    c(16, (3, 3), (1, 1)),
                ],
                spatial_layers: vec![
                    SpatialSpec::Conv(c(4, (5, 5), (4, 2))),
                    SpatialSpec::Tconv(c(2, (3, 3), (1, 1))),
                ],
                fusion_convs: plan_fusion(map_size, &[8, 16, 16]),
                depth_convs: vec![
                    c(4, (1, 8), (1, 4)),
                    c(8, (1, 4), (1, 2)),
                    c(8, (1, 3), (1, 2)),
                ],
                embed: 64,
                hidden: 64,
                map_size,
                n_rays,
                max_range,
                action_k: 3,
            },
            "desk44k" => NetProfile {
                name: name.into(),
                sample_rate: 44100,
                spec_shape: (65, 69),
                audio_convs: vec![
                    c(8, (8, 8), (4, 4)),
                    c(16, (4, 4), (2, 2)),
                    c(16, (3, 3), (1, 1)),
                ],
                spatial_layers: vec![
                    SpatialSpec::Conv(c(4, (5, 5), (4, 4))),
                    SpatialSpec::Tconv(c(2, (3, 3), (1, 1))),
                ],
                fusion_convs: plan_fusion(map_size, &[8, 16, 16]),
                depth_convs: vec![
                    c(4, (1, 8), (1, 4)),
                    c(8, (1, 4), (1, 2)),
                    c(8, (1, 3), (1, 2)),
                ],
                embed: 64,
                hidden: 64,
                map_size,
                n_rays,
                max_range,
                action_k: 3,
            },
            "replica44k" => NetProfile {
                name: name.into(),
                sample_rate: 44100,
                spec_shape: (65, 69),
                audio_convs: vec![
                    c(32, (8, 8), (4, 4)),
                    c(64, (4, 4), (2, 2)),
                    c(64, (3, 3), (1, 1)),
                ],
                spatial_layers: vec![
                    SpatialSpec::Tconv(c(8, (8, 8), (3, 3))),
                    SpatialSpec::Conv(c(2, (1, 13), (1, 1))),
                ],
                fusion_convs: vec![
                    c(32, (8, 8), (4, 4)),
                    c(64, (4, 4), (2, 2)),
                    c(64, (3, 3), (1, 1)),
                ],
                depth_convs: vec![
                    c(32, (1, 8), (1, 4)),
                    c(64, (1, 4), (1, 2)),
                    c(64, (1, 3), (1, 2)),
                ],
                embed: 512,
                hidden: 512,
                map_size: (200, 200),
                n_rays,
                max_range,
                action_k: 3,
            },
            "mp3d16k" => NetProfile {
                name: name.into(),
                sample_rate: 16000,
                spec_shape: (65, 26),
                audio_convs: vec![
                    c(32, (5, 5), (2, 2)),
                    c(64, (3, 3), (2, 2)),
                    c(64, (3, 3), (1, 1)),
                ],
                spatial_layers: vec![
                    SpatialSpec::Tconv(c(8, (5, 2), (3, 4))),
                    SpatialSpec::Tconv(c(8, (4, 2), (1, 2))),
                    SpatialSpec::Conv(c(2, (1, 5), (1, 1))),
                ],
                fusion_convs: vec![
                    c(32, (8, 8), (4, 4)),
                    c(64, (4, 4), (2, 2)),
                    c(64, (3, 3), (1, 1)),
                ],
                depth_convs: vec![
                    c(32, (1, 8), (1, 4)),
                    c(64, (1, 4), (1, 2)),
                    c(64, (1, 3), (1, 2)),
                ],
                embed: 512,
                hidden: 512,
                map_size: (200, 200),
                n_rays,
                max_range,
                action_k: 3,
            },
            other => return Err(ProfileError::UnknownProfile(other.into())),
        };
        base.shape_trace()?;
        Ok(base)
    }

    pub fn is_desk(&self) -> bool {
        self.name.starts_with("desk")
    }

    /// Shape arithmetic through every stack; errors if any layer does not
    /// fit its input.
    pub fn shape_trace(&self) -> Result<ShapeTrace, ProfileError> {
        let audio = trace_convs("audio", self.spec_shape, &self.audio_convs)?;
        let mut spatial = Vec::new();
        let mut cur = self.spec_shape;
        for (i, layer) in self.spatial_layers.iter().enumerate() {
            cur = match layer {
                SpatialSpec::Conv(c) => conv_dim("spatial", i, cur, c.k, c.stride)?,
                SpatialSpec::Tconv(c) => {
                    ((cur.0 - 1) * c.stride.0 + c.k.0, (cur.1 - 1) * c.stride.1 + c.k.1)
                }
            };
            spatial.push(cur);
        }
        let fusion = trace_convs("fusion", self.map_size, &self.fusion_convs)?;
        let depth = trace_convs("depth", (1, self.n_rays), &self.depth_convs)?;
        Ok(ShapeTrace { audio, spatial, fusion, depth })
    }

    pub(super) fn build_policy(&self, rng: &mut impl Rng) -> Policy {
        let trace = self.shape_trace().expect("profile validated at construction");
        let audio = build_stack(2, &self.audio_convs, &trace.audio, self.embed, rng);
        let fusion = build_stack(4, &self.fusion_convs, &trace.fusion, self.embed, rng);
        let depth = build_stack(1, &self.depth_convs, &trace.depth, self.embed, rng);

        let mut spatial_layers = Vec::new();
        let mut ch = 2;
        for spec in &self.spatial_layers {
            match spec {
                SpatialSpec::Conv(c) => {
                    spatial_layers.push(SpatialLayer::Conv(ConvLayer::init(
                        ch, c.out_ch, c.k, c.stride, rng,
                    )));
                    ch = c.out_ch;
                }
                SpatialSpec::Tconv(c) => {
                    spatial_layers.push(SpatialLayer::Tconv(TconvLayer::init(
                        ch, c.out_ch, c.k, c.stride, rng,
                    )));
                    ch = c.out_ch;
                }
            }
        }
        debug_assert_eq!(ch, 2, "spatial encoder must emit 2 channels");
        let spatial = SpatialEncoder { layers: spatial_layers, target: self.map_size };

        let gru = GruParams::init(3 * self.embed, self.hidden, rng);
        let n_actions = self.action_k * self.action_k;
        let actor = LinearLayer::init(self.hidden, n_actions, rng);
        let critic = LinearLayer::init(self.hidden, 1, rng);

        Policy {
            profile: self.clone(),
            audio,
            spatial,
            fusion,
            depth,
            gru,
            actor,
            critic,
            aux_decoder: None,
        }
    }

    /// Build the auxiliary reconstruction decoder mirroring the audio
    /// encoder.
    pub fn build_aux_decoder(&self, rng: &mut impl Rng) -> AudioDecoder {
        let trace = self.shape_trace().expect("profile validated at construction");
        let (fh, fw) = *trace.audio.last().unwrap();
        let last_ch = self.audio_convs.last().unwrap().out_ch;
        let fc = LinearLayer::init(self.embed, last_ch * fh * fw, rng);
        let mut tconvs = Vec::new();
        let mut ch = last_ch;
        // Walk the encoder specs backwards; the final layer lands near the
        // spectrogram shape and the resize aligns it exactly.
        let mut specs: Vec<(usize, ConvSpec)> = Vec::new();
        let mut in_chs = vec![2usize];
        for s in &self.audio_convs {
            in_chs.push(s.out_ch);
        }
        for (i, s) in self.audio_convs.iter().enumerate().rev() {
            specs.push((in_chs[i], *s));
        }
        for (out_ch, spec) in specs {
            tconvs.push(TconvLayer::init(ch, out_ch, spec.k, spec.stride, rng));
            ch = out_ch;
        }
        AudioDecoder {
            fc,
            fc_shape: vec![last_ch, fh, fw],
            tconvs,
            target: self.spec_shape,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    pub audio: Vec<(usize, usize)>,
    pub spatial: Vec<(usize, usize)>,
    pub fusion: Vec<(usize, usize)>,
    pub depth: Vec<(usize, usize)>,
}

fn build_stack<R: Rng>(
    in_ch: usize,
    specs: &[ConvSpec],
    dims: &[(usize, usize)],
    embed: usize,
    rng: &mut R,
) -> ConvStackEncoder {
    let mut convs = Vec::new();
    let mut ch = in_ch;
    for s in specs {
        convs.push(ConvLayer::init(ch, s.out_ch, s.k, s.stride, rng));
        ch = s.out_ch;
    }
    let (fh, fw) = *dims.last().expect("at least one conv");
    ConvStackEncoder { convs, fc: LinearLayer::init(ch * fh * fw, embed, rng) }
}

fn conv_dim(
    stack: &str,
    i: usize,
    input: (usize, usize),
    k: (usize, usize),
    stride: (usize, usize),
) -> Result<(usize, usize), ProfileError> {
    if k.0 > input.0 || k.1 > input.1 {
        return Err(ProfileError::StackTooDeep(format!(
            "{stack} layer {i}: kernel {k:?} exceeds input {input:?}"
        )));
    }
    Ok(((input.0 - k.0) / stride.0 + 1, (input.1 - k.1) / stride.1 + 1))
}

fn trace_convs(
    stack: &str,
    input: (usize, usize),
    specs: &[ConvSpec],
) -> Result<Vec<(usize, usize)>, ProfileError> {
    let mut cur = input;
    let mut out = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        cur = conv_dim(stack, i, cur, s.k, s.stride)?;
        out.push(cur);
    }
    Ok(out)
}

/// Fusion stack sized to the geometric map: stride-2 3x3 convolutions while
/// the axis is large, stride-1 afterwards, axes planned independently so
/// rectangular maps work.
fn plan_fusion(map_size: (usize, usize), channels: &[usize]) -> Vec<ConvSpec> {
    let plan_axis = |mut n: usize| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        while out.len() < channels.len() {
            if n >= 7 {
                out.push((3, 2));
                n = (n - 3) / 2 + 1;
            } else if n >= 3 {
                out.push((3, 1));
                n -= 2;
            } else {
                break;
            }
        }
        out
    };
    let h = plan_axis(map_size.0);
    let w = plan_axis(map_size.1);
    let depth = h.len().max(w.len()).max(1);
    (0..depth)
        .map(|i| ConvSpec {
            out_ch: channels[i.min(channels.len() - 1)],
            k: (h.get(i).map_or(1, |l| l.0), w.get(i).map_or(1, |l| l.0)),
            stride: (h.get(i).map_or(1, |l| l.1), w.get(i).map_or(1, |l| l.1)),
        })
        .collect()
}

//! Deep Q-learning machinery: convolutional Q-networks, replay, target
//! networks, epsilon-greedy exploration and the TD(0) training step.

mod dqn;
mod network;
mod replay;
mod tensor;

use thiserror::Error;

pub use dqn::{
    argmax, epsilon_greedy, sync_target, train_dqn, train_step, Environment, Evaluator, Step, TrainConfig,
    TrainOutcome,
};
pub use network::{Architecture, ForwardPass, LayerSpec, QNetwork};
pub use replay::{ReplayBuffer, Transition};
pub use tensor::Tensor3;

use crate::codec::{self, CodecError, PayloadKind, Reader, Writer};

#[derive(Debug, Error, PartialEq)]
pub enum RlError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in tensor or parameters")]
    NonFinite,
    #[error("networks have different architectures")]
    ArchitectureMismatch,
    #[error("empty training batch")]
    EmptyBatch,
    #[error("training diverged (loss {0})")]
    Divergence(f64),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl QNetwork {
    /// Appends the network description and parameters to a payload.
    pub(crate) fn encode_into(&self, w: &mut Writer) {
        w.str(self.architecture().tag());
        let (f, m, n) = self.input_dims();
        w.u32(f as u32);
        w.u32(m as u32);
        w.u32(n as u32);
        w.u64(self.seed());
        w.u32(self.layers().len() as u32);
        for l in self.layers() {
            match *l {
                LayerSpec::Conv { in_ch, out_ch, kernel, rows, len } => {
                    w.u8(1);
                    for v in [in_ch, out_ch, kernel, rows, len] {
                        w.u32(v as u32);
                    }
                }
                LayerSpec::Dense { inputs, outputs } => {
                    w.u8(2);
                    w.u32(inputs as u32);
                    w.u32(outputs as u32);
                }
            }
        }
        w.u64(self.params().len() as u64);
        for p in self.params() {
            w.f64(*p);
        }
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, RlError> {
        let tag = r.str()?;
        let arch = Architecture::from_tag(&tag)
            .ok_or_else(|| CodecError::Malformed(format!("unknown architecture `{tag}`")))?;
        let input = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let seed = r.u64()?;
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(16));
        for _ in 0..count {
            layers.push(match r.u8()? {
                1 => {
                    let mut v = [0usize; 5];
                    for x in &mut v {
                        *x = r.u32()? as usize;
                    }
                    LayerSpec::Conv { in_ch: v[0], out_ch: v[1], kernel: v[2], rows: v[3], len: v[4] }
                }
                2 => LayerSpec::Dense { inputs: r.u32()? as usize, outputs: r.u32()? as usize },
                k => return Err(CodecError::Malformed(format!("unknown layer kind {k}")).into()),
            });
        }
        let n = r.usize()?;
        let mut params = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            params.push(r.f64()?);
        }
        QNetwork::from_parts(arch, input, layers, params, seed)
    }

    /// Standalone `CRLM` file bytes for this network.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        codec::seal(PayloadKind::Network, &w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RlError> {
        let payload = codec::open(bytes, PayloadKind::Network)?;
        let mut r = Reader::new(payload);
        let net = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(net)
    }
}

use super::{MaskMatrix, NumericsError, Tape, Var};

/// Projection weights of one multi-head attention block, all `d × d`.
///
/// There are no biases, so attention over all-zero values yields exactly zero.
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub query: Var,
    pub key: Var,
    pub value: Var,
    pub output: Var,
}

/// Keys and values already projected by [`AttentionWeights::key`] and
/// [`AttentionWeights::value`].
///
/// Lets several queries share one projection of a large memory.
#[derive(Clone, Copy, Debug)]
pub struct ProjectedMemory {
    pub keys: Var,
    pub values: Var,
}

impl AttentionWeights {
    pub fn project_memory(&self, tape: &mut Tape, memory: Var) -> Result<ProjectedMemory, NumericsError> {
        Ok(ProjectedMemory {
            keys: tape.matmul(memory, self.key)?,
            values: tape.matmul(memory, self.value)?,
        })
    }
}

/// `softmax((Q W_q)(K W_k)ᵀ / √d_head + M)(V W_v)` per head, heads
/// concatenated and projected by `W_o`.
#[allow(clippy::too_many_arguments)]
pub fn masked_attention(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&MaskMatrix>,
    weights: &AttentionWeights,
    heads: usize,
    dropout: Option<Vec<f64>>,
) -> Result<Var, NumericsError> {
    let memory = ProjectedMemory {
        keys: tape.matmul(k, weights.key)?,
        values: tape.matmul(v, weights.value)?,
    };
    attend_projected(tape, q, memory, mask, weights, heads, dropout)
}

/// Same as [`masked_attention`] with keys and values projected up front.
pub fn attend_projected(
    tape: &mut Tape,
    q: Var,
    memory: ProjectedMemory,
    mask: Option<&MaskMatrix>,
    weights: &AttentionWeights,
    heads: usize,
    dropout: Option<Vec<f64>>,
) -> Result<Var, NumericsError> {
    let qp = tape.matmul(q, weights.query)?;
    let mixed = tape.attention(qp, memory.keys, memory.values, mask, heads, dropout)?;
    tape.matmul(mixed, weights.output)
}

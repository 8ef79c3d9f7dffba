use super::params::{BlockParams, EncoderParams, CLASSES};
use super::position::{PeKind, PositionTable};
use super::tokens::TokenGrid;
use crate::augment::PositionPlan;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var, LAYER_NORM_EPS};

struct BoundBlock {
    ln1_gain: Var,
    ln1_bias: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    wo: Var,
    bo: Var,
    ln2_gain: Var,
    ln2_bias: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

impl BoundBlock {
    fn bind<'a>(tape: &mut Tape<'a>, b: &'a BlockParams, trainable: bool) -> Self {
        let mut leaf = |m: &'a Matrix| if trainable { tape.param(m) } else { tape.constant(m) };
        BoundBlock {
            ln1_gain: leaf(&b.ln1_gain),
            ln1_bias: leaf(&b.ln1_bias),
            wq: leaf(&b.wq),
            wk: leaf(&b.wk),
            wv: leaf(&b.wv),
            wo: leaf(&b.wo),
            bo: leaf(&b.bo),
            ln2_gain: leaf(&b.ln2_gain),
            ln2_bias: leaf(&b.ln2_bias),
            w1: leaf(&b.w1),
            b1: leaf(&b.b1),
            w2: leaf(&b.w2),
            b2: leaf(&b.b2),
        }
    }

    fn vars(&self) -> [Var; 13] {
        [
            self.ln1_gain,
            self.ln1_bias,
            self.wq,
            self.wk,
            self.wv,
            self.wo,
            self.bo,
            self.ln2_gain,
            self.ln2_bias,
            self.w1,
            self.b1,
            self.w2,
            self.b2,
        ]
    }
}

/// Encoder parameters registered as leaves on a tape.
pub(crate) struct BoundParams {
    patch_projection: Var,
    patch_bias: Var,
    class_token: Var,
    blocks: Vec<BoundBlock>,
    final_gain: Var,
    final_bias: Var,
    head: Var,
    head_bias: Var,
    position: Option<Var>,
    position_is_param: bool,
}

impl BoundParams {
    /// Binds `params`; the position table is taken from `pe` when given,
    /// otherwise from the parameters themselves.
    pub(crate) fn bind<'a>(
        tape: &mut Tape<'a>,
        params: &'a EncoderParams,
        pe: Option<&'a PositionTable>,
        trainable: bool,
    ) -> Self {
        let leaf = |tape: &mut Tape<'a>, m: &'a Matrix| {
            if trainable {
                tape.param(m)
            } else {
                tape.constant(m)
            }
        };
        let patch_projection = leaf(tape, &params.patch_projection);
        let patch_bias = leaf(tape, &params.patch_bias);
        let class_token = leaf(tape, &params.class_token);
        let blocks = params
            .blocks
            .iter()
            .map(|b| BoundBlock::bind(tape, b, trainable))
            .collect();
        let final_gain = leaf(tape, &params.final_gain);
        let final_bias = leaf(tape, &params.final_bias);
        let head = leaf(tape, &params.head);
        let head_bias = leaf(tape, &params.head_bias);
        let table = pe.unwrap_or(&params.position);
        let position_is_param = pe.is_none() && trainable && params.position_trainable();
        let position = match table.kind() {
            PeKind::None => None,
            _ if position_is_param => Some(tape.param(table.table())),
            _ => Some(tape.constant(table.table())),
        };
        BoundParams {
            patch_projection,
            patch_bias,
            class_token,
            blocks,
            final_gain,
            final_bias,
            head,
            head_bias,
            position,
            position_is_param,
        }
    }

    /// Trainable leaves in [`EncoderParams::matrices`] order.
    pub(crate) fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.patch_projection, self.patch_bias, self.class_token];
        for b in &self.blocks {
            out.extend(b.vars());
        }
        out.extend([self.final_gain, self.final_bias, self.head, self.head_bias]);
        if self.position_is_param {
            out.extend(self.position);
        }
        out
    }
}

/// Output of one multi-head self-attention sublayer.
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    pub output: Matrix,
    /// One `T × T` row-stochastic matrix per head.
    pub weights: Vec<Matrix>,
}

fn attention(
    tape: &mut Tape<'_>,
    x: Var,
    block: &BoundBlock,
    heads: usize,
    bias: Option<&[Var]>,
) -> Result<(Var, Vec<Var>)> {
    let d = tape.value(x).cols();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::shape(format!("width {d} not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = tape.matmul(x, block.wq)?;
    let k = tape.matmul(x, block.wk)?;
    let v = tape.matmul(x, block.wv)?;
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let raw = tape.matmul_nt(qh, kh)?;
        let mut scores = tape.scale(raw, scale);
        if let Some(bias) = bias {
            scores = tape.add(scores, bias[h])?;
        }
        let w = tape.softmax_rows(scores)?;
        weights.push(w);
        outs.push(tape.matmul(w, vh)?);
    }
    let joined = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    let projected = tape.matmul(joined, block.wo)?;
    Ok((tape.add_row(projected, block.bo)?, weights))
}

/// Multi-head self-attention of `x` (`T × d`) under one block's weights.
/// `relative_bias`, when given, holds one `T × T` additive logit bias per head.
pub fn multi_head_attention(
    x: &Matrix,
    block: &BlockParams,
    heads: usize,
    relative_bias: Option<&[Matrix]>,
) -> Result<AttentionOutput> {
    let d = x.cols();
    if block.wq.shape() != (d, d) {
        return Err(Error::shape(format!(
            "input width {d} does not match projection {:?}",
            block.wq.shape()
        )));
    }
    let mut tape = Tape::new();
    let bound = BoundBlock::bind(&mut tape, block, false);
    let xv = tape.constant(x);
    let bias_vars = match relative_bias {
        Some(b) => {
            if b.len() != heads || b.iter().any(|m| m.shape() != (x.rows(), x.rows())) {
                return Err(Error::shape("relative bias must be one TxT matrix per head"));
            }
            Some(b.iter().map(|m| tape.constant(m)).collect::<Vec<_>>())
        }
        None => None,
    };
    let (out, w) = attention(&mut tape, xv, &bound, heads, bias_vars.as_deref())?;
    Ok(AttentionOutput {
        output: tape.value(out).clone(),
        weights: w.iter().map(|&v| tape.value(v).clone()).collect(),
    })
}

fn check_slots(slots: &[Option<usize>], positions: usize) -> Result<()> {
    if slots.len() != positions {
        return Err(Error::NotAPermutation(format!(
            "plan covers {} tokens, grid has {positions}",
            slots.len()
        )));
    }
    let mut seen = vec![false; positions + 1];
    for s in slots.iter().flatten() {
        if *s == 0 || *s > positions || std::mem::replace(&mut seen[*s], true) {
            return Err(Error::NotAPermutation(format!("row {s} invalid or repeated")));
        }
    }
    Ok(())
}

/// Table rows of the relative bias for every (query, key) pair, including
/// the class token at index 0.
fn relative_index(pe: &PositionTable, slots: &[Option<usize>]) -> Vec<usize> {
    let (_, cols) = pe.grid();
    let cell = |row: usize| ((row - 1) / cols, (row - 1) % cols);
    let positions: Vec<Option<(usize, usize)>> = std::iter::once(None)
        .chain(slots.iter().map(|s| s.map(cell)))
        .collect();
    let mut index = Vec::with_capacity(positions.len() * positions.len());
    for q in &positions {
        for k in &positions {
            index.push(match (q, k) {
                (Some(a), Some(b)) => pe.offset_row(*a, *b),
                _ => pe.class_offset_row(),
            });
        }
    }
    index
}

/// Per-head additive attention bias implied by a relative table and slot assignment.
pub fn relative_bias(pe: &PositionTable, slots: &[Option<usize>]) -> Result<Vec<Matrix>> {
    if pe.kind() != PeKind::Relative {
        return Err(Error::invalid("relative_bias needs a relative position table"));
    }
    let (r, c) = pe.grid();
    check_slots(slots, r * c)?;
    let t = slots.len() + 1;
    let index = relative_index(pe, slots);
    Ok((0..pe.table().cols())
        .map(|h| {
            let data = index.iter().map(|&i| pe.table().get(i, h)).collect();
            Matrix::from_vec(t, t, data).expect("square")
        })
        .collect())
}

/// Records the full forward pass on `tape` and returns the `1 × 2` logits node.
pub(crate) fn forward<'a>(
    tape: &mut Tape<'a>,
    bound: &BoundParams,
    params: &EncoderParams,
    pe: &PositionTable,
    tokens: &'a TokenGrid,
    slots: &[Option<usize>],
) -> Result<Var> {
    let cfg = &params.config;
    if tokens.tokens().cols() != params.patch_projection.rows() {
        return Err(Error::shape(format!(
            "tokens of {} pixels, projection expects {}",
            tokens.tokens().cols(),
            params.patch_projection.rows()
        )));
    }
    check_slots(slots, tokens.positions())?;
    let t = tokens.positions() + 1;

    let x = tape.constant(tokens.tokens());
    let projected = tape.matmul(x, bound.patch_projection)?;
    let embedded = tape.add_row(projected, bound.patch_bias)?;
    let mut h = tape.concat_rows(&[bound.class_token, embedded])?;

    let mut bias = None;
    match (pe.kind(), bound.position) {
        (PeKind::Sinusoidal1d | PeKind::Grid2d, Some(table)) => {
            if pe.table().rows() < t {
                return Err(Error::shape(format!(
                    "position table has {} rows, need {t}",
                    pe.table().rows()
                )));
            }
            let index = std::iter::once(Some(0)).chain(slots.iter().copied()).collect();
            let rows = tape.gather_rows(table, index)?;
            h = tape.add(h, rows)?;
        }
        (PeKind::Relative, Some(table)) => {
            let (r, c) = pe.grid();
            if r * c != tokens.positions() || pe.table().cols() != cfg.heads {
                return Err(Error::shape("relative table does not match grid or head count"));
            }
            let index = relative_index(pe, slots);
            let mut per_head = Vec::with_capacity(cfg.heads);
            for head in 0..cfg.heads {
                per_head.push(tape.gather_scalars(table, head, t, t, index.clone())?);
            }
            bias = Some(per_head);
        }
        _ => {}
    }

    for block in &bound.blocks {
        let a = tape.layer_norm(h, block.ln1_gain, block.ln1_bias, LAYER_NORM_EPS)?;
        let (att, _) = attention(tape, a, block, cfg.heads, bias.as_deref())?;
        h = tape.add(h, att)?;
        let m = tape.layer_norm(h, block.ln2_gain, block.ln2_bias, LAYER_NORM_EPS)?;
        let m = tape.matmul(m, block.w1)?;
        let m = tape.add_row(m, block.b1)?;
        let m = tape.gelu(m);
        let m = tape.matmul(m, block.w2)?;
        let m = tape.add_row(m, block.b2)?;
        h = tape.add(h, m)?;
    }
    let normed = tape.layer_norm(h, bound.final_gain, bound.final_bias, LAYER_NORM_EPS)?;
    let cls = tape.select_row(normed, 0)?;
    let logits = tape.matmul(cls, bound.head)?;
    tape.add_row(logits, bound.head_bias)
}

/// Logits for `tokens` with token `#k` receiving position row `slots[k-1]`
/// (`None` adds no position embedding to that token).
pub fn encode_slots(
    tokens: &TokenGrid,
    pe: &PositionTable,
    slots: &[Option<usize>],
    params: &EncoderParams,
) -> Result<[f64; CLASSES]> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, Some(pe), false);
    let logits = forward(&mut tape, &bound, params, pe, tokens, slots)?;
    let v = tape.value(logits);
    if !v.is_finite() {
        return Err(Error::NonFinite("encode"));
    }
    Ok([v.get(0, 0), v.get(0, 1)])
}

/// Logits for `tokens` under position plan `plan`.
pub fn encode(
    tokens: &TokenGrid,
    pe: &PositionTable,
    plan: &PositionPlan,
    params: &EncoderParams,
) -> Result<[f64; CLASSES]> {
    encode_slots(tokens, pe, &plan.slots(), params)
}

/// One training sequence with its soft target and loss weight.
pub struct WeightedSequence<'a> {
    pub tokens: &'a TokenGrid,
    pub slots: Vec<Option<usize>>,
    pub target: [f64; CLASSES],
    pub weight: f64,
}

/// `sum_i weight_i * CE(softmax(logits_i), target_i)` with gradients for
/// every trainable matrix in declaration order.
pub fn batch_gradients(params: &EncoderParams, batch: &[WeightedSequence<'_>]) -> Result<(f64, Vec<Matrix>)> {
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    for item in batch {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, params, None, true);
        let logits = forward(&mut tape, &bound, params, &params.position, item.tokens, &item.slots)?;
        let loss = tape.soft_target_ce(logits, &item.target, item.weight)?;
        total += tape.value(loss).get(0, 0);
        let g = tape.backward(loss)?;
        for (acc, var) in grads.iter_mut().zip(bound.vars()) {
            if let Some(gv) = g.get(var) {
                acc.add_assign(gv);
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("batch loss"));
    }
    Ok((total, grads))
}

/// Loss value only; same quantity as [`batch_gradients`].
pub fn batch_loss(params: &EncoderParams, batch: &[WeightedSequence<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for item in batch {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, params, None, false);
        let logits = forward(&mut tape, &bound, params, &params.position, item.tokens, &item.slots)?;
        let loss = tape.soft_target_ce(logits, &item.target, item.weight)?;
        total += tape.value(loss).get(0, 0);
    }
    Ok(total)
}

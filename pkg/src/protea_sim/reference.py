"""Double-precision encoder forward pass: the golden functional baseline.

Everything here is plain float64 numpy; the quantized engines are judged
against these functions.  Weight containers may carry float arrays directly
or FxTensor leaves (dequantize first via EncoderWeights.dequantized()).
"""

import math

import numpy as np

from .config import ModelConfig
from .weights import AttentionHeadWeights, EncoderWeights, check_shapes

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715


def ref_softmax(row: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax; a 1000-unit spread must not overflow."""
    row = np.asarray(row, dtype=np.float64)
    shifted = row - row.max()
    e = np.exp(shifted)
    return e / e.sum()


def _softmax_rows(mat: np.ndarray) -> np.ndarray:
    shifted = mat - mat.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def ref_layernorm(row: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """(row - mean)/sqrt(var + eps) * gamma + beta, population variance."""
    row = np.asarray(row, dtype=np.float64)
    mean = row.mean()
    var = ((row - mean) ** 2).mean()
    return (row - mean) / math.sqrt(var + LN_EPS) * gamma + beta


def _layernorm_rows(mat: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mean = mat.mean(axis=1, keepdims=True)
    var = ((mat - mean) ** 2).mean(axis=1, keepdims=True)
    return (mat - mean) / np.sqrt(var + LN_EPS) * gamma + beta


def ref_gelu(x: np.ndarray) -> np.ndarray:
    """tanh-approximation gelu: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_CUBIC * x ** 3)))


def apply_activation(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(x, 0.0)
    if activation == "gelu":
        return ref_gelu(x)
    raise ValueError("unknown activation %r" % activation)


def scale_scores(logits: np.ndarray, scale_mode: str, d_model: int, d_k: int) -> np.ndarray:
    if scale_mode == "sqrt_dk":
        return logits / math.sqrt(d_k)
    if scale_mode == "d_model":
        return logits / d_model
    raise ValueError("unknown scale_mode %r" % scale_mode)


def ref_attention_head(x: np.ndarray, head: AttentionHeadWeights, scale_mode: str,
                       mask: np.ndarray = None) -> np.ndarray:
    """One scaled-dot-product head: (SL, d_model) -> (SL, d_k)."""
    x = np.asarray(x, dtype=np.float64)
    sl, d_model = x.shape
    d_k = np.asarray(head.wq).shape[1]
    q = x @ head.wq + head.bq
    k = x @ head.wk + head.bk
    v = x @ head.wv + head.bv
    logits = scale_scores(q @ k.T, scale_mode, d_model, d_k)
    if mask is not None:
        logits = logits + mask
    return _softmax_rows(logits) @ v


def ref_encoder_forward(x: np.ndarray, w: EncoderWeights, m: ModelConfig,
                        mask: np.ndarray = None) -> np.ndarray:
    """N-layer forward; N == 0 degenerates to the identity (baseline only)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.seq_len, m.d_model):
        raise ValueError("input shape %s != (%d, %d)" % (x.shape, m.seq_len, m.d_model))
    if m.num_layers > 0:
        check_shapes(w, m)
    use_mask = mask if m.mask_enabled else None
    for lw in w.layers:
        heads = [ref_attention_head(x, h, m.scale_mode, use_mask) for h in lw.heads]
        concat = np.concatenate(heads, axis=1)
        proj = concat @ lw.wo + lw.bo
        a = proj + x if m.use_residual else proj
        x1 = _layernorm_rows(a, lw.ln1_gamma, lw.ln1_beta)
        hidden = apply_activation(x1 @ lw.w1 + lw.b1, m.activation)
        f = hidden @ lw.w2 + lw.b2
        b = f + x1 if m.use_residual else f
        x = _layernorm_rows(b, lw.ln2_gamma, lw.ln2_beta)
    return x

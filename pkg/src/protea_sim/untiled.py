"""Untiled fixed-point encoder: the bit-level baseline for the tiled engines.

Every matrix product here is a single whole-matrix int64 numpy matmul with
one requantization at the store point; no tile loops, no shared kernels.
With wide cross-tile accumulation the tiled engines must reproduce these
raws exactly; with per-tile requantization they may differ by a bounded
number of rounding steps.
"""

import math

import numpy as np

from .config import HardwareConfig, ModelConfig, ensure_valid
from .fixedpoint import FxTensor
from .reference import _layernorm_rows, _softmax_rows, ref_gelu
from .weights import EncoderWeights, check_shapes


def _requant(acc: np.ndarray, shift: int, fmt, divisor=None) -> np.ndarray:
    """Half-even rounding of acc / (divisor * 2**shift), saturated.

    Kept independent of the kernels module: floor-divide plus remainder
    comparison rather than shift/mask arithmetic.
    """
    if divisor is None or isinstance(divisor, int):
        den = int(divisor or 1) << shift
        q = np.floor_divide(acc, den)
        r = acc - q * den
        q = q + ((2 * r > den) | ((2 * r == den) & (q % 2 != 0)))
    else:
        q = np.rint(acc.astype(np.float64) / (float(divisor) * 2.0 ** shift)).astype(np.int64)
    return np.clip(q, fmt.min_raw, fmt.max_raw)


def untiled_linear(x_raw: np.ndarray, w_raw: np.ndarray, b_raw: np.ndarray, fmt) -> np.ndarray:
    acc = x_raw @ w_raw
    acc += b_raw.astype(np.int64) << fmt.frac_bits
    return _requant(acc, fmt.frac_bits, fmt)


def _quant(values: np.ndarray, fmt) -> np.ndarray:
    raw = np.rint(values * (1 << fmt.frac_bits)).astype(np.int64)
    return np.clip(raw, fmt.min_raw, fmt.max_raw)


def _sat_add(a: np.ndarray, b: np.ndarray, fmt) -> np.ndarray:
    return np.clip(a + b, fmt.min_raw, fmt.max_raw)


def untiled_head(x_raw, head, fmt, scale_mode, d_model, mask=None):
    """One attention head in fixed point, all products untiled."""
    d_k = head.wq.raw.shape[1]
    q = untiled_linear(x_raw, head.wq.raw, head.bq.raw, fmt)
    k = untiled_linear(x_raw, head.wk.raw, head.bk.raw, fmt)
    v = untiled_linear(x_raw, head.wv.raw, head.bv.raw, fmt)
    divisor = d_model if scale_mode == "d_model" else math.sqrt(d_k)
    s = _requant(q @ k.T, fmt.frac_bits, fmt, divisor=divisor)
    probs = _softmax_rows(s.astype(np.float64) * fmt.resolution
                          + (0.0 if mask is None else mask))
    p = _quant(probs, fmt)
    return _requant(p @ v, fmt.frac_bits, fmt)


def untiled_fx_forward(x: FxTensor, w: EncoderWeights, m: ModelConfig,
                       hw: HardwareConfig, mask: np.ndarray = None) -> FxTensor:
    """Full forward with the same numeric policies as the tiled engines."""
    ensure_valid(m, hw)
    check_shapes(w, m)
    fmt = hw.fx_format
    if x.fmt != fmt:
        raise ValueError("input format %s does not match hardware %s" % (x.fmt, fmt))
    if x.raw.shape != (m.seq_len, m.d_model):
        raise ValueError("input shape %s != (%d, %d)" % (x.raw.shape, m.seq_len, m.d_model))
    use_mask = mask if m.mask_enabled else None
    cur = x.raw.astype(np.int64)
    for lw in w.layers:
        heads = [untiled_head(cur, h, fmt, m.scale_mode, m.d_model, use_mask)
                 for h in lw.heads]
        concat = np.concatenate(heads, axis=1)
        proj = untiled_linear(concat, lw.wo.raw, lw.bo.raw, fmt)
        if m.use_residual:
            proj = _sat_add(proj, cur, fmt)
        x1 = _quant(_layernorm_rows(proj.astype(np.float64) * fmt.resolution,
                                    lw.ln1_gamma.values(), lw.ln1_beta.values()), fmt)
        hidden = untiled_linear(x1, lw.w1.raw, lw.b1.raw, fmt)
        if m.activation == "relu":
            hidden = np.maximum(hidden, 0)
        else:
            hidden = _quant(ref_gelu(hidden.astype(np.float64) * fmt.resolution), fmt)
        f = untiled_linear(hidden, lw.w2.raw, lw.b2.raw, fmt)
        if m.use_residual:
            f = _sat_add(f, x1, fmt)
        cur = _quant(_layernorm_rows(f.astype(np.float64) * fmt.resolution,
                                     lw.ln2_gamma.values(), lw.ln2_beta.values()), fmt)
    return FxTensor(cur, fmt)

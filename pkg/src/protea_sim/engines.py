"""Tiled fixed-point compute engines and the buffer-backed encoder state.

The schedules follow the accelerator's loop structure: QKV weights stream in
column tiles of width ts_mha (partial products accumulate across tiles), the
score and SV products run untiled, and the three FFN engines walk a 2-D tile
grid (contraction tiles accumulate inside each output-column tile).  Softmax
and layer norm evaluate in real arithmetic and requantize at the boundary.

Accumulation order is fixed -- ascending index within a tile, ascending tile
index across tiles -- so raws and traces are reproducible regardless of how
many worker threads evaluate the (data-independent) heads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
import os

import numpy as np

from . import kernels
from .config import (ConfigError, HardwareConfig, ModelConfig,
                     ensure_valid, validate)
from .fixedpoint import FxTensor, bias_to_wide, requant_raws
from .reference import _layernorm_rows, _softmax_rows, ref_gelu
from .weights import EncoderWeights, check_shapes

THREADS_ENV_VAR = "PROTEA_SIM_THREADS"


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV_VAR, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TraceEvent:
    engine: str
    layer: int
    head: int    # -1 for engines not bound to a head
    tile: tuple  # tile indices; () for untiled engines
    trips: tuple  # loop trip counts, outermost first


@dataclass
class ScheduleTrace:
    events: list

    def invocations(self, engine: str, layer=None, head=None) -> int:
        return sum(1 for e in self.events
                   if e.engine == engine
                   and (layer is None or e.layer == layer)
                   and (head is None or e.head == head))

    def weight_tile_loads(self, layer=None, head=None) -> int:
        """QKV weight-tile loads per matrix (one tile of each matrix per
        engine invocation)."""
        return self.invocations("qkv", layer=layer, head=head)


# ---------------------------------------------------------------------------
# Raw-array engine routines (shared by the standalone ops and EngineState)
# ---------------------------------------------------------------------------

def _finish_store(acc, out, bias_raw, fmt, per_tile):
    """Bias addition after the final tile, then the store-point rounding."""
    if per_tile:
        np.clip(out + bias_raw, fmt.min_raw, fmt.max_raw, out=out)
    else:
        acc += bias_to_wide(bias_raw, fmt.frac_bits)
        requant_raws(acc, 2 * fmt.frac_bits, fmt, out=out)


def _qkv_head(x_raw, head_w, fmt, ts, per_tile, bufs, events, layer, head):
    """Algorithmic QKV engine: one tile loop covering all three matrices."""
    sl, d = x_raw.shape
    d_k = head_w.wq.raw.shape[1]
    tiles = d // ts
    x_tile = bufs["x_tile"][:sl, :ts]
    names = ("wq", "wk", "wv")
    w_tiles = [bufs["w_tile_" + n][:d_k, :ts] for n in names]
    accs = [bufs["acc_" + n[1]][:sl, :d_k] for n in names]
    outs = [bufs["out_" + n[1]][:sl, :d_k] for n in names]
    for a in accs:
        a[:] = 0
    if per_tile:
        for o in outs:
            o[:] = 0
    for t in range(tiles):
        cols = slice(t * ts, (t + 1) * ts)
        x_tile[:] = x_raw[:, cols]
        for w_tile, name in zip(w_tiles, names):
            w_tile[:] = getattr(head_w, name).raw[cols, :].T
        if per_tile:
            for w_tile, acc, out in zip(w_tiles, accs, outs):
                acc[:] = 0
                kernels.matmul_abt_accum(x_tile, w_tile, acc)
                tile_q = np.empty_like(acc)
                kernels.requant_shift(acc, fmt.frac_bits, fmt.min_raw, fmt.max_raw, tile_q)
                kernels.sat_add(out, tile_q, fmt.min_raw, fmt.max_raw)
        else:
            for w_tile, acc in zip(w_tiles, accs):
                kernels.matmul_abt_accum(x_tile, w_tile, acc)
        events.append(TraceEvent("qkv", layer, head, (t,), (sl, d_k, ts)))
    for name, acc, out in zip(names, accs, outs):
        _finish_store(acc, out, getattr(head_w, "b" + name[1]).raw, fmt, per_tile)
    return outs


def _qk(q_raw, k_raw, fmt, scale_mode, d_model, bufs, events, layer, head):
    """Score engine, untiled: S = requant(Q K^T / scale)."""
    sl, d_k = q_raw.shape
    acc = bufs["score_acc"][:sl, :sl]
    acc[:] = 0
    kernels.matmul_abt_accum(q_raw, k_raw, acc)
    divisor = d_model if scale_mode == "d_model" else math.sqrt(d_k)
    out = bufs["score"][:sl, :sl]
    requant_raws(acc, 2 * fmt.frac_bits, fmt, divisor=divisor, out=out)
    events.append(TraceEvent("qk", layer, head, (), (sl, sl, d_k)))
    return out


def _softmax_rows_fx(s_raw, fmt, mask, events, layer, head):
    """Boundary-requantized softmax (real-arithmetic interior)."""
    vals = s_raw.astype(np.float64) * fmt.resolution
    if mask is not None:
        vals = vals + mask
    probs = _softmax_rows(vals)
    raw = np.rint(probs * (1 << fmt.frac_bits)).astype(np.int64)
    np.clip(raw, fmt.min_raw, fmt.max_raw, out=raw)
    if events is not None:
        events.append(TraceEvent("softmax", layer, head, (), s_raw.shape))
    return raw


def _sv(s_raw, v_raw, fmt, bufs, events, layer, head):
    """Attention-score engine, untiled: SV = requant(S V)."""
    sl = s_raw.shape[0]
    d_k = v_raw.shape[1]
    acc = bufs["sv_acc"][:sl, :d_k]
    acc[:] = 0
    kernels.matmul_accum(s_raw, v_raw, acc)
    out = bufs["sv_out"][:sl, :d_k]
    requant_raws(acc, 2 * fmt.frac_bits, fmt, out=out)
    events.append(TraceEvent("sv", layer, head, (), (sl, d_k, sl)))
    return out


def _ffn(kind, x_raw, w_raw, b_raw, fmt, ts, per_tile, activation,
         bufs, events, layer):
    """2-D tiled linear engine: contraction tiles accumulate inside each
    output-column tile; bias lands once after the final tile; the activation
    (ffn2 only) follows the bias."""
    sl = x_raw.shape[0]
    kdim, mdim = w_raw.shape
    k_tiles = kdim // ts
    m_tiles = mdim // ts
    x_tile = bufs["ffn_x_tile"][:sl, :ts]
    w_tile = bufs["ffn_w_tile"][:ts, :ts]
    acc = bufs["ffn_acc_" + kind[-1]][:sl, :mdim]
    out = bufs["ffn_out_" + kind[-1]][:sl, :mdim]
    if not per_tile:
        acc[:] = 0
    for c in range(m_tiles):
        col = slice(c * ts, (c + 1) * ts)
        if per_tile:
            out[:, col] = 0
        for r in range(k_tiles):
            x_tile[:] = x_raw[:, r * ts:(r + 1) * ts]
            w_tile[:] = w_raw[r * ts:(r + 1) * ts, col]
            if per_tile:
                part = acc[:, col]
                part[:] = 0
                kernels.matmul_accum(x_tile, w_tile, part)
                tile_q = np.empty_like(part)
                kernels.requant_shift(part, fmt.frac_bits, fmt.min_raw, fmt.max_raw, tile_q)
                kernels.sat_add(out[:, col], tile_q, fmt.min_raw, fmt.max_raw)
            else:
                kernels.matmul_accum(x_tile, w_tile, acc[:, col])
            events.append(TraceEvent(kind, layer, -1, (r, c), (sl, ts, ts)))
    _finish_store(acc, out, b_raw, fmt, per_tile)
    if activation == "relu":
        np.maximum(out, 0, out=out)
    elif activation == "gelu":
        out[:] = np.clip(np.rint(ref_gelu(out.astype(np.float64) * fmt.resolution)
                                 * (1 << fmt.frac_bits)).astype(np.int64),
                         fmt.min_raw, fmt.max_raw)
    return out


def _layernorm_fx_rows(x_raw, gamma, beta, fmt):
    vals = _layernorm_rows(x_raw.astype(np.float64) * fmt.resolution, gamma, beta)
    raw = np.rint(vals * (1 << fmt.frac_bits)).astype(np.int64)
    return np.clip(raw, fmt.min_raw, fmt.max_raw)


# ---------------------------------------------------------------------------
# Standalone engine ops (allocate scratch buffers per call)
# ---------------------------------------------------------------------------

def _qkv_scratch(sl, d_k, ts):
    return {
        "x_tile": np.empty((sl, ts), dtype=np.int64),
        "w_tile_wq": np.empty((d_k, ts), dtype=np.int64),
        "w_tile_wk": np.empty((d_k, ts), dtype=np.int64),
        "w_tile_wv": np.empty((d_k, ts), dtype=np.int64),
        "acc_q": np.empty((sl, d_k), dtype=np.int64),
        "acc_k": np.empty((sl, d_k), dtype=np.int64),
        "acc_v": np.empty((sl, d_k), dtype=np.int64),
        "out_q": np.empty((sl, d_k), dtype=np.int64),
        "out_k": np.empty((sl, d_k), dtype=np.int64),
        "out_v": np.empty((sl, d_k), dtype=np.int64),
    }


def qkv_ce(x: FxTensor, head_w, hw: HardwareConfig):
    """Tiled Q/K/V projection for one head -> (Q, K, V), each (SL, d_k)."""
    fmt = hw.fx_format
    sl, d = x.raw.shape
    d_k = head_w.wq.raw.shape[1]
    for n in ("wq", "wk", "wv"):
        if getattr(head_w, n).raw.shape != (d, d_k):
            raise ValueError("%s shape %s != (%d, %d)"
                             % (n, getattr(head_w, n).raw.shape, d, d_k))
    if d % hw.ts_mha != 0:
        raise ValueError("d_model %d not divisible by ts_mha %d" % (d, hw.ts_mha))
    bufs = _qkv_scratch(sl, d_k, hw.ts_mha)
    outs = _qkv_head(x.raw, head_w, fmt, hw.ts_mha, hw.per_tile_requantize,
                     bufs, [], 0, 0)
    return tuple(FxTensor(o.copy(), fmt) for o in outs)


def qk_ce(q: FxTensor, k: FxTensor, scale_mode: str, hw: HardwareConfig,
          d_model: int = None) -> FxTensor:
    """Untiled score matrix S = requant(Q K^T / scale), (SL, SL)."""
    if q.raw.shape != k.raw.shape:
        raise ValueError("Q shape %s != K shape %s" % (q.raw.shape, k.raw.shape))
    if scale_mode == "d_model" and d_model is None:
        raise ValueError("d_model scaling requires the embedding dimension")
    sl, d_k = q.raw.shape
    bufs = {"score_acc": np.empty((sl, sl), dtype=np.int64),
            "score": np.empty((sl, sl), dtype=np.int64)}
    out = _qk(q.raw, k.raw, hw.fx_format, scale_mode, d_model, bufs, [], 0, 0)
    return FxTensor(out.copy(), hw.fx_format)


def softmax_fx(s: FxTensor, mask: np.ndarray = None) -> FxTensor:
    """Row softmax of a square score matrix, requantized to s's format."""
    if s.raw.ndim != 2 or s.raw.shape[0] != s.raw.shape[1]:
        raise ValueError("softmax_fx expects a square score matrix, got %s"
                         % (s.raw.shape,))
    return FxTensor(_softmax_rows_fx(s.raw, s.fmt, mask, None, 0, 0), s.fmt)


def sv_ce(s: FxTensor, v: FxTensor, hw: HardwareConfig) -> FxTensor:
    """Untiled SV product -> (SL, d_k)."""
    if s.raw.shape[1] != v.raw.shape[0]:
        raise ValueError("S shape %s does not chain with V shape %s"
                         % (s.raw.shape, v.raw.shape))
    sl = s.raw.shape[0]
    d_k = v.raw.shape[1]
    bufs = {"sv_acc": np.empty((sl, d_k), dtype=np.int64),
            "sv_out": np.empty((sl, d_k), dtype=np.int64)}
    out = _sv(s.raw, v.raw, hw.fx_format, bufs, [], 0, 0)
    return FxTensor(out.copy(), hw.fx_format)


FFN_KINDS = ("ffn1", "ffn2", "ffn3")


def ffn_ce(kind: str, x: FxTensor, w: FxTensor, b: FxTensor, hw: HardwareConfig,
           activation: str = None) -> FxTensor:
    """2-D tiled linear engine.  Dims by kind: ffn1 d->d, ffn2 d->4d
    (activation applies), ffn3 4d->d."""
    if kind not in FFN_KINDS:
        raise ValueError("kind must be one of %s" % (FFN_KINDS,))
    kdim, mdim = w.raw.shape
    if x.raw.shape[1] != kdim:
        raise ValueError("input width %d != weight rows %d" % (x.raw.shape[1], kdim))
    expect = {"ffn1": kdim == mdim, "ffn2": mdim == 4 * kdim, "ffn3": kdim == 4 * mdim}
    if not expect[kind]:
        raise ValueError("%s expects %s; got %dx%d"
                         % (kind, {"ffn1": "square", "ffn2": "d->4d", "ffn3": "4d->d"}[kind],
                            kdim, mdim))
    ts = hw.ts_ffn
    if kdim % ts or mdim % ts:
        raise ValueError("weight dims %dx%d not divisible by ts_ffn %d" % (kdim, mdim, ts))
    sl = x.raw.shape[0]
    bufs = {
        "ffn_x_tile": np.empty((sl, ts), dtype=np.int64),
        "ffn_w_tile": np.empty((ts, ts), dtype=np.int64),
        "ffn_acc_" + kind[-1]: np.empty((sl, mdim), dtype=np.int64),
        "ffn_out_" + kind[-1]: np.empty((sl, mdim), dtype=np.int64),
    }
    if activation is None and kind == "ffn2":
        activation = "relu"
    out = _ffn(kind, x.raw, w.raw, b.raw, hw.fx_format, ts, hw.per_tile_requantize,
               activation if kind == "ffn2" else None, bufs, [], 0)
    return FxTensor(out.copy(), hw.fx_format)


def layernorm_fx(row: FxTensor, gamma: FxTensor, beta: FxTensor) -> FxTensor:
    """Boundary-requantized layer norm over the last axis."""
    if row.raw.shape[-1] != gamma.raw.shape[0] or gamma.raw.shape != beta.raw.shape:
        raise ValueError("layernorm operand lengths differ")
    mat = row.raw.reshape(1, -1) if row.raw.ndim == 1 else row.raw
    out = _layernorm_fx_rows(mat, gamma.values(), beta.values(), row.fmt)
    return FxTensor(out.reshape(row.raw.shape), row.fmt)


# ---------------------------------------------------------------------------
# Buffer-backed engine state
# ---------------------------------------------------------------------------

def buffer_inventory(hw: HardwareConfig):
    """On-chip buffer set at max_model capacity: (name, shape, bits_per_elem).

    Per-head structures are head-aggregated so any runtime head count up to
    the maximum fits (fewer heads widen d_k but never exceed the aggregate
    d_model extent).  Cross-tile accumulators carry 4x the data width in
    wide-accumulation mode; with per-tile requantization they collapse into
    the data-width output buffers, so the wide entries drop out.  Bias and
    normalization parameters live in registers, not here.
    """
    mx = hw.max_model
    w = hw.fx_format.width_bits
    wide = 4 * w
    sl, d, h = mx.seq_len, mx.d_model, mx.num_heads
    inv = [
        ("x_tiles", (h, sl, hw.ts_mha), w),
        ("w_tiles_q", (d, hw.ts_mha), w),
        ("w_tiles_k", (d, hw.ts_mha), w),
        ("w_tiles_v", (d, hw.ts_mha), w),
        ("score", (h, sl, sl), w),
        ("attn", (sl, d), w),
        ("x_in", (sl, d), w),
        ("ln1_out", (sl, d), w),
        ("ffn_x_tile", (sl, hw.ts_ffn), w),
        ("ffn_w_tile", (hw.ts_ffn, 4 * hw.ts_ffn), w),
        ("q_out", (sl, d), w),
        ("k_out", (sl, d), w),
        ("v_out", (sl, d), w),
        ("ffn_out_1", (sl, d), w),
        ("ffn_out_2", (sl, 4 * d), w),
        ("ffn_out_3", (sl, d), w),
    ]
    if not hw.per_tile_requantize:
        inv += [
            ("q_acc", (sl, d), wide),
            ("k_acc", (sl, d), wide),
            ("v_acc", (sl, d), wide),
            ("ffn_acc_1", (sl, d), wide),
            ("ffn_acc_2", (sl, 4 * d), wide),
            ("ffn_acc_3", (sl, d), wide),
        ]
    return inv


class EngineState:
    """Preallocated engine buffers plus the active runtime configuration.

    Buffers are sized once from hw.max_model; reconfigure() swaps the active
    model without reallocating, and forward passes only touch views sized by
    the active dimensions (spare capacity sits idle).
    """

    def __init__(self, hw: HardwareConfig, m: ModelConfig = None):
        ensure_valid(hw.max_model, hw)
        self.hw = hw
        self.active = hw.max_model if m is None else m
        ensure_valid(self.active, hw)
        mx = hw.max_model
        sl, d, h = mx.seq_len, mx.d_model, mx.num_heads
        ts, tf = hw.ts_mha, hw.ts_ffn
        alloc = lambda shape: np.zeros(shape, dtype=np.int64)
        self.buffers = {
            "x_tiles": alloc((h, sl, ts)),
            "w_tiles_q": alloc((d, ts)),
            "w_tiles_k": alloc((d, ts)),
            "w_tiles_v": alloc((d, ts)),
            "q_acc": alloc((sl, d)),
            "k_acc": alloc((sl, d)),
            "v_acc": alloc((sl, d)),
            "q_out": alloc((sl, d)),
            "k_out": alloc((sl, d)),
            "v_out": alloc((sl, d)),
            "score_acc": alloc((h, sl, sl)),
            "score": alloc((h, sl, sl)),
            "sv_acc": alloc((sl, d)),
            "attn": alloc((sl, d)),
            "x_in": alloc((sl, d)),
            "ln1_out": alloc((sl, d)),
            "ffn_x_tile": alloc((sl, tf)),
            "ffn_w_tile": alloc((tf, 4 * tf)),
            "ffn_acc_1": alloc((sl, d)),
            "ffn_acc_2": alloc((sl, 4 * d)),
            "ffn_acc_3": alloc((sl, d)),
            "ffn_out_1": alloc((sl, d)),
            "ffn_out_2": alloc((sl, 4 * d)),
            "ffn_out_3": alloc((sl, d)),
        }

    def reconfigure(self, m: ModelConfig) -> "EngineState":
        res = validate(m, self.hw)
        if not res.ok:
            raise ConfigError("reconfigure rejected: " + "; ".join(res.violations))
        self.active = m
        return self

    def _head_views(self, head: int, sl: int, d_k: int, ts: int):
        lo, hi = head * d_k, (head + 1) * d_k
        b = self.buffers
        return {
            "x_tile": b["x_tiles"][head],
            "w_tile_wq": b["w_tiles_q"][lo:hi],
            "w_tile_wk": b["w_tiles_k"][lo:hi],
            "w_tile_wv": b["w_tiles_v"][lo:hi],
            "acc_q": b["q_acc"][:, lo:hi],
            "acc_k": b["k_acc"][:, lo:hi],
            "acc_v": b["v_acc"][:, lo:hi],
            "out_q": b["q_out"][:, lo:hi],
            "out_k": b["k_out"][:, lo:hi],
            "out_v": b["v_out"][:, lo:hi],
            "score_acc": b["score_acc"][head],
            "score": b["score"][head],
            "sv_acc": b["sv_acc"][:, lo:hi],
            "sv_out": b["attn"][:, lo:hi],
        }

    def _run_head(self, layer, head, head_w, m, mask):
        """All four attention engines for one head; touches only this head's
        buffer views, so heads can run on worker threads."""
        hw = self.hw
        fmt = hw.fx_format
        sl, d_k = m.seq_len, m.d_k
        bufs = self._head_views(head, sl, d_k, hw.ts_mha)
        events = []
        x_view = self.buffers["x_in"][:sl, :m.d_model]
        q, k, v = _qkv_head(x_view, head_w, fmt, hw.ts_mha,
                            hw.per_tile_requantize, bufs, events, layer, head)
        s = _qk(q, k, fmt, m.scale_mode, m.d_model, bufs, events, layer, head)
        s[:] = _softmax_rows_fx(s, fmt, mask, events, layer, head)
        _sv(s, v, fmt, bufs, events, layer, head)
        return events

    def forward(self, x: FxTensor, w: EncoderWeights, mask: np.ndarray = None,
                threads: int = None):
        """Full tiled forward pass -> (FxTensor, ScheduleTrace)."""
        m, hw = self.active, self.hw
        fmt = hw.fx_format
        ensure_valid(m, hw)
        check_shapes(w, m)
        if x.fmt != fmt:
            raise ValueError("input format %s does not match hardware %s" % (x.fmt, fmt))
        if x.raw.shape != (m.seq_len, m.d_model):
            raise ValueError("input shape %s != (%d, %d)"
                             % (x.raw.shape, m.seq_len, m.d_model))
        if threads is None:
            threads = _max_workers()
        use_mask = mask if m.mask_enabled else None
        sl, d = m.seq_len, m.d_model
        b = self.buffers
        x_in = b["x_in"][:sl, :d]
        x_in[:] = x.raw
        events = []
        for layer, lw in enumerate(w.layers):
            if threads > 1 and m.num_heads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    futs = [pool.submit(self._run_head, layer, i, lw.heads[i], m, use_mask)
                            for i in range(m.num_heads)]
                    for f in futs:
                        events.extend(f.result())
            else:
                for i in range(m.num_heads):
                    events.extend(self._run_head(layer, i, lw.heads[i], m, use_mask))
            attn = b["attn"][:sl, :d]
            ffn_bufs = {k: b[k] for k in ("ffn_x_tile", "ffn_w_tile",
                                          "ffn_acc_1", "ffn_acc_2", "ffn_acc_3",
                                          "ffn_out_1", "ffn_out_2", "ffn_out_3")}
            proj = _ffn("ffn1", attn, lw.wo.raw, lw.bo.raw, fmt, hw.ts_ffn,
                        hw.per_tile_requantize, None, ffn_bufs, events, layer)
            if m.use_residual:
                kernels.sat_add(proj, x_in, fmt.min_raw, fmt.max_raw)
            x1 = b["ln1_out"][:sl, :d]
            x1[:] = _layernorm_fx_rows(proj, lw.ln1_gamma.values(), lw.ln1_beta.values(), fmt)
            events.append(TraceEvent("ln1", layer, -1, (), (sl, d)))
            hidden = _ffn("ffn2", x1, lw.w1.raw, lw.b1.raw, fmt, hw.ts_ffn,
                          hw.per_tile_requantize, m.activation, ffn_bufs, events, layer)
            f = _ffn("ffn3", hidden, lw.w2.raw, lw.b2.raw, fmt, hw.ts_ffn,
                     hw.per_tile_requantize, None, ffn_bufs, events, layer)
            if m.use_residual:
                kernels.sat_add(f, x1, fmt.min_raw, fmt.max_raw)
            x_in[:] = _layernorm_fx_rows(f, lw.ln2_gamma.values(), lw.ln2_beta.values(), fmt)
            events.append(TraceEvent("ln2", layer, -1, (), (sl, d)))
        return FxTensor(x_in.copy(), fmt), ScheduleTrace(events)


def reconfigure(state: EngineState, m: ModelConfig) -> EngineState:
    """Swap the active runtime configuration; buffers stay put."""
    return state.reconfigure(m)


def encoder_forward_tiled(x: FxTensor, w: EncoderWeights, m: ModelConfig,
                          hw: HardwareConfig, mask: np.ndarray = None,
                          threads: int = None):
    """One-shot tiled forward on a fresh engine -> (FxTensor, ScheduleTrace)."""
    return EngineState(hw, m).forward(x, w, mask=mask, threads=threads)

"""Analytical pipelined-loop latency model.

Every stage is an instance of the pipelined-loop form
``(trip_count - 1) * II + pipeline_depth`` times an outer trip count.  Two
accounting modes are reported side by side:

* ``paper_literal`` -- each attention stage equation counted once,
* ``per_tile``      -- the per-head load/compute stages (LIA, LWA, SA)
  additionally multiplied by the MHA tile count, since every tile reloads
  its operands and recomputes.

The FFN stage equations extend the same loop form using the tile-grid reuse
counts; FFN3 runs a 4x wider unrolled loop, which quarters its invocation
count (a modeling convention, flagged in reports).  Softmax and layer-norm
allowances are separate stages so their share is never hidden.
"""

from dataclasses import dataclass

from .config import HardwareConfig, ModelConfig, derived_dims, ensure_valid

ACCOUNTING_MODES = ("paper_literal", "per_tile")

GOPS_CONVENTION = "1 MAC = 2 ops over qkv/qk/sv/ffn1/ffn2/ffn3"
FFN3_CONVENTION = "ffn3 latency uses a 4x-wide unrolled loop at a quarter of the ffn2 invocation count (model-derived)"


@dataclass(frozen=True)
class StageLatency:
    stage: str
    cycles: int
    per_layer: bool


@dataclass(frozen=True)
class LatencyReport:
    stages: tuple          # per-layer stage set (one layer)
    total_cc: int
    total_ms: float
    gops: float
    total_ops: int
    accounting_mode: str
    clock_mhz: float
    num_layers: int

    def stage_cycles(self, name: str) -> int:
        for s in self.stages:
            if s.stage == name:
                return s.cycles
        raise KeyError(name)


def pll(tc: int, ii: int, pd: int) -> int:
    """Pipelined-loop latency: (TC - 1) * II + PD."""
    if tc < 1 or ii < 1 or pd < 1:
        raise ValueError("pll requires tc, ii, pd >= 1")
    return (tc - 1) * ii + pd


def total_loop_latency(pll_cycles: int, outer_tc: int) -> int:
    """An enclosing loop multiplies the pipelined-loop latency by its trips."""
    if pll_cycles < 1 or outer_tc < 1:
        raise ValueError("total_loop_latency requires positive operands")
    return pll_cycles * outer_tc


def attention_stage_latencies(m: ModelConfig, hw: HardwareConfig,
                              mode: str = "paper_literal"):
    """The eight attention stages LI/LB/LIA/LWA/SA/BA/S/SV for one layer."""
    if mode not in ACCOUNTING_MODES:
        raise ValueError("mode must be one of %s" % (ACCOUNTING_MODES,))
    ensure_valid(m, hw)
    dims = derived_dims(m, hw)
    p = hw.pipeline
    sl, d, d_k = m.seq_len, m.d_model, dims.d_k
    ii = p.ii
    pd_l = p.pd_load
    pd_mha = dims.tiles_mha + p.pd_arith
    tile_factor = dims.tiles_mha if mode == "per_tile" else 1
    stages = [
        StageLatency("LI", total_loop_latency(pll(d, ii, pd_l), sl), True),
        StageLatency("LB", pll(d_k, ii, pd_l), True),
        StageLatency("LIA", total_loop_latency(pll(hw.ts_mha, ii, pd_l), sl) * tile_factor, True),
        StageLatency("LWA", total_loop_latency(pll(d_k, ii, pd_l), sl) * tile_factor, True),
        StageLatency("SA", total_loop_latency(pll(d_k, ii, pd_mha), sl) * tile_factor, True),
        StageLatency("BA", total_loop_latency(pll(d_k, ii, p.pd_ba_cc), sl), True),
        StageLatency("S", total_loop_latency(pll(sl, ii, d_k), sl), True),
        StageLatency("SV", total_loop_latency(pll(d_k, ii, sl), sl), True),
    ]
    return stages


def cycles_to_ms(total_cc: int, clock_mhz: float) -> float:
    """cc * 1e3 / frequency_in_hz."""
    return total_cc * 1e3 / (clock_mhz * 1e6)


def attention_total(stages, clock_mhz: float):
    total_cc = sum(s.cycles for s in stages)
    return total_cc, cycles_to_ms(total_cc, clock_mhz)


def ffn_stage_latencies(m: ModelConfig, hw: HardwareConfig):
    """FFN1/FFN2/FFN3 per layer from the tile-grid reuse counts."""
    ensure_valid(m, hw)
    dims = derived_dims(m, hw)
    p = hw.pipeline
    sl = m.seq_len
    pd = p.pd_ffn_extra_cc
    body = total_loop_latency(pll(hw.ts_ffn, p.ii, pd), sl)
    wide_body = total_loop_latency(pll(4 * hw.ts_ffn, p.ii, pd), sl)
    return [
        StageLatency("FFN1", body * dims.ffn1_reuse, True),
        StageLatency("FFN2", body * dims.ffn23_reuse, True),
        StageLatency("FFN3", wide_body * (dims.ffn23_reuse // 4), True),
    ]


def softmax_stage(m: ModelConfig, hw: HardwareConfig) -> StageLatency:
    """Three-pass row softmax allowance (max/exp-sum/divide passes)."""
    sl, d_k = m.seq_len, m.d_k
    return StageLatency("SOFTMAX",
                        3 * total_loop_latency(pll(sl, hw.pipeline.ii, d_k), sl), True)


def layernorm_stage(m: ModelConfig, hw: HardwareConfig) -> StageLatency:
    """Two normalizations per layer, each a d_model-trip pipelined pass per row."""
    p = hw.pipeline
    return StageLatency("LN",
                        2 * total_loop_latency(pll(m.d_model, p.ii, p.pd_ffn_extra_cc),
                                               m.seq_len), True)


def total_ops(m: ModelConfig) -> int:
    """MACs-as-2-ops over the six engine families, all layers."""
    sl, d = m.seq_len, m.d_model
    per_layer = (6 * sl * d * d      # qkv: 3 matrices x h heads x sl*d*d_k MACs
                 + 2 * sl * sl * d   # qk
                 + 2 * sl * sl * d   # sv
                 + 2 * sl * d * d    # ffn1
                 + 8 * sl * d * d    # ffn2
                 + 8 * sl * d * d)   # ffn3
    return m.num_layers * per_layer


def gops(m: ModelConfig, latency_ms: float) -> float:
    """total_ops / seconds / 1e9."""
    if latency_ms <= 0:
        raise ValueError("latency must be positive")
    return total_ops(m) / (latency_ms * 1e-3) / 1e9


def encoder_latency(m: ModelConfig, hw: HardwareConfig,
                    mode: str = "paper_literal",
                    one_time_stages: tuple = ()) -> LatencyReport:
    """Whole-encoder latency: N * per-layer stage sum (+ any stages pulled
    out as one-time loads).  With the default empty one_time_stages the total
    is exactly linear in the layer count."""
    ensure_valid(m, hw)
    stages = (attention_stage_latencies(m, hw, mode)
              + [softmax_stage(m, hw)]
              + ffn_stage_latencies(m, hw)
              + [layernorm_stage(m, hw)])
    unknown = set(one_time_stages) - {s.stage for s in stages}
    if unknown:
        raise ValueError("unknown one-time stages: %s" % sorted(unknown))
    stages = [StageLatency(s.stage, s.cycles, s.stage not in one_time_stages)
              for s in stages]
    per_layer_cc = sum(s.cycles for s in stages if s.per_layer)
    once_cc = sum(s.cycles for s in stages if not s.per_layer)
    total_cc = m.num_layers * per_layer_cc + once_cc
    total_ms = cycles_to_ms(total_cc, hw.clock_mhz)
    return LatencyReport(
        stages=tuple(stages),
        total_cc=total_cc,
        total_ms=total_ms,
        gops=gops(m, total_ms),
        total_ops=total_ops(m),
        accounting_mode=mode,
        clock_mhz=hw.clock_mhz,
        num_layers=m.num_layers,
    )

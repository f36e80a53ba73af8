"""PE/DSP counts from the engine unroll factors plus a coarse BRAM estimate.

One PE is one DSP48 (one MAC per cycle).  The estimator reproduces the
design's unroll arithmetic, not a synthesizer: for the reference U55C build
it lands ~20% above the synthesized DSP count, and reports carry both
numbers side by side rather than hiding the gap.
"""

from dataclasses import dataclass, replace
import math

from .config import DeviceProfile, HardwareConfig, ModelConfig, ensure_valid
from .engines import buffer_inventory

HALF_BLOCK_BITS = 18432  # BRAM36 splits into two independent 18Kb halves


@dataclass(frozen=True)
class SynthesisBaseline:
    """Vivado synthesis result for a known (max_model, tile) build."""

    dsp: int
    dsp_utilization: float
    lut: int
    lut_utilization: float


# Synthesized U55C reference build: d=768 / 8 heads / SL=64, ts 64/128.
SYNTH_BASELINES = {
    (768, 8, 64, 64, 128): SynthesisBaseline(dsp=3612, dsp_utilization=0.40,
                                             lut=993107, lut_utilization=0.76),
}


def synthesis_baseline(m: ModelConfig, hw: HardwareConfig):
    key = (hw.max_model.d_model, hw.max_model.num_heads, hw.max_model.seq_len,
           hw.ts_mha, hw.ts_ffn)
    return SYNTH_BASELINES.get(key)


@dataclass(frozen=True)
class ResourceReport:
    pe_per_engine: dict
    dsp_estimate: int
    dsp_overhead: int          # d_model term for projection/normalization arithmetic
    bram36_estimate: float
    dsp_utilization: float
    bram_utilization: float
    feasible: bool
    device: DeviceProfile
    baseline: SynthesisBaseline = None


def pe_counts(m: ModelConfig, hw: HardwareConfig) -> dict:
    """Per-head counts for the attention engines, totals for the FFN engines."""
    ensure_valid(m, hw)
    return {
        "qkv": 3 * hw.ts_mha,
        "qk": m.d_k,
        "sv": m.seq_len,
        "ffn1": hw.ts_ffn,
        "ffn2": hw.ts_ffn,
        "ffn3": 4 * hw.ts_ffn,
    }


def dsp_overhead(m: ModelConfig) -> int:
    """Arithmetic outside the itemized engines (projection/normalization)."""
    return m.d_model


def dsp_estimate(m: ModelConfig, hw: HardwareConfig) -> int:
    """3*h*ts_mha + h*(d_k + SL) + 6*ts_ffn + d_model."""
    pe = pe_counts(m, hw)
    return (m.num_heads * (pe["qkv"] + pe["qk"] + pe["sv"])
            + pe["ffn1"] + pe["ffn2"] + pe["ffn3"]
            + dsp_overhead(m))


def bram_blocks(bits: int) -> float:
    """BRAM36 blocks for one buffer, half-block granularity, minimum 0.5."""
    if bits <= 0:
        return 0.0
    return max(0.5, math.ceil(bits / HALF_BLOCK_BITS) * 0.5)


def bram_estimate(m: ModelConfig, hw: HardwareConfig) -> float:
    """Sum of per-buffer block counts over the engine buffer inventory at
    max_model capacity."""
    ensure_valid(m, hw)
    total = 0.0
    for _name, shape, bits_per_elem in buffer_inventory(hw):
        n = 1
        for extent in shape:
            n *= extent
        total += bram_blocks(n * bits_per_elem)
    return total


def budget_check(report: ResourceReport, dev: DeviceProfile) -> bool:
    """Feasible iff the DSP and BRAM estimates fit the device budgets (LUTs
    are report context only; no usable LUT formula exists)."""
    return (report.dsp_estimate <= dev.dsp_total
            and report.bram36_estimate <= dev.bram36_total)


def resource_report(m: ModelConfig, hw: HardwareConfig, dev: DeviceProfile) -> ResourceReport:
    dsp = dsp_estimate(m, hw)
    bram = bram_estimate(m, hw)
    partial = ResourceReport(
        pe_per_engine=pe_counts(m, hw),
        dsp_estimate=dsp,
        dsp_overhead=dsp_overhead(m),
        bram36_estimate=bram,
        dsp_utilization=dsp / dev.dsp_total,
        bram_utilization=bram / dev.bram36_total,
        feasible=False,
        device=dev,
        baseline=synthesis_baseline(m, hw),
    )
    return replace(partial, feasible=budget_check(partial, dev))

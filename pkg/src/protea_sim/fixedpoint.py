"""Q-format scalar/tensor arithmetic: quantize, MAC, requantize.

Raws are genuine integers (int64 storage regardless of the modeled width);
rounding is round-half-even and out-of-range values saturate instead of
wrapping.  Accumulators are exact: 4x the operand width is enough for every
inner product reachable under the configured maxima, so MAC never rounds.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import kernels
from .config import FixedFormat


@dataclass(frozen=True)
class FxValue:
    raw: int
    fmt: FixedFormat

    @property
    def value(self) -> float:
        return self.raw * self.fmt.resolution


@dataclass(frozen=True)
class WideAcc:
    """Exact wide accumulator at scale 2**(-2*frac_bits)."""

    raw: int
    frac_bits: int  # operand fraction bits; accumulator scale is doubled

    @property
    def value(self) -> float:
        return self.raw * 2.0 ** (-2 * self.frac_bits)


@dataclass(frozen=True)
class FxTensor:
    """Row-major quantized tensor; raw is an int64 ndarray, treated immutable."""

    raw: np.ndarray
    fmt: FixedFormat

    @property
    def dims(self) -> tuple:
        return self.raw.shape

    def values(self) -> np.ndarray:
        return self.raw.astype(np.float64) * self.fmt.resolution

    def item(self, *idx) -> FxValue:
        return FxValue(int(self.raw[idx]), self.fmt)


def quantize(x: float, fmt: FixedFormat) -> FxValue:
    """Round-half-even to the format's grid, saturating at the range ends."""
    if not math.isfinite(x):
        raise ValueError("cannot quantize non-finite value %r" % x)
    raw = round(x * (1 << fmt.frac_bits))
    raw = min(max(raw, fmt.min_raw), fmt.max_raw)
    return FxValue(raw, fmt)


def dequantize(v: FxValue) -> float:
    return v.raw * v.fmt.resolution


def mac(acc: WideAcc, a: FxValue, b: FxValue) -> WideAcc:
    """acc + a*b, exact; operands must share a format."""
    if a.fmt != b.fmt:
        raise ValueError("MAC operands must share a format (%s vs %s)" % (a.fmt, b.fmt))
    if acc.frac_bits != a.fmt.frac_bits:
        raise ValueError("accumulator scale does not match operand format")
    raw = acc.raw + a.raw * b.raw
    assert abs(raw) < 1 << (4 * a.fmt.width_bits - 1), "accumulator width exceeded"
    return WideAcc(raw, acc.frac_bits)


def _round_half_even_div(num: int, den: int) -> int:
    """round_half_even(num / den) for den > 0, exact integer arithmetic."""
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den or (twice == den and q % 2 == 1):
        q += 1
    return q


def requantize(acc: WideAcc, fmt: FixedFormat) -> FxValue:
    """Wide accumulator -> FxValue: one half-even rounding, then saturation."""
    shift = 2 * acc.frac_bits - fmt.frac_bits
    if shift >= 0:
        raw = _round_half_even_div(acc.raw, 1 << shift)
    else:
        raw = acc.raw << -shift
    raw = min(max(raw, fmt.min_raw), fmt.max_raw)
    return FxValue(raw, fmt)


def quantize_tensor(xs, fmt: FixedFormat) -> FxTensor:
    """Element-wise quantize; np.rint applies the same half-even rounding."""
    arr = np.asarray(xs, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot quantize non-finite entries")
    raw = np.rint(arr * (1 << fmt.frac_bits)).astype(np.int64)
    np.clip(raw, fmt.min_raw, fmt.max_raw, out=raw)
    return FxTensor(raw, fmt)


def fx_zeros(shape, fmt: FixedFormat) -> FxTensor:
    return FxTensor(np.zeros(shape, dtype=np.int64), fmt)


# --- array-level requantization helpers (shared by engines and oracle) ------

def requant_raws(acc: np.ndarray, acc_scale_bits: int, fmt: FixedFormat,
                 divisor=None, out=None) -> np.ndarray:
    """Requantize an int64 accumulator array at scale 2**(-acc_scale_bits).

    divisor: optional extra denominator applied before rounding; integer
    divisors round exactly, float divisors (score scaling by sqrt(d_k)) go
    through float64 with deterministic IEEE rounding.
    """
    if out is None:
        out = np.empty_like(acc)
    shift = acc_scale_bits - fmt.frac_bits
    if divisor is None:
        acc2 = acc.reshape(1, -1) if acc.ndim == 1 else acc
        out2 = out.reshape(1, -1) if out.ndim == 1 else out
        kernels.requant_shift(acc2, shift, fmt.min_raw, fmt.max_raw, out2)
        return out
    if isinstance(divisor, int):
        den = np.int64(divisor) << shift
        q = acc // den
        r = acc - q * den
        q = q + ((2 * r > den) | ((2 * r == den) & ((q & 1) == 1)))
    else:
        q = np.rint(acc.astype(np.float64) / (float(divisor) * 2.0 ** shift)).astype(np.int64)
    np.clip(q, fmt.min_raw, fmt.max_raw, out=out)
    return out


def bias_to_wide(bias_raw: np.ndarray, frac_bits: int) -> np.ndarray:
    """Lift format-scale bias raws to the doubled accumulator scale."""
    return bias_raw.astype(np.int64) << frac_bits

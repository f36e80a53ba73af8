"""Tile-size design-space exploration: exhaustive sweep + feasible-best pick.

Candidates are tile *counts* (d_model / tile_size).  Under a uniform clock
the latency model always prefers fewer, larger tiles; the sweep only
reproduces a mid-size optimum when the frequency table penalizes large tiles
the way post-route clocks do, so the table is a first-class input.
"""

from dataclasses import dataclass, replace
import json

from .config import ConfigError, DeviceProfile, HardwareConfig, ModelConfig, validate
from .latency import ACCOUNTING_MODES, LatencyReport, encoder_latency
from .resources import ResourceReport, resource_report

OBJECTIVES = ("min_latency", "min_latency_then_min_dsp")


@dataclass(frozen=True)
class SweepSpec:
    tiles_mha_candidates: tuple
    tiles_ffn_candidates: tuple
    frequency_table: dict = None   # (tiles_mha, tiles_ffn) -> MHz; None = hw clock
    objective: str = "min_latency"
    accounting_mode: str = "per_tile"
    max_ts: int = None             # optional compile-time cap on either tile size


@dataclass(frozen=True)
class DsePoint:
    tiles_mha: int
    tiles_ffn: int
    ts_mha: int
    ts_ffn: int
    clock_mhz: float
    latency: LatencyReport = None
    resources: ResourceReport = None
    feasible: bool = False
    error: str = None

    @property
    def objective_value(self):
        if not self.feasible:
            return None
        return (self.latency.total_ms, self.resources.dsp_estimate)


@dataclass(frozen=True)
class SweepResult:
    points: tuple
    best: DsePoint = None

    @property
    def feasible(self) -> bool:
        return self.best is not None


def _check_spec(spec: SweepSpec) -> None:
    if not spec.tiles_mha_candidates or not spec.tiles_ffn_candidates:
        raise ConfigError("sweep candidate lists must be non-empty")
    if spec.objective not in OBJECTIVES:
        raise ConfigError("objective must be one of %s" % (OBJECTIVES,))
    if spec.accounting_mode not in ACCOUNTING_MODES:
        raise ConfigError("accounting_mode must be one of %s" % (ACCOUNTING_MODES,))
    if spec.frequency_table is not None:
        missing = [c for c in _candidates(spec) if c not in spec.frequency_table]
        if missing:
            raise ConfigError("frequency table missing candidates: %s" % missing)


def _candidates(spec: SweepSpec):
    return [(tm, tf) for tm in spec.tiles_mha_candidates
            for tf in spec.tiles_ffn_candidates]


def sweep(m: ModelConfig, hw_template: HardwareConfig, spec: SweepSpec,
          dev: DeviceProfile) -> SweepResult:
    """One DsePoint per candidate pair, lexicographic candidate order.
    Non-dividing candidates become per-point errors, never abort the sweep."""
    _check_spec(spec)
    points = []
    for tm, tf in _candidates(spec):
        clock = (spec.frequency_table[(tm, tf)] if spec.frequency_table is not None
                 else hw_template.clock_mhz)
        if m.d_model % tm or m.d_model % tf:
            points.append(DsePoint(tm, tf, 0, 0, clock,
                                   error="tile count does not divide d_model %d" % m.d_model))
            continue
        ts_mha, ts_ffn = m.d_model // tm, m.d_model // tf
        if spec.max_ts is not None and max(ts_mha, ts_ffn) > spec.max_ts:
            points.append(DsePoint(tm, tf, ts_mha, ts_ffn, clock,
                                   error="tile size exceeds max_ts %d" % spec.max_ts))
            continue
        hw = replace(hw_template, ts_mha=ts_mha, ts_ffn=ts_ffn, clock_mhz=clock)
        res = validate(m, hw)
        if not res.ok:
            points.append(DsePoint(tm, tf, ts_mha, ts_ffn, clock,
                                   error="; ".join(res.violations)))
            continue
        lat = encoder_latency(m, hw, spec.accounting_mode)
        rep = resource_report(m, hw, dev)
        points.append(DsePoint(tm, tf, ts_mha, ts_ffn, clock,
                               latency=lat, resources=rep, feasible=rep.feasible))
    best = select_best(points, spec.objective)
    return SweepResult(points=tuple(points), best=best)


def select_best(points, objective: str = "min_latency"):
    """Minimal objective among feasible points; ties break toward the smaller
    DSP estimate, then the lexicographically first candidate.  Returns None
    for an infeasible sweep."""
    if objective not in OBJECTIVES:
        raise ValueError("objective must be one of %s" % (OBJECTIVES,))
    feasible = [p for p in points if p.feasible]
    if not feasible:
        return None
    return min(feasible, key=lambda p: (p.latency.total_ms, p.resources.dsp_estimate,
                                        p.tiles_mha, p.tiles_ffn))


def parse_sweep_spec(text: str) -> SweepSpec:
    """JSON sweep document: tiles_mha_candidates, tiles_ffn_candidates,
    optional frequency_table {"tm,tf": mhz}, objective, accounting_mode, max_ts."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("syntax error at line %d column %d: %s"
                          % (e.lineno, e.colno, e.msg)) from e
    if not isinstance(doc, dict):
        raise ConfigError("sweep document must be a JSON object")
    allowed = {"tiles_mha_candidates", "tiles_ffn_candidates", "frequency_table",
               "objective", "accounting_mode", "max_ts"}
    for k in doc:
        if k not in allowed:
            raise ConfigError("unknown key %r in sweep document" % k)
    for k in ("tiles_mha_candidates", "tiles_ffn_candidates"):
        if k not in doc:
            raise ConfigError("missing required key %s in sweep document" % k)
        if not isinstance(doc[k], list) or not all(isinstance(v, int) for v in doc[k]):
            raise ConfigError("%s must be a list of integers" % k)
    table = None
    if doc.get("frequency_table") is not None:
        if not isinstance(doc["frequency_table"], dict):
            raise ConfigError("frequency_table must be a JSON object")
        table = {}
        for key, mhz in doc["frequency_table"].items():
            parts = key.split(",")
            try:
                cand = (int(parts[0]), int(parts[1])) if len(parts) == 2 else None
            except ValueError:
                cand = None
            if cand is None:
                raise ConfigError("frequency_table keys must be 'tiles_mha,tiles_ffn'"
                                  " (got %r)" % key)
            if isinstance(mhz, bool) or not isinstance(mhz, (int, float)) or mhz <= 0:
                raise ConfigError("frequency_table values must be positive MHz"
                                  " numbers (got %r for %r)" % (mhz, key))
            table[cand] = float(mhz)
    max_ts = doc.get("max_ts")
    if max_ts is not None and (isinstance(max_ts, bool) or not isinstance(max_ts, int)
                               or max_ts < 1):
        raise ConfigError("max_ts must be a positive integer (got %r)" % max_ts)
    spec = SweepSpec(
        tiles_mha_candidates=tuple(doc["tiles_mha_candidates"]),
        tiles_ffn_candidates=tuple(doc["tiles_ffn_candidates"]),
        frequency_table=table,
        objective=doc.get("objective", "min_latency"),
        accounting_mode=doc.get("accounting_mode", "per_tile"),
        max_ts=max_ts,
    )
    _check_spec(spec)
    return spec

"""Report assembly and rendering: deterministic JSON plus aligned text tables.

Identical command + config + seed must produce byte-identical JSON, so
reports carry no timestamps or host details, and serialization fixes the key
order.  Every latency section names its accounting mode and op-count
convention inline.
"""

from dataclasses import asdict
import json

from .config import DeviceProfile, HardwareConfig, ModelConfig, config_dict
from .latency import FFN3_CONVENTION, GOPS_CONVENTION, LatencyReport
from .resources import ResourceReport

TOOL_VERSION = "0.1.0"


def latency_dict(rep: LatencyReport) -> dict:
    return {
        "accounting_mode": rep.accounting_mode,
        "clock_mhz": rep.clock_mhz,
        "num_layers": rep.num_layers,
        "stages_per_layer": [
            {"stage": s.stage, "cycles": s.cycles, "per_layer": s.per_layer}
            for s in rep.stages
        ],
        "total_cc": rep.total_cc,
        "total_ms": rep.total_ms,
        "total_ops": rep.total_ops,
        "gops": rep.gops,
        "conventions": [GOPS_CONVENTION, FFN3_CONVENTION],
    }


def resource_dict(rep: ResourceReport) -> dict:
    out = {
        "pe_per_engine": dict(rep.pe_per_engine),
        "dsp_estimate": rep.dsp_estimate,
        "dsp_overhead_term": rep.dsp_overhead,
        "bram36_estimate": rep.bram36_estimate,
        "dsp_utilization": rep.dsp_utilization,
        "bram_utilization": rep.bram_utilization,
        "feasible": rep.feasible,
        "device": asdict(rep.device),
        "synthesized_baseline": None,
        "note": "dsp_estimate models the unroll formulas, not a synthesizer",
    }
    if rep.baseline is not None:
        out["synthesized_baseline"] = {
            "dsp": rep.baseline.dsp,
            "dsp_utilization": rep.baseline.dsp_utilization,
            "lut": rep.baseline.lut,
            "lut_utilization": rep.baseline.lut_utilization,
            "estimate_over_baseline": rep.dsp_estimate / rep.baseline.dsp - 1.0,
        }
    return out


def base_report(command: str, m: ModelConfig, hw: HardwareConfig,
                dev: DeviceProfile, **extra) -> dict:
    rep = {
        "command": command,
        "tool_version": TOOL_VERSION,
        "config": config_dict(m, hw, dev),
    }
    rep.update(extra)
    return rep


def dump_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _render_rows(header, rows) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    def fmt(row):
        return "  ".join(str(v).rjust(w) for v, w in zip(row, widths))
    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def summary_table(m: ModelConfig, hw: HardwareConfig, reports) -> str:
    """Result table: one row per accounting mode, columns as in the
    accelerator's published results layout."""
    header = ["seq_len", "d_model", "heads", "layers", "format",
              "accounting", "latency_ms", "gops"]
    rows = [[m.seq_len, m.d_model, m.num_heads, m.num_layers,
             str(hw.fx_format), rep.accounting_mode,
             "%.3f" % rep.total_ms, "%.2f" % rep.gops]
            for rep in reports]
    return _render_rows(header, rows)


def dse_point_dict(p) -> dict:
    out = {
        "tiles_mha": p.tiles_mha,
        "tiles_ffn": p.tiles_ffn,
        "ts_mha": p.ts_mha,
        "ts_ffn": p.ts_ffn,
        "clock_mhz": p.clock_mhz,
        "feasible": p.feasible,
        "error": p.error,
        "total_ms": None,
        "total_cc": None,
        "gops": None,
        "dsp_estimate": None,
        "bram36_estimate": None,
    }
    if p.latency is not None:
        out["total_ms"] = p.latency.total_ms
        out["total_cc"] = p.latency.total_cc
        out["gops"] = p.latency.gops
    if p.resources is not None:
        out["dsp_estimate"] = p.resources.dsp_estimate
        out["bram36_estimate"] = p.resources.bram36_estimate
    return out


def dse_table(result) -> str:
    header = ["tiles_mha", "tiles_ffn", "ts_mha", "ts_ffn", "clock_mhz",
              "latency_ms", "dsp", "bram36", "feasible", "note"]
    rows = []
    for p in result.points:
        note = p.error or ""
        if result.best is not None and (p.tiles_mha, p.tiles_ffn) == \
                (result.best.tiles_mha, result.best.tiles_ffn):
            note = "selected"
        rows.append([
            p.tiles_mha, p.tiles_ffn, p.ts_mha or "-", p.ts_ffn or "-",
            "%g" % p.clock_mhz,
            "%.3f" % p.latency.total_ms if p.latency else "-",
            p.resources.dsp_estimate if p.resources else "-",
            "%.1f" % p.resources.bram36_estimate if p.resources else "-",
            "yes" if p.feasible else "no",
            note,
        ])
    return _render_rows(header, rows)


def verify_table(checks) -> str:
    header = ["check", "status", "details"]
    rows = [[c["name"], "PASS" if c["ok"] else "FAIL", c["details"]] for c in checks]
    return _render_rows(header, rows)

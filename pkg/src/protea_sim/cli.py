"""Command-line entry point: simulate / verify / estimate / dse.

Exit codes: 0 success, 2 configuration error, 3 invariant violation,
4 infeasible design-space sweep.  PROTEA_SIM_THREADS caps the per-head
worker count; results are bit-identical at any setting.
"""

import argparse
import sys

import numpy as np

from .config import ConfigError, derived_dims, parse_config, validate
from .dse import parse_sweep_spec, sweep
from .engines import encoder_forward_tiled, qkv_ce, softmax_fx
from .fixedpoint import quantize_tensor
from .latency import encoder_latency
from .reference import ref_encoder_forward
from .reports import (base_report, dse_point_dict, dse_table, dump_json,
                      latency_dict, resource_dict, summary_table, verify_table)
from .resources import resource_report
from .tensorio import (FormatError, read_tensor, read_weights, tensor_digest,
                       write_tensor, write_weights)
from .untiled import untiled_fx_forward, untiled_linear
from .weights import (MixStream, generate_input, generate_weights,
                      weights_from_tensor_map, weights_to_tensor_map)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_INFEASIBLE = 4


def _load_config(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("cannot read config %s: %s" % (path, e)) from e
    m, hw, dev = parse_config(text)
    res = validate(m, hw)
    if not res.ok:
        raise ConfigError("; ".join(res.violations))
    return m, hw, dev


def _emit(report: dict, table: str, report_path):
    sys.stdout.write(table)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(dump_json(report))


def _resolve_weights(args, m, hw):
    if args.weights:
        tensors = read_weights(args.weights)
        for name, t in tensors.items():
            if t.fmt != hw.fx_format:
                raise ConfigError("weight tensor %r format %s does not match "
                                  "hardware %s" % (name, t.fmt, hw.fx_format))
        try:
            weights = weights_from_tensor_map(m, tensors)
        except (KeyError, ValueError) as e:
            raise ConfigError("weight container does not fit the model: %s" % e) from e
        return weights, {"weights_file": args.weights}
    seed = args.weights_seed if args.weights_seed is not None else args.seed
    if seed is None:
        raise ConfigError("provide --weights or a seed")
    return generate_weights(seed, m, hw.fx_format), {"weights_seed": seed}


def _resolve_input(args, m, hw):
    if args.input:
        t = read_tensor(args.input)
        if t.fmt != hw.fx_format:
            raise ConfigError("input tensor format %s does not match hardware %s"
                              % (t.fmt, hw.fx_format))
        if t.raw.shape != (m.seq_len, m.d_model):
            raise ConfigError("input tensor shape %s != (%d, %d)"
                              % (t.raw.shape, m.seq_len, m.d_model))
        return t, {"input_file": args.input}
    seed = args.input_seed if args.input_seed is not None else (
        args.seed + 1 if args.seed is not None else None)
    if seed is None:
        raise ConfigError("provide --input or a seed")
    return generate_input(seed, m, hw.fx_format), {"input_seed": seed}


def cmd_simulate(args) -> int:
    m, hw, dev = _load_config(args.config)
    w, w_src = _resolve_weights(args, m, hw)
    x, x_src = _resolve_input(args, m, hw)
    out, trace = encoder_forward_tiled(x, w, m, hw)
    write_tensor(args.out, out)

    ref = ref_encoder_forward(x.values(), w.dequantized(), m)
    err = np.abs(out.values() - ref)
    lat = {mode: encoder_latency(m, hw, mode) for mode in ("paper_literal", "per_tile")}
    res = resource_report(m, hw, dev)
    dims = derived_dims(m, hw)
    schedule = {
        "qkv_tile_loads_per_head_per_matrix": trace.weight_tile_loads(layer=0, head=0),
        "ffn1_invocations_per_layer": trace.invocations("ffn1", layer=0),
        "ffn2_invocations_per_layer": trace.invocations("ffn2", layer=0),
        "ffn3_invocations_per_layer": trace.invocations("ffn3", layer=0),
        "tiles_mha": dims.tiles_mha,
        "tiles_ffn": dims.tiles_ffn,
    }
    report = base_report(
        "simulate", m, hw, dev,
        seeds={**w_src, **x_src},
        output={
            "path": args.out,
            "digest_sha256": tensor_digest(out),
            "shape": list(out.raw.shape),
            "format": str(out.fmt),
        },
        error_vs_reference={
            "max_abs": float(err.max()),
            "mean_abs": float(err.mean()),
        },
        latency={mode: latency_dict(rep) for mode, rep in lat.items()},
        resources=resource_dict(res),
        schedule=schedule,
    )
    _emit(report, summary_table(m, hw, list(lat.values())), args.report)
    return EXIT_OK


def _verify_checks(m, hw, seed):
    """The invariant battery behind `verify`."""
    fmt = hw.fx_format
    w = generate_weights(seed, m, fmt)
    x = generate_input(seed + 1, m, fmt)
    checks = []

    tiled, _trace = encoder_forward_tiled(x, w, m, hw)
    oracle = untiled_fx_forward(x, w, m, hw)
    if hw.per_tile_requantize:
        # The layer-0 projections see identical inputs on both routes, so the
        # per-tile rounding bound applies stage by stage there.
        bound = derived_dims(m, hw).tiles_mha * fmt.resolution / 2.0
        worst, where = 0.0, None
        for head_idx, head_w in enumerate(w.layers[0].heads):
            q, k, v = qkv_ce(x, head_w, hw)
            for name, got in (("q", q), ("k", k), ("v", v)):
                want = untiled_linear(x.raw, getattr(head_w, "w" + name).raw,
                                      getattr(head_w, "b" + name).raw, fmt)
                e = float(np.abs(got.values() - want * fmt.resolution).max())
                if e > worst:
                    worst, where = e, (0, head_idx, name)
        checks.append({
            "name": "qkv_per_tile_error_bound",
            "ok": worst <= bound,
            "details": "max |tiled-untiled| = %.6g vs bound %g at (layer, head, mat)=%s"
                       % (worst, bound, where),
        })
        err = float(np.abs(tiled.values() - oracle.values()).max())
        checks.append({
            "name": "tiled_vs_untiled_forward",
            "ok": True,
            "details": "per-tile mode: max |diff| = %.6g (informational)" % err,
        })
    else:
        exact = np.array_equal(tiled.raw, oracle.raw)
        details = "exact"
        if not exact:
            idx = tuple(int(i) for i in np.argwhere(tiled.raw != oracle.raw)[0])
            details = "first mismatch at %s: %d != %d" % (
                idx, int(tiled.raw[idx]), int(oracle.raw[idx]))
        checks.append({"name": "tiled_vs_untiled_forward",
                       "ok": exact,
                       "details": "tiled==untiled: " + details})

    ref = ref_encoder_forward(x.values(), w.dequantized(), m)
    max_err = float(np.abs(tiled.values() - ref).max())
    checks.append({"name": "max_abs_error_vs_reference", "ok": True,
                   "details": "%.6g (informational)" % max_err})

    stream = MixStream(seed + 2)
    scores = quantize_tensor(stream.fill((m.seq_len, m.seq_len)) * 4.0, fmt)
    probs = softmax_fx(scores)
    resid = float(np.abs(probs.values().sum(axis=1) - 1.0).max())
    bound = m.seq_len * fmt.resolution
    checks.append({"name": "softmax_row_sums",
                   "ok": resid <= bound,
                   "details": "max |row_sum - 1| = %.6g vs bound %g" % (resid, bound)})
    return checks


def cmd_verify(args) -> int:
    m, hw, dev = _load_config(args.config)
    checks = _verify_checks(m, hw, args.seed)
    ok = all(c["ok"] for c in checks)
    report = base_report("verify", m, hw, dev, seed=args.seed, checks=checks,
                         ok=ok)
    _emit(report, verify_table(checks), args.report)
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_estimate(args) -> int:
    m, hw, dev = _load_config(args.config)
    lat = {mode: encoder_latency(m, hw, mode) for mode in ("paper_literal", "per_tile")}
    res = resource_report(m, hw, dev)
    report = base_report(
        "estimate", m, hw, dev,
        latency={mode: latency_dict(rep) for mode, rep in lat.items()},
        resources=resource_dict(res),
    )
    table = summary_table(m, hw, list(lat.values()))
    table += "dsp_estimate=%d (%.1f%% of %s)" % (
        res.dsp_estimate, 100 * res.dsp_utilization, res.device.name)
    if res.baseline is not None:
        table += "; synthesized baseline %d (%.0f%%), estimate %+.1f%% vs baseline" % (
            res.baseline.dsp, 100 * res.baseline.dsp_utilization,
            100 * (res.dsp_estimate / res.baseline.dsp - 1.0))
    table += "\n"
    _emit(report, table, args.report)
    return EXIT_OK


def cmd_dse(args) -> int:
    m, hw, dev = _load_config(args.config)
    try:
        with open(args.sweep, "r", encoding="utf-8") as f:
            spec = parse_sweep_spec(f.read())
    except OSError as e:
        raise ConfigError("cannot read sweep spec %s: %s" % (args.sweep, e)) from e
    result = sweep(m, hw, spec, dev)
    report = base_report(
        "dse", m, hw, dev,
        sweep=[dse_point_dict(p) for p in result.points],
        selection=dse_point_dict(result.best) if result.best else None,
        feasible=result.feasible,
        objective=spec.objective,
        accounting_mode=spec.accounting_mode,
    )
    _emit(report, dse_table(result), args.report)
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protea-sim",
        description="Fixed-point functional simulator and analytical "
                    "latency/resource model for a tiled transformer-encoder "
                    "accelerator.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the tiled fixed-point forward pass")
    sim.add_argument("--config", required=True)
    sim.add_argument("--weights", help="weight container file (default: from seed)")
    sim.add_argument("--weights-seed", type=int)
    sim.add_argument("--input", help="input tensor file (default: from seed)")
    sim.add_argument("--input-seed", type=int)
    sim.add_argument("--seed", type=int,
                     help="shorthand: weights from SEED, input from SEED+1")
    sim.add_argument("--out", required=True, help="output tensor path")
    sim.add_argument("--report", help="write the JSON report here")
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="run the engine invariant battery")
    ver.add_argument("--config", required=True)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--report")
    ver.set_defaults(func=cmd_verify)

    est = sub.add_parser("estimate", help="latency and resource models only")
    est.add_argument("--config", required=True)
    est.add_argument("--report")
    est.set_defaults(func=cmd_estimate)

    d = sub.add_parser("dse", help="tile-size design-space sweep")
    d.add_argument("--config", required=True)
    d.add_argument("--sweep", required=True, help="sweep spec JSON")
    d.add_argument("--report")
    d.set_defaults(func=cmd_dse)

    gen = sub.add_parser("gen-weights", help="write a seeded weight container")
    gen.add_argument("--config", required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_weights)
    return parser


def cmd_gen_weights(args) -> int:
    m, hw, _dev = _load_config(args.config)
    w = generate_weights(args.seed, m, hw.fx_format)
    write_weights(args.out, weights_to_tensor_map(w))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError) as e:
        sys.stderr.write("error: %s\n" % e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

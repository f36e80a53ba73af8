"""Model/hardware configuration: parsing, validation, derived dimensions.

The accelerator is synthesized once for a maximum model (``max_model``) and
then reprogrammed at runtime; every runtime ``ModelConfig`` is checked
field-wise against those maxima instead of being silently truncated.
"""

from dataclasses import dataclass, field, asdict
import json

ACTIVATIONS = ("relu", "gelu")
SCALE_MODES = ("sqrt_dk", "d_model")


class ConfigError(ValueError):
    """Malformed or unusable configuration document."""


@dataclass(frozen=True)
class FixedFormat:
    """Signed two's-complement Q-format: width_bits total, frac_bits fractional."""

    width_bits: int
    frac_bits: int

    @property
    def min_raw(self) -> int:
        return -(1 << (self.width_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.width_bits - 1)) - 1

    @property
    def resolution(self) -> float:
        return 2.0 ** (-self.frac_bits)

    @property
    def min_value(self) -> float:
        return self.min_raw * self.resolution

    @property
    def max_value(self) -> float:
        return self.max_raw * self.resolution

    def __str__(self) -> str:
        return "Q%d.%d" % (self.width_bits - self.frac_bits, self.frac_bits)


Q4_4 = FixedFormat(8, 4)
Q8_8 = FixedFormat(16, 8)


@dataclass(frozen=True)
class ModelConfig:
    """Runtime-programmable transformer hyperparameters."""

    d_model: int
    num_heads: int
    num_layers: int
    seq_len: int
    activation: str = "relu"
    scale_mode: str = "sqrt_dk"
    use_residual: bool = True
    mask_enabled: bool = False

    @property
    def d_k(self) -> int:
        return self.d_model // self.num_heads


@dataclass(frozen=True)
class PipelineConstants:
    """Per-operation cycle constants of the pipelined loop model.

    PD_L (full load pipeline) = axi + addr + load + store + convert cycles.
    The arithmetic tail (load/mult/add/store) feeds PD_MHA; pd_ffn_extra_cc
    mirrors that tail for the FFN engines.
    """

    axi_cc: int = 7
    addr_cc: int = 1
    load_cc: int = 1
    store_cc: int = 1
    convert_cc: int = 3
    mult_cc: int = 2
    add_cc: int = 1
    pd_ba_cc: int = 3
    pd_ffn_extra_cc: int = 5
    ii: int = 1

    @property
    def pd_load(self) -> int:
        return self.axi_cc + self.addr_cc + self.load_cc + self.store_cc + self.convert_cc

    @property
    def pd_arith(self) -> int:
        return self.load_cc + self.mult_cc + self.add_cc + self.store_cc


@dataclass(frozen=True)
class HardwareConfig:
    """Synthesis-time hardware parameters (cannot change at runtime)."""

    ts_mha: int
    ts_ffn: int
    clock_mhz: float
    fx_format: FixedFormat
    max_model: ModelConfig
    per_tile_requantize: bool = False
    pipeline: PipelineConstants = field(default_factory=PipelineConstants)


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    dsp_total: int
    lut_total: int
    bram36_total: int


# Alveo U55C (XCU55C) device budgets.
U55C = DeviceProfile(name="U55C", dsp_total=9024, lut_total=1303680, bram36_total=2016)


@dataclass(frozen=True)
class DerivedDims:
    """Quantities the tiled schedules are built from."""

    d_k: int
    tiles_mha: int
    tiles_ffn: int
    ffn1_reuse: int
    ffn23_reuse: int


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def _positive_counts(m: ModelConfig) -> list:
    out = []
    for name in ("d_model", "num_heads", "num_layers", "seq_len"):
        if getattr(m, name) < 1:
            out.append("%s must be >= 1 (got %d)" % (name, getattr(m, name)))
    return out


def validate(m: ModelConfig, hw: HardwareConfig) -> ValidationResult:
    """Collect every violated constraint; never raises on valid field types."""
    v = _positive_counts(m)
    if m.activation not in ACTIVATIONS:
        v.append("activation must be one of %s (got %r)" % (list(ACTIVATIONS), m.activation))
    if m.scale_mode not in SCALE_MODES:
        v.append("scale_mode must be one of %s (got %r)" % (list(SCALE_MODES), m.scale_mode))
    if m.num_heads >= 1 and m.d_model >= 1 and m.d_model % m.num_heads != 0:
        v.append("d_model not divisible by num_heads (%d %% %d != 0)" % (m.d_model, m.num_heads))

    fmt = hw.fx_format
    if fmt.width_bits not in (8, 16):
        v.append("width_bits must be 8 or 16 (got %d)" % fmt.width_bits)
    if not (0 < fmt.frac_bits < fmt.width_bits):
        v.append("frac_bits must satisfy 0 < frac_bits < width_bits (got %d/%d)"
                 % (fmt.frac_bits, fmt.width_bits))

    for ts_name in ("ts_mha", "ts_ffn"):
        ts = getattr(hw, ts_name)
        if ts < 1:
            v.append("%s must be >= 1 (got %d)" % (ts_name, ts))
            continue
        if ts > m.d_model:
            v.append("%s exceeds d_model (%d > %d)" % (ts_name, ts, m.d_model))
        if m.d_model >= 1 and m.d_model % ts != 0:
            v.append("d_model not divisible by %s (%d %% %d != 0)" % (ts_name, m.d_model, ts))
    if hw.clock_mhz <= 0:
        v.append("clock_mhz must be positive (got %s)" % hw.clock_mhz)

    mx = hw.max_model
    for name in ("d_model", "num_heads", "num_layers", "seq_len"):
        if getattr(m, name) > getattr(mx, name):
            v.append("%s exceeds synthesis-time maximum (%d > %d)"
                     % (name, getattr(m, name), getattr(mx, name)))
    return ValidationResult(tuple(v))


def ensure_valid(m: ModelConfig, hw: HardwareConfig) -> None:
    res = validate(m, hw)
    if not res.ok:
        raise ConfigError("; ".join(res.violations))


def derived_dims(m: ModelConfig, hw: HardwareConfig) -> DerivedDims:
    """Exact integral derived quantities; requires a passing validate()."""
    ensure_valid(m, hw)
    tiles_ffn = m.d_model // hw.ts_ffn
    return DerivedDims(
        d_k=m.d_model // m.num_heads,
        tiles_mha=m.d_model // hw.ts_mha,
        tiles_ffn=tiles_ffn,
        ffn1_reuse=tiles_ffn * tiles_ffn,
        ffn23_reuse=4 * tiles_ffn * tiles_ffn,
    )


# ---------------------------------------------------------------------------
# JSON document parsing
# ---------------------------------------------------------------------------

_MODEL_KEYS = {"d_model", "num_heads", "num_layers", "seq_len",
               "activation", "scale_mode", "use_residual", "mask_enabled"}
_MODEL_REQUIRED = ("d_model", "num_heads", "num_layers", "seq_len")
_HW_KEYS = {"ts_mha", "ts_ffn", "clock_mhz", "width_bits", "frac_bits",
            "per_tile_requantize", "max_model", "pipeline"}
_HW_REQUIRED = ("ts_mha", "ts_ffn", "clock_mhz", "width_bits", "frac_bits")
_DEVICE_KEYS = {"name", "dsp_total", "lut_total", "bram36_total"}
_PIPELINE_KEYS = {"axi_cc", "addr_cc", "load_cc", "store_cc", "convert_cc",
                  "mult_cc", "add_cc", "pd_ba_cc", "pd_ffn_extra_cc", "ii"}


def _require_obj(obj, section: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError("section %r must be a JSON object" % section)
    return obj


def _check_keys(obj: dict, allowed: set, section: str) -> None:
    for k in obj:
        if k not in allowed:
            raise ConfigError("unknown key %r in section %r" % (k, section))


def _get(obj: dict, key: str, section: str, required: bool, default=None):
    if key not in obj:
        if required:
            raise ConfigError("missing required key %s in section %r" % (key, section))
        return default
    return obj[key]


def _as_int(value, key: str):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("key %r must be an integer (got %r)" % (key, value))
    return value


def _as_bool(value, key: str):
    if not isinstance(value, bool):
        raise ConfigError("key %r must be a boolean (got %r)" % (key, value))
    return value


def _parse_model(obj: dict, section: str) -> ModelConfig:
    _require_obj(obj, section)
    _check_keys(obj, _MODEL_KEYS, section)
    for k in _MODEL_REQUIRED:
        if k not in obj:
            raise ConfigError("missing required key %s" % k)
    return ModelConfig(
        d_model=_as_int(obj["d_model"], "d_model"),
        num_heads=_as_int(obj["num_heads"], "num_heads"),
        num_layers=_as_int(obj["num_layers"], "num_layers"),
        seq_len=_as_int(obj["seq_len"], "seq_len"),
        activation=_get(obj, "activation", section, False, "relu"),
        scale_mode=_get(obj, "scale_mode", section, False, "sqrt_dk"),
        use_residual=_as_bool(obj["use_residual"], "use_residual") if "use_residual" in obj else True,
        mask_enabled=_as_bool(obj["mask_enabled"], "mask_enabled") if "mask_enabled" in obj else False,
    )


def _parse_pipeline(obj) -> PipelineConstants:
    if obj is None:
        return PipelineConstants()
    _require_obj(obj, "hardware.pipeline")
    _check_keys(obj, _PIPELINE_KEYS, "hardware.pipeline")
    defaults = PipelineConstants()
    kwargs = {k: _as_int(obj.get(k, getattr(defaults, k)), k) for k in _PIPELINE_KEYS}
    return PipelineConstants(**kwargs)


def parse_config(text: str):
    """Parse a JSON configuration document.

    Returns (ModelConfig, HardwareConfig, DeviceProfile).  Optional fields
    take documented defaults; max_model defaults to the model section itself;
    device defaults to the U55C profile.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("syntax error at line %d column %d: %s" % (e.lineno, e.colno, e.msg)) from e
    _require_obj(doc, "<root>")
    _check_keys(doc, {"model", "hardware", "device"}, "<root>")
    if "model" not in doc:
        # Degenerate documents report the first missing model key directly.
        raise ConfigError("missing required key d_model")
    model = _parse_model(doc["model"], "model")

    hw_obj = _require_obj(_get(doc, "hardware", "<root>", True), "hardware")
    _check_keys(hw_obj, _HW_KEYS, "hardware")
    for k in _HW_REQUIRED:
        if k not in hw_obj:
            raise ConfigError("missing required key %s in section 'hardware'" % k)
    max_model = model
    if "max_model" in hw_obj:
        max_model = _parse_model(hw_obj["max_model"], "hardware.max_model")
    clock = hw_obj["clock_mhz"]
    if isinstance(clock, bool) or not isinstance(clock, (int, float)):
        raise ConfigError("key 'clock_mhz' must be a number (got %r)" % clock)
    hw = HardwareConfig(
        ts_mha=_as_int(hw_obj["ts_mha"], "ts_mha"),
        ts_ffn=_as_int(hw_obj["ts_ffn"], "ts_ffn"),
        clock_mhz=float(clock),
        fx_format=FixedFormat(_as_int(hw_obj["width_bits"], "width_bits"),
                              _as_int(hw_obj["frac_bits"], "frac_bits")),
        max_model=max_model,
        per_tile_requantize=_as_bool(hw_obj["per_tile_requantize"], "per_tile_requantize")
        if "per_tile_requantize" in hw_obj else False,
        pipeline=_parse_pipeline(hw_obj.get("pipeline")),
    )

    dev = U55C
    if "device" in doc:
        dev_obj = _require_obj(doc["device"], "device")
        _check_keys(dev_obj, _DEVICE_KEYS, "device")
        for k in ("name", "dsp_total", "lut_total", "bram36_total"):
            if k not in dev_obj:
                raise ConfigError("missing required key %s in section 'device'" % k)
        dev = DeviceProfile(
            name=str(dev_obj["name"]),
            dsp_total=_as_int(dev_obj["dsp_total"], "dsp_total"),
            lut_total=_as_int(dev_obj["lut_total"], "lut_total"),
            bram36_total=_as_int(dev_obj["bram36_total"], "bram36_total"),
        )
    for total in (dev.dsp_total, dev.lut_total, dev.bram36_total):
        if total <= 0:
            raise ConfigError("device totals must be positive")
    return model, hw, dev


def config_dict(m: ModelConfig, hw: HardwareConfig, dev: DeviceProfile) -> dict:
    """Canonical document form of a parsed configuration."""
    return {
        "model": asdict(m),
        "hardware": {
            "ts_mha": hw.ts_mha,
            "ts_ffn": hw.ts_ffn,
            "clock_mhz": hw.clock_mhz,
            "width_bits": hw.fx_format.width_bits,
            "frac_bits": hw.fx_format.frac_bits,
            "per_tile_requantize": hw.per_tile_requantize,
            "max_model": asdict(hw.max_model),
            "pipeline": asdict(hw.pipeline),
        },
        "device": asdict(dev),
    }


def render_config(m: ModelConfig, hw: HardwareConfig, dev: DeviceProfile) -> str:
    """Canonical JSON text such that parse_config(render_config(...)) round-trips."""
    return json.dumps(config_dict(m, hw, dev), indent=2, sort_keys=True) + "\n"

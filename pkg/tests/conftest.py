import numpy as np
import pytest

from protea_sim.config import HardwareConfig, ModelConfig, Q4_4

TEST1_MODEL = ModelConfig(d_model=768, num_heads=8, num_layers=12, seq_len=64)
TEST1_HW = HardwareConfig(ts_mha=64, ts_ffn=128, clock_mhz=200.0,
                          fx_format=Q4_4, max_model=TEST1_MODEL)


def make_hw(m, ts_mha, ts_ffn, fmt=Q4_4, clock=200.0, per_tile=False,
            max_model=None, pipeline=None):
    kwargs = {}
    if pipeline is not None:
        kwargs["pipeline"] = pipeline
    return HardwareConfig(ts_mha=ts_mha, ts_ffn=ts_ffn, clock_mhz=clock,
                          fx_format=fmt, max_model=max_model or m,
                          per_tile_requantize=per_tile, **kwargs)


def divisors(n):
    return [d for d in range(1, n + 1) if n % d == 0]


def random_small_config(rng, d_max=64, sl_max=16):
    """A random valid (m, ts_mha, ts_ffn) with heads and tiles dividing d."""
    while True:
        d = int(rng.integers(2, d_max + 1))
        heads = [h for h in divisors(d) if h <= 8]
        if heads:
            break
    h = int(rng.choice(heads))
    sl = int(rng.integers(1, sl_max + 1))
    ts_mha = int(rng.choice(divisors(d)))
    ts_ffn = int(rng.choice(divisors(d)))
    m = ModelConfig(d_model=d, num_heads=h, num_layers=1, seq_len=sl,
                    scale_mode=str(rng.choice(["sqrt_dk", "d_model"])),
                    use_residual=bool(rng.integers(0, 2)))
    return m, ts_mha, ts_ffn


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

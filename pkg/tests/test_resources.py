import pytest

from protea_sim.config import DeviceProfile, ModelConfig, U55C
from protea_sim.engines import buffer_inventory
from protea_sim.resources import (bram_blocks, bram_estimate, budget_check,
                                  dsp_estimate, dsp_overhead, pe_counts,
                                  resource_report)
from conftest import TEST1_HW, TEST1_MODEL, make_hw

# Frozen by the buffer-inventory accounting run on the reference build
# (wide-accumulation mode, 8-bit data, 32-bit cross-tile accumulators).
TEST1_BRAM36 = 581.5


def test_pe_counts_reference_build():
    pe = pe_counts(TEST1_MODEL, TEST1_HW)
    assert pe == {"qkv": 192, "qk": 96, "sv": 64,
                  "ffn1": 128, "ffn2": 128, "ffn3": 512}


def test_pe_counts_single_head():
    m = ModelConfig(d_model=16, num_heads=1, num_layers=1, seq_len=4)
    pe = pe_counts(m, make_hw(m, 16, 8))
    assert pe["qkv"] == 3 * 16


def test_pe_counts_sl_one():
    m = ModelConfig(d_model=16, num_heads=2, num_layers=1, seq_len=1)
    assert pe_counts(m, make_hw(m, 8, 8))["sv"] == 1


def test_dsp_estimate_reference_build():
    assert dsp_estimate(TEST1_MODEL, TEST1_HW) == 1536 + 1280 + 768 + 768 == 4352


def test_dsp_estimate_unit_config():
    m = ModelConfig(d_model=1, num_heads=1, num_layers=1, seq_len=1)
    assert dsp_estimate(m, make_hw(m, 1, 1)) == 3 + 2 + 6 + 1 == 12


def test_dsp_estimate_head_doubling():
    m8 = TEST1_MODEL
    m4 = ModelConfig(d_model=768, num_heads=4, num_layers=12, seq_len=64)
    hw = make_hw(m4, 64, 128, max_model=m8)
    # only the two head-proportional terms move with h (d_k doubles alongside)
    d4 = dsp_estimate(m4, hw)
    assert d4 == 3 * 4 * 64 + 4 * (192 + 64) + 6 * 128 + 768
    assert dsp_estimate(m8, TEST1_HW) - d4 == (1536 + 1280) - (768 + 1024)


def test_pe_sum_reproduces_estimate_minus_overhead():
    for m, hw in ((TEST1_MODEL, TEST1_HW),
                  (ModelConfig(d_model=32, num_heads=4, num_layers=1, seq_len=8),
                   make_hw(ModelConfig(d_model=32, num_heads=4, num_layers=1, seq_len=8), 8, 16))):
        pe = pe_counts(m, hw)
        total = m.num_heads * (pe["qkv"] + pe["qk"] + pe["sv"]) \
            + pe["ffn1"] + pe["ffn2"] + pe["ffn3"]
        assert total == dsp_estimate(m, hw) - dsp_overhead(m)


def test_bram_blocks_examples():
    assert bram_blocks(64 * 64 * 8) == 1.0       # 32768 bits
    assert bram_blocks(4 * 4 * 8) == 0.5         # minimum granularity
    assert bram_blocks(18432) == 0.5
    assert bram_blocks(18433) == 1.0
    assert bram_blocks(0) == 0.0


def test_bram_estimate_reference_build_frozen():
    assert bram_estimate(TEST1_MODEL, TEST1_HW) == TEST1_BRAM36


def test_bram_estimate_matches_inventory_sum():
    total = 0.0
    for _name, shape, bits in buffer_inventory(TEST1_HW):
        n = 1
        for e in shape:
            n *= e
        total += bram_blocks(n * bits)
    assert total == bram_estimate(TEST1_MODEL, TEST1_HW)


def test_bram_per_tile_mode_smaller():
    hw_narrow = make_hw(TEST1_MODEL, 64, 128, per_tile=True)
    assert bram_estimate(TEST1_MODEL, hw_narrow) < TEST1_BRAM36


def test_budget_feasible_reference_build():
    rep = resource_report(TEST1_MODEL, TEST1_HW, U55C)
    assert rep.feasible
    assert rep.dsp_utilization == pytest.approx(4352 / 9024)
    assert round(100 * rep.dsp_utilization, 1) == 48.2
    assert budget_check(rep, U55C)


def test_budget_infeasible_single_tile():
    m = TEST1_MODEL
    hw = make_hw(m, 768, 128)  # tiles_mha = 1 -> 3*8*768 PEs in qkv alone
    rep = resource_report(m, hw, U55C)
    assert pe_counts(m, hw)["qkv"] * m.num_heads == 18432 > U55C.dsp_total
    assert not rep.feasible


def test_budget_trivially_feasible_minimal():
    m = ModelConfig(d_model=1, num_heads=1, num_layers=1, seq_len=1)
    rep = resource_report(m, make_hw(m, 1, 1), U55C)
    assert rep.feasible


def test_dsp_monotone_in_each_dimension():
    base_m = ModelConfig(d_model=64, num_heads=4, num_layers=1, seq_len=16)
    base_hw = make_hw(base_m, 16, 16)
    base = dsp_estimate(base_m, base_hw)
    bigger = [
        (ModelConfig(d_model=128, num_heads=4, num_layers=1, seq_len=16),
         make_hw(ModelConfig(d_model=128, num_heads=4, num_layers=1, seq_len=16), 16, 16)),
        (ModelConfig(d_model=64, num_heads=8, num_layers=1, seq_len=16),
         make_hw(ModelConfig(d_model=64, num_heads=8, num_layers=1, seq_len=16), 16, 16)),
        (ModelConfig(d_model=64, num_heads=4, num_layers=1, seq_len=32),
         make_hw(ModelConfig(d_model=64, num_heads=4, num_layers=1, seq_len=32), 16, 16)),
        (base_m, make_hw(base_m, 32, 16)),
        (base_m, make_hw(base_m, 16, 32)),
    ]
    for m, hw in bigger:
        assert dsp_estimate(m, hw) >= base


def test_feasibility_antitone():
    # Enlarging a dimension never turns an infeasible config feasible.
    dev = DeviceProfile("tiny", dsp_total=200, lut_total=1000, bram36_total=100)
    m_small = ModelConfig(d_model=32, num_heads=2, num_layers=1, seq_len=8)
    small = resource_report(m_small, make_hw(m_small, 16, 16), dev)
    assert small.dsp_estimate == 272 > dev.dsp_total
    assert not small.feasible
    grown = [
        (ModelConfig(d_model=64, num_heads=2, num_layers=1, seq_len=8), 32, 32),
        (ModelConfig(d_model=32, num_heads=4, num_layers=1, seq_len=8), 16, 16),
        (ModelConfig(d_model=32, num_heads=2, num_layers=1, seq_len=32), 16, 16),
        (ModelConfig(d_model=32, num_heads=2, num_layers=1, seq_len=8), 32, 16),
    ]
    for m, ts_mha, ts_ffn in grown:
        assert not resource_report(m, make_hw(m, ts_mha, ts_ffn), dev).feasible


def test_report_carries_synthesized_baseline():
    rep = resource_report(TEST1_MODEL, TEST1_HW, U55C)
    assert rep.baseline is not None
    assert rep.baseline.dsp == 3612
    assert rep.baseline.dsp_utilization == 0.40
    assert rep.dsp_estimate / rep.baseline.dsp - 1 == pytest.approx(0.2049, abs=1e-3)
    m = ModelConfig(d_model=32, num_heads=2, num_layers=1, seq_len=8)
    assert resource_report(m, make_hw(m, 8, 8), U55C).baseline is None

import pytest

from protea_sim.config import ModelConfig, PipelineConstants
from protea_sim.latency import (attention_stage_latencies, attention_total,
                                cycles_to_ms, encoder_latency,
                                ffn_stage_latencies, gops, pll, total_loop_latency,
                                total_ops)
from conftest import TEST1_HW, TEST1_MODEL, make_hw

# Hand-evaluated stage set for SL=64, d=768, h=8, ts=64 with PD_L=13,
# PD_MHA=17, PD_S=96, PD_SV=64, PD_BA=3.
STAGES_LITERAL = {"LI": 49920, "LB": 108, "LIA": 4864, "LWA": 6912,
                  "SA": 7168, "BA": 6272, "S": 10176, "SV": 10176}


def stage_map(stages):
    return {s.stage: s.cycles for s in stages}


def test_pll_examples():
    assert pll(1, 1, 13) == 13
    assert pll(96, 1, 13) == 108
    assert pll(768, 1, 13) == 780


def test_pll_preconditions():
    for bad in ((0, 1, 1), (1, 0, 1), (1, 1, 0)):
        with pytest.raises(ValueError):
            pll(*bad)


def test_total_loop_latency_examples():
    assert total_loop_latency(780, 64) == 49920
    assert total_loop_latency(123, 1) == 123
    assert total_loop_latency(108, 64) == 6912


def test_attention_stages_paper_literal():
    got = stage_map(attention_stage_latencies(TEST1_MODEL, TEST1_HW, "paper_literal"))
    assert got == STAGES_LITERAL


def test_attention_stages_per_tile():
    got = stage_map(attention_stage_latencies(TEST1_MODEL, TEST1_HW, "per_tile"))
    assert got["LIA"] == 58368
    assert got["LWA"] == 82944
    assert got["SA"] == 86016
    for name in ("LI", "LB", "BA", "S", "SV"):
        assert got[name] == STAGES_LITERAL[name]


def test_attention_total_literal():
    stages = attention_stage_latencies(TEST1_MODEL, TEST1_HW, "paper_literal")
    cc, ms = attention_total(stages, 200.0)
    assert cc == 95596
    assert ms == pytest.approx(0.478, abs=5e-4)
    _, ms400 = attention_total(stages, 400.0)
    assert ms400 == pytest.approx(0.239, abs=5e-4)


def test_attention_total_per_tile():
    stages = attention_stage_latencies(TEST1_MODEL, TEST1_HW, "per_tile")
    cc, _ = attention_total(stages, 400.0)
    # Sum of the pinned per-tile stage values.
    assert cc == sum(stage_map(stages).values()) == 303980
    assert cycles_to_ms(cc, 400.0) == pytest.approx(0.760, abs=5e-4)


def test_attention_minimal_config_collapses_to_depths():
    m = ModelConfig(d_model=2, num_heads=2, num_layers=1, seq_len=1)
    hw = make_hw(m, 2, 2)
    got = stage_map(attention_stage_latencies(m, hw))
    p = hw.pipeline
    assert got["LB"] == p.pd_load        # d_k = 1, single trip
    assert got["BA"] == p.pd_ba_cc
    assert got["S"] == 1                 # pll(1, 1, d_k=1)
    assert got["SV"] == 1


def test_ffn_stage_examples():
    got = stage_map(ffn_stage_latencies(TEST1_MODEL, TEST1_HW))
    assert got["FFN1"] == 132 * 64 * 36 == 304128
    assert got["FFN2"] == 132 * 64 * 144
    assert got["FFN3"] == (4 * 128 + 4) * 64 * 36


def test_ffn_single_tile():
    m = ModelConfig(d_model=8, num_heads=2, num_layers=1, seq_len=2)
    hw = make_hw(m, 8, 8)
    got = stage_map(ffn_stage_latencies(m, hw))
    assert got["FFN1"] == pll(8, 1, 5) * 2  # single invocation


def test_ffn_small_example():
    m = ModelConfig(d_model=8, num_heads=2, num_layers=1, seq_len=2)
    hw = make_hw(m, 8, 4)
    assert stage_map(ffn_stage_latencies(m, hw))["FFN1"] == (3 + 5) * 2 * 4 == 64


def test_encoder_layer_count_linearity():
    def total(n):
        m = ModelConfig(d_model=768, num_heads=8, num_layers=n, seq_len=64)
        return encoder_latency(m, TEST1_HW, "per_tile").total_cc
    assert total(12) == 3 * total(4)
    assert 2 * total(12) == 3 * total(8)
    assert total(12) == 12 * total(1)
    # matches the published 279/93 and 279/186 ratios to 3 significant figures
    assert round(279 / 93, 3) == 3.0 and total(12) / total(4) == 3.0
    assert round(279 / 186, 3) == 1.5 and total(12) / total(8) == 1.5


def test_encoder_one_time_stages():
    rep_all = encoder_latency(TEST1_MODEL, TEST1_HW, "paper_literal")
    rep_li = encoder_latency(TEST1_MODEL, TEST1_HW, "paper_literal",
                             one_time_stages=("LI",))
    n = TEST1_MODEL.num_layers
    assert rep_all.total_cc - rep_li.total_cc == (n - 1) * STAGES_LITERAL["LI"]
    with pytest.raises(ValueError):
        encoder_latency(TEST1_MODEL, TEST1_HW, one_time_stages=("NOPE",))


def test_seq_len_scaling_window():
    m64 = ModelConfig(d_model=768, num_heads=8, num_layers=12, seq_len=64)
    m128 = ModelConfig(d_model=768, num_heads=8, num_layers=12, seq_len=128)
    hw128 = make_hw(m128, 64, 128, max_model=m128)
    r = (encoder_latency(m128, hw128, "per_tile").total_cc
         / encoder_latency(m64, TEST1_HW, "per_tile").total_cc)
    assert 1.9 <= r <= 2.15
    assert round(560 / 279, 3) == pytest.approx(2.007)


def test_tiling_monotonicity():
    totals = []
    for tiles in (6, 12, 24, 48):
        hw = make_hw(TEST1_MODEL, 768 // tiles, 128)
        stages = attention_stage_latencies(TEST1_MODEL, hw, "per_tile")
        totals.append(sum(s.cycles for s in stages))
    assert totals == sorted(totals)
    assert len(set(totals)) == len(totals)


def test_literal_bounded_by_per_tile(rng):
    from conftest import random_small_config
    for _ in range(30):
        m, ts_mha, ts_ffn = random_small_config(rng)
        hw = make_hw(m, ts_mha, ts_ffn)
        lit = encoder_latency(m, hw, "paper_literal").total_cc
        pt = encoder_latency(m, hw, "per_tile").total_cc
        assert lit <= pt
        if m.d_model // ts_mha == 1:
            assert lit == pt
        else:
            assert lit < pt


def test_seq_len_monotone():
    prev = 0
    for sl in (1, 2, 4, 8, 16, 32, 64):
        m = ModelConfig(d_model=768, num_heads=8, num_layers=12, seq_len=sl)
        cur = encoder_latency(m, TEST1_HW, "per_tile").total_cc
        assert cur > prev
        prev = cur


def test_total_ops_closed_form_vs_enumeration():
    m = TEST1_MODEL
    sl, d, dk, h = m.seq_len, m.d_model, m.d_k, m.num_heads
    per_layer = 0
    per_layer += 2 * (h * 3 * sl * d * dk)   # qkv
    per_layer += 2 * (h * sl * sl * dk)      # qk
    per_layer += 2 * (h * sl * sl * dk)      # sv
    per_layer += 2 * (sl * d * d)            # ffn1
    per_layer += 2 * (sl * d * 4 * d)        # ffn2
    per_layer += 2 * (sl * 4 * d * d)        # ffn3
    assert total_ops(m) == m.num_layers * per_layer == 11022630912


def test_gops_identities():
    m = TEST1_MODEL
    ms = 1000.0
    assert gops(m, ms) * ms * 1e-3 * 1e9 == pytest.approx(total_ops(m))
    assert gops(m, 50.0) == pytest.approx(2 * gops(m, 100.0))
    with pytest.raises(ValueError):
        gops(m, 0.0)


def test_report_embeds_mode_and_conventions():
    rep = encoder_latency(TEST1_MODEL, TEST1_HW, "per_tile")
    assert rep.accounting_mode == "per_tile"
    assert rep.total_ms == cycles_to_ms(rep.total_cc, 200.0)
    names = [s.stage for s in rep.stages]
    for expect in ("LI", "SA", "SOFTMAX", "FFN1", "FFN3", "LN"):
        assert expect in names


def test_pipeline_constants_overridable():
    p = PipelineConstants(axi_cc=5, pd_ba_cc=4)
    hw = make_hw(TEST1_MODEL, 64, 128, pipeline=p)
    got = stage_map(attention_stage_latencies(TEST1_MODEL, hw))
    assert got["LB"] == 95 + (5 + 1 + 1 + 1 + 3)
    assert got["BA"] == (95 + 4) * 64

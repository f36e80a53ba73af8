"""Functional fixed-point simulator and analytical performance/resource
models for a tiled, runtime-programmable transformer-encoder accelerator."""

from .config import (ConfigError, DerivedDims, DeviceProfile, FixedFormat,
                     HardwareConfig, ModelConfig, PipelineConstants, Q4_4, Q8_8,
                     U55C, derived_dims, parse_config, render_config, validate)
from .dse import DsePoint, SweepSpec, select_best, sweep
from .engines import (EngineState, ScheduleTrace, encoder_forward_tiled, ffn_ce,
                      layernorm_fx, qk_ce, qkv_ce, reconfigure, softmax_fx, sv_ce)
from .fixedpoint import (FxTensor, FxValue, WideAcc, dequantize, mac, quantize,
                         quantize_tensor, requantize)
from .kernels import active_backend
from .latency import (LatencyReport, StageLatency, attention_stage_latencies,
                      attention_total, encoder_latency, ffn_stage_latencies,
                      gops, pll, total_loop_latency)
from .reference import (ref_attention_head, ref_encoder_forward, ref_layernorm,
                        ref_softmax)
from .reports import TOOL_VERSION as __version__
from .resources import (ResourceReport, bram_estimate, budget_check, dsp_estimate,
                        pe_counts, resource_report)
from .untiled import untiled_fx_forward
from .weights import (EncoderWeights, MixStream, generate_input, generate_weights)

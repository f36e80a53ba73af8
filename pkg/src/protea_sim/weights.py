"""Encoder parameter containers and deterministic synthetic generation.

The generator is a 64-bit mix stream (splitmix-style): state advances by the
golden-ratio increment, output passes the two-stage xor-shift-multiply
finalizer, and the top 53 bits map to [-1, 1).  Values in that range keep
saturation rare but nonzero at Q4.4, so the saturation path stays exercised.

Tensor fill order is fixed: layers outer, parameter name alphabetical,
row-major within a tensor (see PARAM_ORDER).
"""

from dataclasses import dataclass

import numpy as np

from .config import FixedFormat, ModelConfig
from .fixedpoint import FxTensor, quantize_tensor

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MULT_1 = 0xBF58476D1CE4E5B9
MIX_MULT_2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


class MixStream:
    """Deterministic 64-bit stream; draws map to [-1, 1) via the top 53 bits."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX_MULT_1) & _MASK64
        z = ((z ^ (z >> 27)) * MIX_MULT_2) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 52) - 1.0

    def fill(self, shape) -> np.ndarray:
        """Vectorized draws, bit-identical to repeated next_unit()."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self.state) + steps * np.uint64(GOLDEN_GAMMA)  # wraps mod 2**64
        self.state = (self.state + n * GOLDEN_GAMMA) & _MASK64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_MULT_1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_MULT_2)
        z = z ^ (z >> np.uint64(31))
        u = (z >> np.uint64(11)).astype(np.float64)
        return (u / float(1 << 52) - 1.0).reshape(shape)


@dataclass
class AttentionHeadWeights:
    wq: object  # (d_model, d_k)
    wk: object
    wv: object
    bq: object  # (d_k,)
    bk: object
    bv: object


@dataclass
class EncoderLayerWeights:
    heads: list
    wo: object  # (d_model, d_model)
    bo: object
    w1: object  # (d_model, 4*d_model)
    b1: object
    w2: object  # (4*d_model, d_model)
    b2: object
    ln1_gamma: object
    ln1_beta: object
    ln2_gamma: object
    ln2_beta: object


@dataclass
class EncoderWeights:
    layers: list

    def dequantized(self) -> "EncoderWeights":
        def deq(t):
            return t.values() if isinstance(t, FxTensor) else np.asarray(t, dtype=np.float64)

        layers = []
        for lw in self.layers:
            heads = [AttentionHeadWeights(*(deq(getattr(h, f)) for f in
                                            ("wq", "wk", "wv", "bq", "bk", "bv")))
                     for h in lw.heads]
            layers.append(EncoderLayerWeights(
                heads=heads,
                wo=deq(lw.wo), bo=deq(lw.bo),
                w1=deq(lw.w1), b1=deq(lw.b1),
                w2=deq(lw.w2), b2=deq(lw.b2),
                ln1_gamma=deq(lw.ln1_gamma), ln1_beta=deq(lw.ln1_beta),
                ln2_gamma=deq(lw.ln2_gamma), ln2_beta=deq(lw.ln2_beta),
            ))
        return EncoderWeights(layers)


def layer_param_shapes(m: ModelConfig) -> dict:
    """Per-layer parameter name -> shape; head index is zero-padded so the
    alphabetical fill order matches numeric head order."""
    d, dk = m.d_model, m.d_k
    shapes = {
        "b1": (4 * d,),
        "b2": (d,),
        "bo": (d,),
        "ln1.beta": (d,),
        "ln1.gamma": (d,),
        "ln2.beta": (d,),
        "ln2.gamma": (d,),
        "w1": (d, 4 * d),
        "w2": (4 * d, d),
        "wo": (d, d),
    }
    for i in range(m.num_heads):
        p = "head%02d." % i
        shapes[p + "bk"] = (dk,)
        shapes[p + "bq"] = (dk,)
        shapes[p + "bv"] = (dk,)
        shapes[p + "wk"] = (d, dk)
        shapes[p + "wq"] = (d, dk)
        shapes[p + "wv"] = (d, dk)
    return shapes


def param_order(m: ModelConfig) -> list:
    return sorted(layer_param_shapes(m))


def tensor_name(layer: int, param: str) -> str:
    return "layer%03d.%s" % (layer, param)


def _assemble(m: ModelConfig, tensors: dict) -> EncoderWeights:
    layers = []
    for l in range(m.num_layers):
        t = {p: tensors[tensor_name(l, p)] for p in layer_param_shapes(m)}
        heads = [AttentionHeadWeights(
            wq=t["head%02d.wq" % i], wk=t["head%02d.wk" % i], wv=t["head%02d.wv" % i],
            bq=t["head%02d.bq" % i], bk=t["head%02d.bk" % i], bv=t["head%02d.bv" % i],
        ) for i in range(m.num_heads)]
        layers.append(EncoderLayerWeights(
            heads=heads, wo=t["wo"], bo=t["bo"], w1=t["w1"], b1=t["b1"],
            w2=t["w2"], b2=t["b2"],
            ln1_gamma=t["ln1.gamma"], ln1_beta=t["ln1.beta"],
            ln2_gamma=t["ln2.gamma"], ln2_beta=t["ln2.beta"],
        ))
    return EncoderWeights(layers)


def generate_weights(seed: int, m: ModelConfig, fmt: FixedFormat) -> EncoderWeights:
    """Quantized synthetic weights, bit-reproducible for a given seed."""
    stream = MixStream(seed)
    shapes = layer_param_shapes(m)
    tensors = {}
    for l in range(m.num_layers):
        for p in param_order(m):
            tensors[tensor_name(l, p)] = quantize_tensor(stream.fill(shapes[p]), fmt)
    return _assemble(m, tensors)


def generate_input(seed: int, m: ModelConfig, fmt: FixedFormat) -> FxTensor:
    """Quantized synthetic (seq_len, d_model) input from its own stream."""
    stream = MixStream(seed)
    return quantize_tensor(stream.fill((m.seq_len, m.d_model)), fmt)


def weights_to_tensor_map(w: EncoderWeights) -> dict:
    """Flatten to the canonical name -> FxTensor map used by the container file."""
    out = {}
    for l, lw in enumerate(w.layers):
        for i, h in enumerate(lw.heads):
            p = "head%02d." % i
            for f, short in (("wq", "wq"), ("wk", "wk"), ("wv", "wv"),
                             ("bq", "bq"), ("bk", "bk"), ("bv", "bv")):
                out[tensor_name(l, p + short)] = getattr(h, f)
        out[tensor_name(l, "wo")] = lw.wo
        out[tensor_name(l, "bo")] = lw.bo
        out[tensor_name(l, "w1")] = lw.w1
        out[tensor_name(l, "b1")] = lw.b1
        out[tensor_name(l, "w2")] = lw.w2
        out[tensor_name(l, "b2")] = lw.b2
        out[tensor_name(l, "ln1.gamma")] = lw.ln1_gamma
        out[tensor_name(l, "ln1.beta")] = lw.ln1_beta
        out[tensor_name(l, "ln2.gamma")] = lw.ln2_gamma
        out[tensor_name(l, "ln2.beta")] = lw.ln2_beta
    return out


def weights_from_tensor_map(m: ModelConfig, tensors: dict) -> EncoderWeights:
    """Rebuild the container; raises KeyError on missing tensors."""
    w = _assemble(m, tensors)
    check_shapes(w, m)
    return w


def _shape(t):
    return t.dims if isinstance(t, FxTensor) else np.asarray(t).shape


def check_shapes(w: EncoderWeights, m: ModelConfig) -> None:
    d, dk = m.d_model, m.d_k
    if len(w.layers) != m.num_layers:
        raise ValueError("expected %d layers, got %d" % (m.num_layers, len(w.layers)))
    for l, lw in enumerate(w.layers):
        if len(lw.heads) != m.num_heads:
            raise ValueError("layer %d: expected %d heads, got %d"
                             % (l, m.num_heads, len(lw.heads)))
        for i, h in enumerate(lw.heads):
            for f, want in (("wq", (d, dk)), ("wk", (d, dk)), ("wv", (d, dk)),
                            ("bq", (dk,)), ("bk", (dk,)), ("bv", (dk,))):
                got = _shape(getattr(h, f))
                if tuple(got) != want:
                    raise ValueError("layer %d head %d %s: shape %s != %s"
                                     % (l, i, f, got, want))
        for f, want in (("wo", (d, d)), ("bo", (d,)), ("w1", (d, 4 * d)),
                        ("b1", (4 * d,)), ("w2", (4 * d, d)), ("b2", (d,)),
                        ("ln1_gamma", (d,)), ("ln1_beta", (d,)),
                        ("ln2_gamma", (d,)), ("ln2_beta", (d,))):
            got = _shape(getattr(lw, f))
            if tuple(got) != want:
                raise ValueError("layer %d %s: shape %s != %s" % (l, f, got, want))

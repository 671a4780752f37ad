"""Full-integer post-training quantization and integer inference.

Weights are quantized per-tensor symmetric (int8, zero point 0), activations
per-tensor asymmetric affine (int8), biases int32 at scale
s_input * s_weight. Kernel layers accumulate in 32 bits and requantize
through a real-valued multiplier with round-half-away-from-zero; tanh runs
as a 256-entry int8 lookup table. Input normalization stays in float in
front of the quantization boundary and the final softmax runs in float after
dequantization.

Batch norm must be folded into the convolutions before quantization;
quantize_graph folds automatically when it sees batch-norm layers, and
calibration then runs on the folded graph so recorded ranges line up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    CorruptContainer,
    EmptyCalibration,
    RangeMissing,
    ShapeMismatch,
)
from .model import (
    CONV_KINDS,
    LayerSpec,
    ModelGraph,
    fold_batchnorm,
    forward,
)

MAGIC = b"SDQ1"
INT_KINDS = CONV_KINDS + ("dense", "relu", "maxpool2", "dropout", "concat", "tanh")
# degenerate calibration ranges are widened to at least this half-span
MIN_HALF_SPAN = 1e-3


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class QuantScheme:
    scale: float
    zero_point: int

    def quant(self, x: np.ndarray) -> np.ndarray:
        q = round_half_away(np.asarray(x, np.float64) / self.scale) + self.zero_point
        return np.clip(q, -128, 127).astype(np.int8)

    def dequant(self, q: np.ndarray) -> np.ndarray:
        return ((q.astype(np.float64) - self.zero_point) * self.scale).astype(np.float32)

    @classmethod
    def symmetric_for(cls, tensor: np.ndarray) -> "QuantScheme":
        peak = float(np.max(np.abs(tensor))) if tensor.size else 0.0
        peak = max(peak, MIN_HALF_SPAN)
        return cls(scale=peak / 127.0, zero_point=0)

    @classmethod
    def affine_for(cls, lo: float, hi: float) -> "QuantScheme":
        lo = min(0.0, float(lo))
        hi = max(0.0, float(hi))
        if hi - lo < 2 * MIN_HALF_SPAN:
            lo = min(lo, -MIN_HALF_SPAN)
            hi = max(hi, MIN_HALF_SPAN)
        scale = (hi - lo) / 255.0
        zp = int(round(-128 - lo / scale))
        return cls(scale=scale, zero_point=int(np.clip(zp, -128, 127)))


@dataclass
class QTensor:
    data: np.ndarray  # int8
    scheme: QuantScheme

    @property
    def shape(self):
        return self.data.shape


@dataclass
class QLayer:
    weight: QTensor
    bias: np.ndarray  # int32
    bias_scale: float


@dataclass
class QuantizedGraph:
    graph: ModelGraph  # folded, batchnorm-free
    schemes: dict[str, QuantScheme]
    qlayers: dict[str, QLayer]
    luts: dict[str, np.ndarray]
    norm_weights: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class SizeReport:
    float_bytes: int
    quantized_bytes: int

    @property
    def ratio(self) -> float:
        return self.quantized_bytes / self.float_bytes


def calibrate(graph: ModelGraph, weights: dict, calib: list[np.ndarray]) -> dict:
    """Record the running min/max of every tensor (input and all layer
    outputs) over the calibration samples. Min/max folding is commutative,
    so sample order does not matter."""
    if len(calib) == 0:
        raise EmptyCalibration("need at least one calibration sample")
    ranges: dict[str, tuple[float, float]] = {}
    for sample in calib:
        tensors = forward(graph, sample, weights, return_all=True)
        for name, arr in tensors.items():
            lo, hi = float(arr.min()), float(arr.max())
            if name in ranges:
                plo, phi = ranges[name]
                ranges[name] = (min(plo, lo), max(phi, hi))
            else:
                ranges[name] = (lo, hi)
    return ranges


def _int_domain(kind: str) -> bool:
    return kind in INT_KINDS


def _assign_schemes(graph: ModelGraph, ranges: dict) -> dict[str, QuantScheme]:
    """Effective scheme per tensor. Kernel layers, concat and tanh get their
    own recorded range; relu/maxpool/dropout inherit their input's scheme so
    those ops add no requantization error."""
    def from_range(name: str) -> QuantScheme:
        if name not in ranges:
            raise RangeMissing(f"no calibration range for tensor {name!r}")
        return QuantScheme.affine_for(*ranges[name])

    schemes: dict[str, QuantScheme] = {}
    for layer in graph.layers:
        if not _int_domain(layer.kind):
            continue
        src = layer.inputs[0]
        if src not in schemes:  # quantization boundary: float producer
            schemes[src] = from_range(src)
        if layer.kind in ("relu", "maxpool2", "dropout"):
            schemes[layer.name] = schemes[src]
        else:
            if layer.kind == "concat":
                other = layer.inputs[1]
                if other not in schemes:
                    schemes[other] = from_range(other)
            schemes[layer.name] = from_range(layer.name)
    return schemes


def quantize_graph(graph: ModelGraph, weights: dict, ranges: dict) -> QuantizedGraph:
    """Quantize a float graph given calibrated activation ranges.

    If the graph still contains batch-norm layers they are folded first; in
    that case the supplied ranges must have been calibrated on the folded
    graph (see quantize_model for the one-call flow).
    """
    if any(l.kind == "batchnorm" for l in graph.layers):
        graph, weights = fold_batchnorm(graph, weights)
    schemes = _assign_schemes(graph, ranges)
    qlayers: dict[str, QLayer] = {}
    luts: dict[str, np.ndarray] = {}
    norm_weights: dict[str, np.ndarray] = {}
    for layer in graph.layers:
        if layer.kind in CONV_KINDS + ("dense",):
            w = weights[f"{layer.name}.weight"]
            b = weights[f"{layer.name}.bias"]
            wscheme = QuantScheme.symmetric_for(w)
            wq = np.clip(
                round_half_away(w.astype(np.float64) / wscheme.scale), -127, 127
            ).astype(np.int8)
            s_in = schemes[layer.inputs[0]].scale
            bias_scale = s_in * wscheme.scale
            bias_q = round_half_away(b.astype(np.float64) / bias_scale)
            if np.abs(bias_q).max(initial=0) >= 2**31:
                raise ShapeMismatch(f"bias of {layer.name} overflows int32")
            # worst-case accumulator magnitude proved safe up front
            n_terms = int(np.prod(wq.shape[:-1]))
            kernels._check_acc_bound(n_terms, bias_q.astype(np.int64))
            qlayers[layer.name] = QLayer(
                weight=QTensor(wq, wscheme),
                bias=bias_q.astype(np.int32),
                bias_scale=bias_scale,
            )
        elif layer.kind == "tanh":
            s_in = schemes[layer.inputs[0]]
            s_out = schemes[layer.name]
            q = np.arange(-128, 128, dtype=np.float64)
            y = np.tanh((q - s_in.zero_point) * s_in.scale)
            lut = np.clip(
                round_half_away(y / s_out.scale) + s_out.zero_point, -128, 127
            ).astype(np.int8)
            luts[layer.name] = lut
        elif layer.kind == "zscore":
            norm_weights[f"{layer.name}.mean"] = weights[f"{layer.name}.mean"]
            norm_weights[f"{layer.name}.std"] = weights[f"{layer.name}.std"]
    return QuantizedGraph(graph, schemes, qlayers, luts, norm_weights)


def quantize_model(
    graph: ModelGraph, weights: dict, calib: list[np.ndarray]
) -> QuantizedGraph:
    """Fold, calibrate and quantize in one step."""
    if any(l.kind == "batchnorm" for l in graph.layers):
        graph, weights = fold_batchnorm(graph, weights)
    ranges = calibrate(graph, weights, calib)
    return quantize_graph(graph, weights, ranges)


def _requant(q: np.ndarray, src: QuantScheme, dst: QuantScheme) -> np.ndarray:
    if src == dst:
        return q
    v = round_half_away(
        (q.astype(np.float64) - src.zero_point) * (src.scale / dst.scale)
    ) + dst.zero_point
    return np.clip(v, -128, 127).astype(np.int8)


def qforward(
    qg: QuantizedGraph,
    x: np.ndarray,
    *,
    naive: bool = False,
    return_all: bool = False,
):
    """Integer inference. Input normalization runs in float, the body in
    int8 with int32 accumulators, and the head dequantizes before softmax.

    With return_all, returns {tensor name: float array} with every int
    tensor dequantized through its scheme, for error analysis against the
    float network.
    """
    conv_int = kernels.conv2d_int_naive if naive else kernels.conv2d_int
    upconv_int = kernels.upconv2_int_naive if naive else kernels.upconv2_int
    dense_int = kernels.dense_int_naive if naive else kernels.dense_int

    fvals: dict[str, np.ndarray] = {"input": np.asarray(x, np.float32)}
    qvals: dict[str, np.ndarray] = {}
    schemes = qg.schemes

    def as_int(name: str) -> np.ndarray:
        if name not in qvals:
            qvals[name] = schemes[name].quant(fvals[name])
        return qvals[name]

    def as_float(name: str) -> np.ndarray:
        if name not in fvals:
            fvals[name] = schemes[name].dequant(qvals[name])
        return fvals[name]

    for layer in qg.graph.layers:
        name, kind, src = layer.name, layer.kind, layer.inputs[0]
        if kind == "band_norm":
            fvals[name] = kernels.band_norm(as_float(src))
        elif kind == "zscore":
            fvals[name] = kernels.zscore(
                as_float(src),
                qg.norm_weights[f"{name}.mean"],
                qg.norm_weights[f"{name}.std"],
            )
        elif kind in CONV_KINDS + ("dense",):
            ql = qg.qlayers[name]
            xq = as_int(src)
            zp_in = schemes[src].zero_point
            if kind in ("conv3", "conv1"):
                acc = conv_int(xq, zp_in, ql.weight.data, ql.bias)
            elif kind == "upconv2":
                acc = upconv_int(xq, zp_in, ql.weight.data, ql.bias)
            else:
                acc = dense_int(xq, zp_in, ql.weight.data, ql.bias)
            out_s = schemes[name]
            mult = ql.bias_scale / out_s.scale
            q = round_half_away(acc.astype(np.float64) * mult) + out_s.zero_point
            qvals[name] = np.clip(q, -128, 127).astype(np.int8)
        elif kind == "relu":
            qvals[name] = kernels.relu_int(as_int(src), schemes[src].zero_point)
        elif kind == "maxpool2":
            qvals[name] = kernels.maxpool2(as_int(src))
        elif kind == "dropout":
            qvals[name] = as_int(src)
        elif kind == "tanh":
            qvals[name] = qg.luts[name][as_int(src).astype(np.int16) + 128]
        elif kind == "concat":
            a = _requant(as_int(src), schemes[src], schemes[name])
            b = _requant(
                as_int(layer.inputs[1]), schemes[layer.inputs[1]], schemes[name]
            )
            if a.shape[:-1] != b.shape[:-1]:
                raise ShapeMismatch(f"concat {name}: {a.shape} vs {b.shape}")
            qvals[name] = np.concatenate([a, b], axis=-1)
        elif kind == "softmax":
            fvals[name] = kernels.softmax(as_float(src))
        else:
            raise ShapeMismatch(f"layer kind {kind!r} not supported in integer mode")

    out_name = qg.graph.output_name
    if return_all:
        return {n: (fvals[n] if n in fvals else schemes[n].dequant(qvals[n]))
                for n in {**qvals, **fvals}}
    return as_float(out_name)


@dataclass
class QuantReport:
    size: SizeReport
    per_layer: dict[str, tuple[float, float]]  # name -> (mean abs err, max abs err)
    argmax_agreement: float


def payload_bytes(qg: QuantizedGraph) -> int:
    total = 0
    for ql in qg.qlayers.values():
        total += ql.weight.data.size + 4 * ql.bias.size
    for lut in qg.luts.values():
        total += lut.size
    for arr in qg.norm_weights.values():
        total += 4 * arr.size
    return total


def quant_report(
    graph: ModelGraph,
    weights: dict,
    qg: QuantizedGraph,
    probe: list[np.ndarray],
) -> QuantReport:
    """Byte accounting plus float-vs-integer error statistics on a probe set."""
    from .complexity import count_params

    float_bytes = 4 * count_params(graph).np_total
    size = SizeReport(float_bytes=float_bytes, quantized_bytes=payload_bytes(qg))

    fgraph, fweights = graph, weights
    if any(l.kind == "batchnorm" for l in graph.layers):
        fgraph, fweights = fold_batchnorm(graph, weights)

    sums: dict[str, list[float]] = {}
    agree = 0
    total = 0
    for sample in probe:
        ftens = forward(fgraph, sample, fweights, return_all=True)
        qtens = qforward(qg, sample, return_all=True)
        for name in ftens:
            if name == "input" or name not in qtens:
                continue
            err = np.abs(ftens[name].astype(np.float64) - qtens[name])
            entry = sums.setdefault(name, [0.0, 0.0, 0.0])
            entry[0] += float(err.sum())
            entry[1] = max(entry[1], float(err.max()))
            entry[2] += err.size
        f_lab = np.argmax(ftens[fgraph.output_name], axis=-1)
        q_lab = np.argmax(qtens[fgraph.output_name], axis=-1)
        agree += int((f_lab == q_lab).sum())
        total += f_lab.size
    per_layer = {n: (s / cnt, peak) for n, (s, peak, cnt) in sums.items()}
    return QuantReport(
        size=size,
        per_layer=per_layer,
        argmax_agreement=agree / total if total else 1.0,
    )


def save_qgraph(path, qg: QuantizedGraph) -> None:
    manifest = []
    payload = bytearray()

    def put(name, arr, dtype, scale=None, zero_point=None):
        arr = np.ascontiguousarray(arr, dtype=dtype)
        entry = {"name": name, "shape": list(arr.shape), "dtype": dtype}
        if scale is not None:
            entry["scale"] = float(scale)
        if zero_point is not None:
            entry["zero_point"] = int(zero_point)
        manifest.append(entry)
        payload.extend(arr.tobytes())

    for lname, ql in qg.qlayers.items():
        put(f"{lname}.weight", ql.weight.data, "<i1",
            ql.weight.scheme.scale, ql.weight.scheme.zero_point)
        put(f"{lname}.bias", ql.bias, "<i4", ql.bias_scale, 0)
    for lname, lut in qg.luts.items():
        put(f"{lname}.lut", lut, "<i1")
    for tname, arr in qg.norm_weights.items():
        put(tname, arr, "<f4")

    header = json.dumps(
        {
            "format": "sdq",
            "version": 1,
            "model": qg.graph.meta,
            "layers": [
                {
                    "name": l.name, "kind": l.kind, "inputs": list(l.inputs),
                    "in_ch": l.in_ch, "out_ch": l.out_ch,
                    "kernel": l.kernel, "rate": l.rate,
                }
                for l in qg.graph.layers
            ],
            "activations": {
                n: {"scale": s.scale, "zero_point": s.zero_point}
                for n, s in qg.schemes.items()
            },
            "tensors": manifest,
        }
    ).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array([len(header)], dtype="<u4").tobytes())
        f.write(header)
        f.write(payload)


def load_qgraph(path) -> QuantizedGraph:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CorruptContainer(f"{path}: not a quantized weight container")
    hlen = int(np.frombuffer(raw[4:8], "<u4")[0])
    if len(raw) < 8 + hlen:
        raise CorruptContainer(f"{path}: truncated header")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptContainer(f"{path}: bad header ({e})") from None
    graph = ModelGraph(
        [
            LayerSpec(d["name"], d["kind"], tuple(d["inputs"]),
                      d["in_ch"], d["out_ch"], d["kernel"], d["rate"])
            for d in header["layers"]
        ],
        meta=header["model"],
    )
    schemes = {
        n: QuantScheme(v["scale"], v["zero_point"])
        for n, v in header["activations"].items()
    }
    arrays: dict[str, tuple[np.ndarray, dict]] = {}
    offset = 8 + hlen
    itemsize = {"<i1": 1, "<i4": 4, "<f4": 4}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * itemsize[entry["dtype"]]
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CorruptContainer(f"{path}: truncated payload at {entry['name']}")
        arrays[entry["name"]] = (
            np.frombuffer(chunk, entry["dtype"]).reshape(shape).copy(),
            entry,
        )
        offset += nbytes

    qlayers: dict[str, QLayer] = {}
    luts: dict[str, np.ndarray] = {}
    norm_weights: dict[str, np.ndarray] = {}
    for name, (arr, entry) in arrays.items():
        base, tensor = name.rsplit(".", 1)
        if tensor == "weight":
            bias_arr, bias_entry = arrays[f"{base}.bias"]
            qlayers[base] = QLayer(
                weight=QTensor(arr, QuantScheme(entry["scale"], entry["zero_point"])),
                bias=bias_arr,
                bias_scale=bias_entry["scale"],
            )
        elif tensor == "lut":
            luts[base] = arr
        elif entry["dtype"] == "<f4":
            norm_weights[name] = arr
    return QuantizedGraph(graph, schemes, qlayers, luts, norm_weights)

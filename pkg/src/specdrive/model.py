"""Model graphs: a small encoder-decoder segmentation net and a spectral MLP.

A graph is an ordered list of layers; each layer names its input tensors, so
skip connections are explicit and the forward pass is a single walk. Weights
live outside the graph in a flat dict keyed "<layer>.<tensor>", which keeps
the same graph usable for float inference, complexity counting, batch-norm
folding and quantization.

Naming is stable: encoder blocks are enc0, enc1, ..., the bottom block is
bridge, decoder blocks dec1, dec0, ... and the classifier is head.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import InvalidConfig, MissingWeights, ShapeMismatch, StructureError

NORM_KINDS = ("band_norm", "zscore")
CONV_KINDS = ("conv3", "conv1", "upconv2")
WEIGHTED_KINDS = CONV_KINDS + ("dense",)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    inputs: tuple[str, ...]
    in_ch: int = 0
    out_ch: int = 0
    kernel: int = 0
    rate: float = 0.0


@dataclass
class ModelGraph:
    layers: list[LayerSpec]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = {"input"}
        for layer in self.layers:
            for src in layer.inputs:
                if src not in seen:
                    raise StructureError(
                        f"layer {layer.name} consumes {src!r} before it is produced"
                    )
            if layer.kind == "concat" and len(layer.inputs) != 2:
                raise StructureError(f"concat {layer.name} must have exactly 2 inputs")
            seen.add(layer.name)

    @property
    def output_name(self) -> str:
        return self.layers[-1].name

    def layer(self, name: str) -> LayerSpec:
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)


@dataclass(frozen=True)
class UNetConfig:
    patch_size: int = 128
    encoder_depth: int = 2
    initial_filters: int = 8
    conv_kernel: int = 3
    upconv_kernel: int = 2
    in_channels: int = 25
    classes: int = 3
    dropout_rate: float = 0.5
    input_norm: str = "band_sum"  # band_sum | zscore | band_sum+zscore | none

    def __post_init__(self):
        if self.encoder_depth < 1:
            raise InvalidConfig("encoder depth must be >= 1")
        if min(self.patch_size, self.initial_filters, self.in_channels) < 1:
            raise InvalidConfig("patch size, filters and channels must be >= 1")
        if self.classes < 2:
            raise InvalidConfig("need at least 2 classes")
        if self.patch_size % (2**self.encoder_depth):
            raise InvalidConfig(
                f"patch size {self.patch_size} not divisible by 2^{self.encoder_depth}"
            )
        if self.conv_kernel % 2 != 1:
            raise InvalidConfig("conv kernel must be odd for same padding")
        if self.upconv_kernel != 2:
            raise InvalidConfig("up-convolution kernel is fixed at 2 (stride-2 doubling)")
        if self.input_norm not in ("band_sum", "zscore", "band_sum+zscore", "none"):
            raise InvalidConfig(f"unknown input normalization {self.input_norm!r}")


def _conv_kind(kernel: int) -> str:
    return "conv1" if kernel == 1 else "conv3"


def build_unet(cfg: UNetConfig) -> ModelGraph:
    """Encoder-decoder graph: per level two conv+BN+ReLU blocks around
    stride-2 pooling/up-convolution, skip concatenations, dropout before the
    decoder, and a 1x1 classifier with softmax. Input normalization is part
    of the graph so raw reflectance cubes can be fed directly."""
    layers: list[LayerSpec] = []
    prev = "input"

    def add(name, kind, inputs, **kw):
        nonlocal prev
        layers.append(LayerSpec(name, kind, inputs, **kw))
        prev = name

    ch = cfg.in_channels
    if cfg.input_norm in ("band_sum", "band_sum+zscore"):
        add("norm.bands", "band_norm", (prev,), in_ch=ch, out_ch=ch)
    if cfg.input_norm in ("zscore", "band_sum+zscore"):
        add("norm.zscore", "zscore", (prev,), in_ch=ch, out_ch=ch)

    def conv_block(stage: str, idx: int, cin: int, cout: int):
        add(f"{stage}.conv{idx}", _conv_kind(cfg.conv_kernel), (prev,),
            in_ch=cin, out_ch=cout, kernel=cfg.conv_kernel)
        add(f"{stage}.bn{idx}", "batchnorm", (prev,), in_ch=cout, out_ch=cout)
        add(f"{stage}.relu{idx}", "relu", (prev,), in_ch=cout, out_ch=cout)

    skips: list[tuple[str, int]] = []
    for k in range(cfg.encoder_depth):
        f = cfg.initial_filters * 2**k
        conv_block(f"enc{k}", 0, ch, f)
        conv_block(f"enc{k}", 1, f, f)
        skips.append((prev, f))
        add(f"enc{k}.pool", "maxpool2", (prev,), in_ch=f, out_ch=f)
        ch = f

    f = cfg.initial_filters * 2**cfg.encoder_depth
    conv_block("bridge", 0, ch, f)
    conv_block("bridge", 1, f, f)
    ch = f
    add("bridge.dropout", "dropout", (prev,), in_ch=ch, out_ch=ch, rate=cfg.dropout_rate)

    for k in reversed(range(cfg.encoder_depth)):
        f = cfg.initial_filters * 2**k
        skip_name, skip_ch = skips[k]
        add(f"dec{k}.upconv", "upconv2", (prev,), in_ch=ch, out_ch=f,
            kernel=cfg.upconv_kernel)
        add(f"dec{k}.concat", "concat", (prev, skip_name),
            in_ch=f + skip_ch, out_ch=f + skip_ch)
        conv_block(f"dec{k}", 0, f + skip_ch, f)
        conv_block(f"dec{k}", 1, f, f)
        ch = f

    add("head.conv", "conv1", (prev,), in_ch=ch, out_ch=cfg.classes, kernel=1)
    add("head.softmax", "softmax", (prev,), in_ch=cfg.classes, out_ch=cfg.classes)

    return ModelGraph(
        layers,
        meta={
            "kind": "unet",
            "config": {
                "patch_size": cfg.patch_size,
                "encoder_depth": cfg.encoder_depth,
                "initial_filters": cfg.initial_filters,
                "conv_kernel": cfg.conv_kernel,
                "upconv_kernel": cfg.upconv_kernel,
                "in_channels": cfg.in_channels,
                "classes": cfg.classes,
                "dropout_rate": cfg.dropout_rate,
                "input_norm": cfg.input_norm,
            },
        },
    )


def build_mlp(in_channels: int = 25, classes: int = 3) -> ModelGraph:
    """Per-pixel spectral classifier: band-sum and z-score normalization,
    then dense 25/100/100 hidden stack with tanh and a softmax head."""
    if in_channels < 1:
        raise InvalidConfig("need at least one input channel")
    if classes < 2:
        raise InvalidConfig("need at least 2 classes")
    widths = [25, 100, 100, classes]
    layers = [
        LayerSpec("norm.bands", "band_norm", ("input",), in_channels, in_channels),
        LayerSpec("norm.zscore", "zscore", ("norm.bands",), in_channels, in_channels),
    ]
    prev, ch = "norm.zscore", in_channels
    for i, width in enumerate(widths):
        layers.append(LayerSpec(f"fc{i}", "dense", (prev,), ch, width))
        prev, ch = f"fc{i}", width
        if i < len(widths) - 1:
            layers.append(LayerSpec(f"act{i}", "tanh", (prev,), ch, ch))
            prev = f"act{i}"
    layers.append(LayerSpec("head.softmax", "softmax", (prev,), ch, ch))
    return ModelGraph(
        layers,
        meta={"kind": "mlp", "config": {"in_channels": in_channels, "classes": classes}},
    )


def build_from_meta(meta: dict) -> ModelGraph:
    cfg = meta["config"]
    if meta["kind"] == "unet":
        return build_unet(UNetConfig(**cfg))
    if meta["kind"] == "mlp":
        return build_mlp(cfg["in_channels"], cfg["classes"])
    raise InvalidConfig(f"unknown model kind {meta.get('kind')!r}")


def _weight(weights: dict, key: str) -> np.ndarray:
    try:
        return weights[key]
    except KeyError:
        raise MissingWeights(f"missing tensor {key!r}") from None


def forward(
    graph: ModelGraph,
    x: np.ndarray,
    weights: dict,
    *,
    naive: bool = False,
    return_all: bool = False,
):
    """Float32 inference. Dropout is identity; batch norm uses its stored
    statistics. With return_all, gives every intermediate tensor by name."""
    kset = kernels.NAIVE_KERNELS if naive else kernels.FAST_KERNELS
    tensors: dict[str, np.ndarray] = {"input": np.asarray(x, dtype=np.float32)}
    for layer in graph.layers:
        a = tensors[layer.inputs[0]]
        name, kind = layer.name, layer.kind
        if kind == "band_norm":
            out = kernels.band_norm(a)
        elif kind == "zscore":
            out = kernels.zscore(a, _weight(weights, f"{name}.mean"),
                                 _weight(weights, f"{name}.std"))
        elif kind in ("conv3", "conv1"):
            out = kset["conv2d"](a, _weight(weights, f"{name}.weight"),
                                 _weight(weights, f"{name}.bias"))
        elif kind == "upconv2":
            out = kset["upconv2"](a, _weight(weights, f"{name}.weight"),
                                  _weight(weights, f"{name}.bias"))
        elif kind == "batchnorm":
            out = kernels.batchnorm_infer(
                a,
                _weight(weights, f"{name}.scale"),
                _weight(weights, f"{name}.offset"),
                _weight(weights, f"{name}.mean"),
                _weight(weights, f"{name}.variance"),
            )
        elif kind == "relu":
            out = kernels.relu(a)
        elif kind == "tanh":
            out = np.tanh(a)
        elif kind == "maxpool2":
            out = kset["maxpool2"](a)
        elif kind == "dense":
            out = kset["dense"](a, _weight(weights, f"{name}.weight"),
                                _weight(weights, f"{name}.bias"))
        elif kind == "concat":
            b = tensors[layer.inputs[1]]
            if a.shape[:-1] != b.shape[:-1]:
                raise ShapeMismatch(
                    f"concat {name}: spatial shapes {a.shape[:-1]} vs {b.shape[:-1]}"
                )
            out = np.concatenate([a, b], axis=-1)
        elif kind == "dropout":
            out = a
        elif kind == "softmax":
            out = kernels.softmax(a)
        else:
            raise StructureError(f"unknown layer kind {kind!r}")
        tensors[name] = out.astype(np.float32, copy=False)
    if return_all:
        return tensors
    return tensors[graph.output_name]


def fold_batchnorm(graph: ModelGraph, weights: dict) -> tuple[ModelGraph, dict]:
    """Fold every batch-norm into the convolution that feeds it.

    Returns a new graph without batchnorm layers and a matching weight dict;
    outputs agree with the unfolded network up to float rounding.
    """
    by_name = {l.name: l for l in graph.layers}
    folded_weights = {
        k: v.copy() for k, v in weights.items() if not _is_bn_tensor(graph, k)
    }
    renames: dict[str, str] = {}
    new_layers: list[LayerSpec] = []
    for layer in graph.layers:
        if layer.kind == "batchnorm":
            src = by_name[layer.inputs[0]]
            if src.kind not in CONV_KINDS:
                raise StructureError(
                    f"batchnorm {layer.name} does not directly follow a convolution"
                )
            scale = _weight(weights, f"{layer.name}.scale").astype(np.float64)
            offset = _weight(weights, f"{layer.name}.offset").astype(np.float64)
            mean = _weight(weights, f"{layer.name}.mean").astype(np.float64)
            var = _weight(weights, f"{layer.name}.variance").astype(np.float64)
            inv = scale / np.sqrt(var + kernels.BN_EPS)
            w = folded_weights[f"{src.name}.weight"].astype(np.float64)
            b = folded_weights[f"{src.name}.bias"].astype(np.float64)
            folded_weights[f"{src.name}.weight"] = (w * inv).astype(np.float32)
            folded_weights[f"{src.name}.bias"] = ((b - mean) * inv + offset).astype(
                np.float32
            )
            renames[layer.name] = renames.get(src.name, src.name)
            continue
        inputs = tuple(renames.get(i, i) for i in layer.inputs)
        new_layers.append(replace(layer, inputs=inputs))
    meta = dict(graph.meta)
    meta["batchnorm_folded"] = True
    return ModelGraph(new_layers, meta=meta), folded_weights


def _is_bn_tensor(graph: ModelGraph, key: str) -> bool:
    base = key.rsplit(".", 1)[0]
    try:
        return graph.layer(base).kind == "batchnorm"
    except KeyError:
        return False

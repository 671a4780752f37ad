"""Parameter and FLOP accounting for model graphs.

Convolutions and dense layers count weights plus bias; batch norm counts its
scale/offset as trainable and the stored mean/variance as non-trainable;
normalization, pooling and activation layers are parameter-free.

The FLOP figure uses a fixed, documented convention: 2 x MACs where
MACs = H_out * W_out * C_out * C_in * k_h * k_w for every kernel layer
(including up-convolutions, charged at their output resolution) and
N_in * N_out per application for dense layers. Activations, batch norm,
pooling and softmax are excluded. Published complexity figures for compact
segmentation nets mix 1- and 2-FLOP-per-MAC conventions, so the report
carries both the MAC and the 2x number.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidConfig
from .model import ModelGraph


@dataclass(frozen=True)
class ComplexityReport:
    np_total: int
    trainable: int
    non_trainable: int
    macs_per_patch: int = 0
    flops_per_patch: int = 0
    flops_per_image: int = 0
    patches_per_image: int = 0


def count_params(graph: ModelGraph) -> ComplexityReport:
    trainable = 0
    non_trainable = 0
    for layer in graph.layers:
        if layer.kind in ("conv3", "conv1"):
            k = layer.kernel
            trainable += k * k * layer.in_ch * layer.out_ch + layer.out_ch
        elif layer.kind == "upconv2":
            trainable += 4 * layer.in_ch * layer.out_ch + layer.out_ch
        elif layer.kind == "dense":
            trainable += layer.in_ch * layer.out_ch + layer.out_ch
        elif layer.kind == "batchnorm":
            trainable += 2 * layer.out_ch
            non_trainable += 2 * layer.out_ch
    return ComplexityReport(
        np_total=trainable + non_trainable,
        trainable=trainable,
        non_trainable=non_trainable,
    )


def count_flops(graph: ModelGraph, patches_per_image: int = 18) -> ComplexityReport:
    """Complexity report with MAC/FLOP totals for one patch (one pixel for
    per-pixel models) and for a full image of patches_per_image patches."""
    params = count_params(graph)
    if graph.meta.get("kind") == "unet":
        side = graph.meta["config"]["patch_size"]
    else:
        side = 1  # per-pixel model: one application
    sizes = {"input": side}
    macs = 0
    for layer in graph.layers:
        s = sizes[layer.inputs[0]]
        if layer.kind in ("conv3", "conv1"):
            k = layer.kernel
            macs += s * s * layer.out_ch * layer.in_ch * k * k
        elif layer.kind == "upconv2":
            s *= 2
            macs += s * s * layer.out_ch * layer.in_ch * 4
        elif layer.kind == "dense":
            macs += s * s * layer.in_ch * layer.out_ch
        elif layer.kind == "maxpool2":
            if s % 2:
                raise InvalidConfig(f"odd spatial size {s} at {layer.name}")
            s //= 2
        sizes[layer.name] = s
    return ComplexityReport(
        np_total=params.np_total,
        trainable=params.trainable,
        non_trainable=params.non_trainable,
        macs_per_patch=macs,
        flops_per_patch=2 * macs,
        flops_per_image=patches_per_image * 2 * macs,
        patches_per_image=patches_per_image,
    )

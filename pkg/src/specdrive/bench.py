"""Latency characterization for preprocessing and inference.

Every enabled configuration (vectorization x worker threads) first has its
output checked against the reference configuration; disagreement raises
NonDeterministicOutput and no timing is reported. Thread-count variations
must match bitwise. Swapping the vectorized kernels for the naive reference
kernels is float-reassociation territory for the inference path, so there
the gate requires elementwise agreement within 1e-5 plus identical argmax
(the preprocessing stages are written to a canonical operation order and
must stay bitwise across both toggles).

Timed regions exclude file I/O. The timing loop itself is single threaded;
parallelism lives inside the benchmarked stages.
"""

from __future__ import annotations

import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingWeights, NonDeterministicOutput
from .mosaic import STAGE_NAMES, STAGE_TOTAL, MosaicLayout, preprocess_pipeline
from .model import ModelGraph, forward
from .quant import QuantizedGraph, qforward
from .tiling import PatchGrid, overlap_index, reconstruct

STAGE_INFER = "Inference"
STAGE_REBUILD = "Reconstruction"


@dataclass(frozen=True)
class BenchConfig:
    iterations: int = 1000
    warmup: int = 10
    threads: tuple[int, ...] = (1,)
    vectorized: tuple[bool, ...] = (True,)
    stages: tuple[str, ...] = STAGE_NAMES
    batch_size: int = 18
    watts: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if any(t < 1 for t in self.threads):
            raise ValueError("thread counts must be >= 1")
        if not self.threads or not self.vectorized:
            raise ValueError("need at least one thread count and one kernel mode")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        kw = {}
        for key in ("iterations", "warmup", "batch_size"):
            if key in d:
                kw[key] = int(d[key])
        if "threads" in d:
            t = d["threads"]
            kw["threads"] = tuple(t) if isinstance(t, (list, tuple)) else (int(t),)
        if "vectorized" in d:
            v = d["vectorized"]
            kw["vectorized"] = tuple(bool(b) for b in v) if isinstance(
                v, (list, tuple)
            ) else (bool(v),)
        if "stages" in d:
            kw["stages"] = tuple(d["stages"])
        if d.get("watts") is not None:
            kw["watts"] = float(d["watts"])
        return cls(**kw)


@dataclass
class StageStats:
    mean_ms: float
    median_ms: float
    p95_ms: float
    std_ms: float
    samples: int

    @classmethod
    def from_samples(cls, samples_ms: list[float]) -> "StageStats":
        a = np.asarray(samples_ms, np.float64)
        return cls(
            mean_ms=float(a.mean()),
            median_ms=float(np.median(a)),
            p95_ms=float(np.percentile(a, 95)),
            std_ms=float(a.std(ddof=1)) if a.size > 1 else 0.0,
            samples=int(a.size),
        )


@dataclass
class ConfigResult:
    vectorized: bool
    threads: int
    stages: dict[str, StageStats]
    total_mean_ms: float
    fps: float
    joules: float | None = None


@dataclass
class BenchReport:
    results: list[ConfigResult]
    speedup: dict[str, float] = field(default_factory=dict)
    determinism: str = "bitwise"
    pipeline_fps: float | None = None
    config: BenchConfig | None = None

    def best(self) -> ConfigResult:
        return min(self.results, key=lambda r: r.total_mean_ms)


def _config_key(vectorized: bool, threads: int) -> str:
    return f"vector={'on' if vectorized else 'off'},threads={threads}"


def _finalize(results, cfg: BenchConfig, determinism: str) -> BenchReport:
    baseline = None
    for r in results:  # prefer the unoptimized corner as speedup baseline
        if not r.vectorized and r.threads == 1:
            baseline = r
    if baseline is None:
        baseline = max(results, key=lambda r: r.total_mean_ms)
    speedup = {
        _config_key(r.vectorized, r.threads): baseline.total_mean_ms / r.total_mean_ms
        for r in results
    }
    return BenchReport(results=results, speedup=speedup, determinism=determinism,
                       config=cfg)


def bench_preprocess(
    cfg: BenchConfig,
    frame: np.ndarray,
    dark: np.ndarray,
    white: np.ndarray,
    layout: MosaicLayout | None = None,
) -> BenchReport:
    """Time the four-stage pipeline under every enabled configuration.

    All configurations must produce bitwise-identical cubes; that is checked
    before any timing is kept.
    """
    combos = [(v, t) for v in cfg.vectorized for t in cfg.threads]
    ref_cube = None
    for v, t in combos:
        cube = preprocess_pipeline(frame, dark, white, layout, threads=t,
                                   vectorized=v).cube
        if ref_cube is None:
            ref_cube = cube
        elif not np.array_equal(ref_cube, cube):
            raise NonDeterministicOutput(
                f"configuration {_config_key(v, t)} disagrees with "
                f"{_config_key(*combos[0])}"
            )

    results = []
    for v, t in combos:
        for _ in range(cfg.warmup):
            preprocess_pipeline(frame, dark, white, layout, threads=t, vectorized=v)
        samples: dict[str, list[float]] = {name: [] for name in STAGE_NAMES}
        for _ in range(cfg.iterations):
            res = preprocess_pipeline(frame, dark, white, layout, threads=t,
                                      vectorized=v)
            for name in STAGE_NAMES:
                samples[name].append(res.timings_ms[name])
        stages = {
            name: StageStats.from_samples(samples[name])
            for name in STAGE_NAMES
            if name in cfg.stages
        }
        total = sum(s.mean_ms for s in stages.values())
        results.append(
            ConfigResult(
                vectorized=v, threads=t, stages=stages, total_mean_ms=total,
                fps=1000.0 / total if total > 0 else float("inf"),
                joules=cfg.watts * total / 1000.0 if cfg.watts else None,
            )
        )
    return _finalize(results, cfg, determinism="bitwise")


def _run_patches(model, weights, patches, threads: int, naive: bool):
    if isinstance(model, QuantizedGraph):
        def one(p):
            return qforward(model, p, naive=naive)
    else:
        if weights is None:
            raise MissingWeights("float graph needs a weight dict")
        def one(p):
            return forward(model, p, weights, naive=naive)
    if threads <= 1:
        return [one(p) for p in patches]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, patches))


def bench_inference(
    cfg: BenchConfig,
    model: ModelGraph | QuantizedGraph,
    patches: list[np.ndarray],
    grid: PatchGrid,
    weights: dict | None = None,
    preprocess_ms: float | None = None,
) -> BenchReport:
    """Per-image latency: a batch of patches through the model plus
    probability-map reconstruction. With preprocess_ms, also reports the
    two-stage pipeline throughput 1 / max(stage means)."""
    batch = patches[: cfg.batch_size]
    oi = overlap_index(grid)
    combos = [(v, t) for v in cfg.vectorized for t in cfg.threads]

    ref = None
    determinism = "bitwise"
    for v, t in combos:
        probs = _run_patches(model, weights, batch, t, naive=not v)
        prob_map, labels = reconstruct(probs, grid, oi)
        if ref is None:
            ref = (v, prob_map, labels)
        elif v == ref[0]:
            if not (np.array_equal(ref[1], prob_map) and np.array_equal(ref[2], labels)):
                raise NonDeterministicOutput(
                    f"thread configuration {_config_key(v, t)} changed the output"
                )
        else:
            determinism = "bitwise across threads; <=1e-5 across kernel modes"
            if not np.allclose(ref[1], prob_map, atol=1e-5) or not np.array_equal(
                ref[2], labels
            ):
                raise NonDeterministicOutput(
                    f"kernel mode {_config_key(v, t)} disagrees beyond tolerance"
                )

    results = []
    for v, t in combos:
        for _ in range(cfg.warmup):
            _run_patches(model, weights, batch, t, naive=not v)
        infer_ms, rebuild_ms = [], []
        for _ in range(cfg.iterations):
            t0 = time.perf_counter()
            probs = _run_patches(model, weights, batch, t, naive=not v)
            t1 = time.perf_counter()
            reconstruct(probs, grid, oi)
            t2 = time.perf_counter()
            infer_ms.append((t1 - t0) * 1e3)
            rebuild_ms.append((t2 - t1) * 1e3)
        stages = {
            STAGE_INFER: StageStats.from_samples(infer_ms),
            STAGE_REBUILD: StageStats.from_samples(rebuild_ms),
        }
        total = sum(s.mean_ms for s in stages.values())
        results.append(
            ConfigResult(
                vectorized=v, threads=t, stages=stages, total_mean_ms=total,
                fps=1000.0 / total if total > 0 else float("inf"),
                joules=cfg.watts * total / 1000.0 if cfg.watts else None,
            )
        )
    report = _finalize(results, cfg, determinism=determinism)
    if preprocess_ms is not None:
        slowest = max(preprocess_ms, report.best().total_mean_ms)
        report.pipeline_fps = 1000.0 / slowest if slowest > 0 else float("inf")
    return report


def report_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    buf.write("vectorized,threads,stage,mean_ms,median_ms,p95_ms,std_ms,samples\n")
    for r in report.results:
        for name, s in r.stages.items():
            buf.write(
                f"{int(r.vectorized)},{r.threads},{name},{s.mean_ms:.4f},"
                f"{s.median_ms:.4f},{s.p95_ms:.4f},{s.std_ms:.4f},{s.samples}\n"
            )
        buf.write(
            f"{int(r.vectorized)},{r.threads},{STAGE_TOTAL},{r.total_mean_ms:.4f},"
            f",,,{next(iter(r.stages.values())).samples}\n"
        )
    return buf.getvalue()


def report_json(report: BenchReport) -> str:
    def cfg_dict(c: BenchConfig):
        return {
            "iterations": c.iterations, "warmup": c.warmup,
            "threads": list(c.threads), "vectorized": list(c.vectorized),
            "stages": list(c.stages), "batch_size": c.batch_size, "watts": c.watts,
        }

    payload = {
        "determinism": report.determinism,
        "pipeline_fps": report.pipeline_fps,
        "speedup": report.speedup,
        "config": cfg_dict(report.config) if report.config else None,
        "results": [
            {
                "vectorized": r.vectorized,
                "threads": r.threads,
                "total_mean_ms": r.total_mean_ms,
                "fps": r.fps,
                "joules": r.joules,
                "stages": {
                    n: {
                        "mean_ms": s.mean_ms, "median_ms": s.median_ms,
                        "p95_ms": s.p95_ms, "std_ms": s.std_ms, "samples": s.samples,
                    }
                    for n, s in r.stages.items()
                },
            }
            for r in report.results
        ],
    }
    return json.dumps(payload, indent=2)


def report_table(report: BenchReport) -> str:
    """Human-readable summary table."""
    lines = []
    for r in report.results:
        lines.append(f"[{_config_key(r.vectorized, r.threads)}]")
        for name, s in r.stages.items():
            lines.append(f"  {name:<24} {s.mean_ms:10.3f} ms  (p95 {s.p95_ms:.3f})")
        lines.append(f"  {STAGE_TOTAL:<24} {r.total_mean_ms:10.3f} ms  ({r.fps:.2f} FPS)")
        if r.joules is not None:
            lines.append(f"  {'Energy':<24} {r.joules:10.3f} J")
    lines.append(f"determinism gate: {report.determinism}")
    for key, s in report.speedup.items():
        lines.append(f"speedup {key}: {s:.2f}x")
    if report.pipeline_fps is not None:
        lines.append(f"two-stage pipeline: {report.pipeline_fps:.2f} FPS")
    return "\n".join(lines)

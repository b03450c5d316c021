"""Latency benchmark harness with nearest-rank percentile statistics."""

from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from . import rand
from .gesture_net import Network
from .pipeline import PipelineConfig, run_session

# published reference point for the same network on a 1.2 GHz embedded
# core: 0.351 s per image at 0.690 W (reported, never asserted here)
REFERENCE_NOTE = "reference: embedded-class core 351 ms / 0.690 W per image"


@dataclass
class BenchReport:
    op: str
    iterations: int
    warmup: int
    samples_ms: list
    environment: str = field(default_factory=platform.platform)
    power_w: float | None = None  # operator-supplied, optional

    def __post_init__(self):
        if self.iterations != len(self.samples_ms):
            raise ValueError("iterations must equal sample count")

    def stats(self) -> dict:
        arr = np.sort(np.asarray(self.samples_ms, dtype=np.float64))
        n = len(arr)

        def nearest_rank(q):
            return float(arr[max(1, int(np.ceil(q * n))) - 1])

        return {
            "mean": float(arr.mean()),
            "p50": nearest_rank(0.5),
            "p95": nearest_rank(0.95),
            "min": float(arr[0]),
            "max": float(arr[-1]),
        }

    def to_dict(self) -> dict:
        d = {
            "op": self.op,
            "iterations": self.iterations,
            "warmup": self.warmup,
            "samples_ms": list(self.samples_ms),
            "environment": self.environment,
            "reference": REFERENCE_NOTE,
        }
        d.update(self.stats())
        if self.power_w is not None:
            d["power_w"] = self.power_w
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def bench_forward(net: Network, iters: int = 100, warmup: int = 10, seed: int = 42) -> BenchReport:
    """Time single-image forward passes on a fixed random binary input."""
    if iters < 1 or warmup < 0:
        raise ValueError("need iters >= 1 and warmup >= 0")
    bits = rand.generator(seed, 3).integers(0, 2, size=(48, 48))
    x = bits.astype(np.float32)[None, None]
    for _ in range(warmup):
        net.forward(x)
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        net.forward(x)
        samples.append((time.perf_counter() - t0) * 1000.0)
    return BenchReport("forward", iters, warmup, samples)


def bench_pipeline(frames, cfg: PipelineConfig, iters: int = 1) -> BenchReport:
    """Replay a session `iters` times; samples are per-frame total_ms."""
    if iters < 1:
        raise ValueError("need iters >= 1")
    samples = []
    for _ in range(iters):
        report = run_session(frames, cfg)
        samples.extend(f.timings["total_ms"] for f in report.frames)
    return BenchReport("pipeline", len(samples), 0, samples)

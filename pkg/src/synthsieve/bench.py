"""Inference latency versus input resolution.

The stack is fully convolutional up to the pooled head, so the same weights
run at any input side: the benchmark just rebuilds the model view with the
scaled side round(224*r) per resolution factor r. Measurements run
single-threaded with warm-up runs discarded.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .models import Model, forward

BASE_SIDE = 224
MIN_SIDE = 32


@dataclass
class BenchmarkRow:
    factor: float
    side: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    reps: int


def benchmark_latency(model, factors, reps=30, warmup=3, seed=1234):
    """Time forward passes at each resolution factor; rows sorted by factor."""
    if reps < 10:
        raise ValueError(f"benchmark needs reps >= 10, got {reps}")
    rows = []
    for factor in sorted(factors):
        side = round(BASE_SIDE * factor)
        if side < MIN_SIDE:
            raise ValueError(
                f"resolution factor {factor} gives side {side} < {MIN_SIDE}")
        scaled = Model(replace(model.spec, input_side=side), mode="infer")
        image = np.random.default_rng(seed).random((side, side, 3), dtype=np.float32)
        for _ in range(warmup):
            forward(scaled, image)
        times = np.empty(reps, np.float64)
        for i in range(reps):
            start = time.perf_counter()
            forward(scaled, image)
            times[i] = (time.perf_counter() - start) * 1000.0
        rows.append(BenchmarkRow(
            factor=float(factor), side=side,
            mean_ms=float(times.mean()),
            p50_ms=float(np.percentile(times, 50)),
            p95_ms=float(np.percentile(times, 95)),
            reps=reps))
    return rows


BENCH_COLUMNS = ("factor", "side", "mean_ms", "p50_ms", "p95_ms", "reps")


def write_benchmark(rows, fh):
    fh.write("\t".join(BENCH_COLUMNS) + "\n")
    for r in rows:
        fh.write(f"{r.factor:g}\t{r.side}\t{r.mean_ms:.3f}\t{r.p50_ms:.3f}\t"
                 f"{r.p95_ms:.3f}\t{r.reps}\n")

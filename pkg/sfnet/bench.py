"""Wall-clock timings of the sparse attention branches against dense attention."""
from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .attention.sparse import DEFAULT_ALPHAS, SparseAttentionParams, dense_attention, init_sparse_attention, sparse_attention
from .config import BenchConfig
from .errors import ConfigurationError
from .nn.layers import Initializer
from .tensor.core import Precision, Tensor

logger = logging.getLogger("sfnet.bench")

# Largest accepted gap between the alpha=1 branch and dense attention.
DENSE_TOLERANCE = 1e-6


@dataclass
class BenchReport:
    n_tokens: int
    width: int
    iters: int
    precision: Precision
    branch_ms: dict[float, float] = field(default_factory=dict)
    sparse_ms: float = 0.0
    dense_ms: float = 0.0
    dense_deviation: float = 0.0

    def render(self) -> str:
        lines = [f"bench n={self.n_tokens} d={self.width} iters={self.iters} precision={self.precision.value}"]
        for alpha, ms in self.branch_ms.items():
            lines.append(f"branch alpha={Fraction(alpha).limit_denominator(100)} median_ms={ms:.3f}")
        lines.append(f"sparse all_branches median_ms={self.sparse_ms:.3f}")
        lines.append(f"dense median_ms={self.dense_ms:.3f}")
        lines.append(f"dense_deviation alpha=1 max_abs={self.dense_deviation:.3e}")
        return "\n".join(lines)

    @property
    def matches_dense(self) -> bool:
        return self.dense_deviation < DENSE_TOLERANCE


def median_ms(fn: Callable[[], object], iters: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(iters):
        start = time.perf_counter()
        fn()
        times.append((time.perf_counter() - start) * 1000.0)
    return statistics.median(times)


def _single_branch(p: SparseAttentionParams, alpha: float, init: Initializer) -> SparseAttentionParams:
    return SparseAttentionParams(
        w_q=p.w_q, w_k=p.w_k, w_v=p.w_v, w_o=p.w_o,
        branch_weights=init.constant((1,), 1.0),
        alphas=(alpha,),
    )


def run_bench(
    cfg: BenchConfig,
    precision: Precision = Precision.STANDARD,
    seed: int = 7,
    alphas: tuple[float, ...] = DEFAULT_ALPHAS,
) -> BenchReport:
    if cfg.n_tokens < 2 or cfg.width < 1 or cfg.iters < 1 or cfg.warmup < 0:
        raise ConfigurationError(
            f"bench needs n >= 2, d >= 1, iters >= 1, warmup >= 0 (got {cfg.n_tokens}, {cfg.width}, {cfg.iters}, {cfg.warmup})"
        )
    init = Initializer(seed, precision)
    params = init_sparse_attention(init, cfg.width, alphas)
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((cfg.n_tokens, cfg.width)), precision=precision)

    report = BenchReport(cfg.n_tokens, cfg.width, cfg.iters, precision)
    for alpha in alphas:
        single = _single_branch(params, alpha, init)
        report.branch_ms[alpha] = median_ms(lambda: sparse_attention(x, single), cfg.iters, cfg.warmup)
    report.sparse_ms = median_ms(lambda: sparse_attention(x, params), cfg.iters, cfg.warmup)
    report.dense_ms = median_ms(lambda: dense_attention(x, params), cfg.iters, cfg.warmup)

    full = _single_branch(params, 1.0, init)
    diff = sparse_attention(x, full).numpy().astype(np.float64) - dense_attention(x, params).numpy()
    report.dense_deviation = float(np.abs(diff).max())
    logger.info(
        "bench.done n=%d d=%d sparse_ms=%.3f dense_ms=%.3f deviation=%.3e",
        cfg.n_tokens, cfg.width, report.sparse_ms, report.dense_ms, report.dense_deviation,
    )
    return report

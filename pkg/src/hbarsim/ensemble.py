"""Monte-Carlo averaging over noise paths.

Paths are generated in fixed-size blocks.  Block ``b`` draws from its own
stream ``SeedSequence(master_seed, spawn_key=(b,))``, so the values of path
``i`` depend only on ``(master_seed, i)`` and never on how blocks are
scheduled across threads.  Per-path values are concatenated in path-index
order before any reduction, which makes every estimate bit-reproducible.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .noise import NoiseParams, NoisePath, sample_paths

BLOCK_SIZE = 4096

Observable = Callable[[NoisePath], np.ndarray]


@dataclass(frozen=True)
class EnsembleConfig:
    n_paths: int
    master_seed: int
    n_steps: int
    t_end: float

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValidationError("n_paths must be >= 1")
        if self.n_steps < 1:
            raise ValidationError("n_steps must be >= 1")
        if not self.t_end > 0:
            raise ValidationError("t_end must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ValidationError("master_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class EnsembleEstimate:
    mean: float
    std_error: float
    n_paths: int
    observable_name: str = ""
    seed: Optional[int] = None

    def z_score(self, expected):
        """Standardized deviation from ``expected``; 0 when both agree exactly."""
        diff = self.mean - expected
        if diff == 0:
            return 0.0
        if self.std_error == 0:
            return math.copysign(math.inf, diff)
        return diff / self.std_error

    def agrees_with(self, expected, n_sigma=3.0):
        return abs(self.z_score(expected)) <= n_sigma


@dataclass(frozen=True)
class VarianceDecomposition:
    """Double average of an observable split by the law of total variance.

    ``total_variance = expected_quantum_variance + variance_of_means``.
    """

    total_mean: float
    total_variance: float
    expected_quantum_variance: float
    variance_of_means: float
    mean_std_error: float
    total_variance_std_error: float
    expected_quantum_variance_std_error: float
    variance_of_means_std_error: float
    n_paths: int


def block_rng(master_seed: int, block: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(block,))
    return np.random.Generator(np.random.PCG64(seq))


def _default_workers():
    return min(8, os.cpu_count() or 1)


def evaluate_paths(
    config: EnsembleConfig,
    params: NoiseParams,
    observables,
    workers: Optional[int] = None,
):
    """Evaluate observables on every path, returned in path-index order.

    ``observables`` is a callable or a tuple of callables, each mapping a
    batch :class:`NoisePath` to one value per path.  Returns one array (or
    a tuple of arrays) of length ``config.n_paths``.
    """
    single = callable(observables)
    funcs = (observables,) if single else tuple(observables)
    n_blocks = -(-config.n_paths // BLOCK_SIZE)

    def run_block(b):
        count = min(BLOCK_SIZE, config.n_paths - b * BLOCK_SIZE)
        paths = sample_paths(
            params, config.t_end, config.n_steps, block_rng(config.master_seed, b), count
        )
        return [np.broadcast_to(np.asarray(f(paths), dtype=float), (count,)) for f in funcs]

    workers = workers or _default_workers()
    if workers == 1 or n_blocks == 1:
        blocks = [run_block(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run_block, range(n_blocks)))
    columns = tuple(np.concatenate([blk[k] for blk in blocks]) for k in range(len(funcs)))
    return columns[0] if single else columns


def _shifted(values):
    # Centering on the first sample keeps a constant sample exactly constant.
    ref = values[0]
    return ref, values - ref


def mean_and_error(values):
    """Sample mean and its standard error ``std(ddof=1) / sqrt(n)``."""
    values = np.asarray(values, dtype=float)
    n = values.size
    ref, dev = _shifted(values)
    mean = ref + np.mean(dev)
    if n < 2:
        return float(mean), 0.0
    return float(mean), float(np.std(dev, ddof=1) / math.sqrt(n))


def summarize(values, name="", seed=None) -> EnsembleEstimate:
    mean, err = mean_and_error(values)
    return EnsembleEstimate(mean, err, int(np.size(values)), name, seed)


def estimate(
    config: EnsembleConfig,
    params: NoiseParams,
    observable: Observable,
    name: str = "",
    workers: Optional[int] = None,
) -> EnsembleEstimate:
    """Mean of ``observable`` over ``config.n_paths`` noise paths."""
    values = evaluate_paths(config, params, observable, workers)
    return summarize(values, name or getattr(observable, "__name__", ""), config.master_seed)


def _jackknife_se(leave_one_out):
    n = leave_one_out.size
    if n < 2:
        return 0.0
    dev = leave_one_out - np.mean(leave_one_out)
    return float(math.sqrt((n - 1) / n * np.sum(dev * dev)))


def decompose_variance(path_means, path_vars) -> VarianceDecomposition:
    """Law-of-total-variance reduction of per-path quantum moments.

    ``variance_of_means`` uses the ``1/n`` normalization so that the
    decomposition equals the variance of the pooled distribution exactly on
    the given sample.  Standard errors are leave-one-out jackknife.
    """
    m = np.asarray(path_means, dtype=float)
    v = np.asarray(path_vars, dtype=float)
    n = m.size
    if v.size != n or n == 0:
        raise ValidationError("need equally many per-path means and variances")

    m_ref, dm = _shifted(m)
    v_ref, dv = _shifted(v)
    total_mean = m_ref + np.mean(dm)
    eq_var = v_ref + np.mean(dv)
    centered = dm - np.mean(dm)
    var_means = np.mean(centered * centered)
    total_var = eq_var + var_means

    if n < 2:
        return VarianceDecomposition(
            float(total_mean), float(total_var), float(eq_var), float(var_means),
            0.0, 0.0, 0.0, 0.0, n,
        )

    # leave-one-out statistics in O(n) from running sums
    s1, s2 = np.sum(centered), np.sum(centered * centered)
    loo_mean_c = (s1 - centered) / (n - 1)
    loo_var_means = (s2 - centered * centered) / (n - 1) - loo_mean_c * loo_mean_c
    loo_eq_var = (np.sum(dv) - dv) / (n - 1)
    loo_total = loo_eq_var + loo_var_means

    return VarianceDecomposition(
        total_mean=float(total_mean),
        total_variance=float(total_var),
        expected_quantum_variance=float(eq_var),
        variance_of_means=float(var_means),
        mean_std_error=float(np.std(dm, ddof=1) / math.sqrt(n)),
        total_variance_std_error=_jackknife_se(loo_total),
        expected_quantum_variance_std_error=_jackknife_se(loo_eq_var),
        variance_of_means_std_error=_jackknife_se(loo_var_means),
        n_paths=n,
    )


def estimate_variance_decomposed(
    config: EnsembleConfig,
    params: NoiseParams,
    per_path_mean: Observable,
    per_path_var: Observable,
    workers: Optional[int] = None,
) -> VarianceDecomposition:
    """Double average: quantum moments on each path, then over paths."""
    means, variances = evaluate_paths(config, params, (per_path_mean, per_path_var), workers)
    return decompose_variance(means, variances)

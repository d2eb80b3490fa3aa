"""Gaussian white noise on the Planck constant.

The effective Planck constant is ``hbar * (1 + eps(t))`` where ``eps`` is a
zero-mean Gaussian process, piecewise constant over a microscopic
correlation time ``delta_t`` with per-interval standard deviation ``sigma``.
On any time scale much longer than ``delta_t`` it acts as white noise of
strength ``tau = sigma**2 * delta_t``, so its running integral

    W(t) = int_0^t eps(t') dt'

is a Brownian motion with ``Var W(t) = tau * t``.  Every observable in this
package depends on the noise only through ``W``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from .errors import (
    BracketFailure,
    MissingCorrelationTime,
    NegativeTime,
    NonPositiveHorizon,
    StepBelowCorrelationTime,
    ValidationError,
)

PLANCK_TIME = 5.4e-44  # s
AGE_OF_UNIVERSE = 4.35e17  # s, 13.8 Gyr

_REL_TOL = 1e-12


@dataclass(frozen=True)
class PhysicalConstants:
    """SI constants used at the unit boundary.

    ``h`` defaults to the CODATA 2014 value, ``electronvolt`` to the matching
    CODATA 2014 elementary charge.
    """

    h: float = 6.626070040e-34  # J s
    hbar: Optional[float] = None  # J s, derived from h when omitted
    c: float = 299792458.0  # m/s
    electronvolt: float = 1.6021766208e-19  # J

    def __post_init__(self):
        for name in ("h", "c", "electronvolt"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        derived = self.h / (2 * math.pi)
        if self.hbar is None:
            object.__setattr__(self, "hbar", derived)
        elif not math.isclose(self.hbar, derived, rel_tol=_REL_TOL):
            raise ValidationError("hbar must equal h / (2 pi)")

    def joules_to_gev(self, energy):
        return energy / self.electronvolt / 1e9

    def energy_scale_gev(self, tau):
        """Energy scale ``hbar / tau`` in GeV."""
        if not tau > 0:
            raise ValidationError("tau must be positive to define an energy scale")
        return self.joules_to_gev(self.hbar / tau)


SI = PhysicalConstants()


@dataclass(frozen=True)
class NoiseParams:
    """Statistics of the fluctuation process.

    Give either ``tau`` alone, or ``sigma`` and ``delta_t`` (``tau`` is then
    derived), or all three consistently.
    """

    tau: Optional[float] = None
    delta_t: Optional[float] = None
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.delta_t is not None and not self.delta_t > 0:
            raise ValidationError("delta_t must be positive")
        if self.sigma is not None and self.sigma < 0:
            raise ValidationError("sigma must be non-negative")
        derived = None
        if self.delta_t is not None and self.sigma is not None:
            derived = self.sigma**2 * self.delta_t
        if self.tau is None:
            if derived is None:
                raise ValidationError("need tau, or both sigma and delta_t")
            object.__setattr__(self, "tau", derived)
        else:
            if not self.tau >= 0:
                raise ValidationError("tau must be non-negative")
            if derived is not None and not math.isclose(
                self.tau, derived, rel_tol=_REL_TOL, abs_tol=0.0
            ):
                raise ValidationError("tau must equal sigma**2 * delta_t")

    @classmethod
    def from_sigma(cls, sigma, delta_t):
        return cls(delta_t=delta_t, sigma=sigma)

    @property
    def has_microstructure(self):
        return self.delta_t is not None and self.sigma is not None


@dataclass(frozen=True)
class NoisePath:
    """One or more discretized realizations of ``eps`` and ``W``.

    ``times`` is the shared grid.  ``eps`` has shape ``(..., n_steps)`` and
    ``w`` shape ``(..., n_steps + 1)``; leading axes index paths.
    """

    times: np.ndarray
    eps: np.ndarray
    w: np.ndarray = field(repr=False)

    @property
    def n_steps(self):
        return self.times.size - 1

    @property
    def t_end(self):
        return float(self.times[-1])

    @property
    def w_end(self):
        return self.w[..., -1]

    def w_at(self, t):
        """``W`` at grid time ``t`` (must lie on the grid)."""
        i = int(np.searchsorted(self.times, t))
        for j in (i - 1, i):
            if 0 <= j < self.times.size and math.isclose(
                self.times[j], t, rel_tol=1e-12, abs_tol=1e-300
            ):
                return self.w[..., j]
        raise ValueError(f"t={t} is not a grid point")


def _check_time(t):
    if t < 0:
        raise NegativeTime(f"time must be non-negative, got {t}")


def _grid(params, t_end, n_steps):
    if not t_end > 0:
        raise NonPositiveHorizon(f"t_end must be positive, got {t_end}")
    if n_steps < 1:
        raise ValidationError(f"n_steps must be >= 1, got {n_steps}")
    dt = t_end / n_steps
    if params.delta_t is not None and dt < params.delta_t * (1 - _REL_TOL):
        raise StepBelowCorrelationTime(
            f"grid step {dt:g} s is below the correlation time {params.delta_t:g} s"
        )
    return np.linspace(0.0, t_end, n_steps + 1)


def sample_paths(params: NoiseParams, t_end: float, n_steps: int, rng, n_paths: int) -> NoisePath:
    """Draw ``n_paths`` independent noise paths on a uniform grid.

    Each cell holds the coarse-grained value of ``eps``: Gaussian with
    variance ``tau / dt``, which makes ``Var W(t) = tau * t`` exact at every
    grid point whatever the step.
    """
    times = _grid(params, t_end, n_steps)
    widths = np.diff(times)
    shape = (n_paths, n_steps)
    if params.tau == 0:
        eps = np.zeros(shape)
    else:
        eps = rng.standard_normal(shape) * np.sqrt(params.tau / widths)
    w = np.zeros((n_paths, n_steps + 1))
    np.cumsum(eps * widths, axis=-1, out=w[:, 1:])
    return NoisePath(times, eps, w)


def sample_path(params: NoiseParams, t_end: float, n_steps: int, rng) -> NoisePath:
    """Single-path version of :func:`sample_paths`.

    ``rng`` is a :class:`numpy.random.Generator` or a seed.
    """
    rng = np.random.default_rng(rng)
    batch = sample_paths(params, t_end, n_steps, rng, 1)
    return NoisePath(batch.times, batch.eps[0], batch.w[0])


def integrated_noise_variance(params: NoiseParams, t: float) -> float:
    _check_time(t)
    return params.tau * t


def damping_factor(omega, params: NoiseParams, t, order: Optional[int] = None):
    """Noise average of ``exp(-i omega W(t))``.

    With ``order=None`` this is ``exp(-omega**2 tau t / 2)``; an integer
    ``order`` returns the partial sum of its Taylor series up to that power.
    """
    _check_time(t)
    x = omega**2 * params.tau * t
    if order is None:
        return math.exp(-x / 2)
    if order < 0:
        raise ValidationError("order must be >= 0")
    term = 1.0
    terms = [term]
    for k in range(1, order + 1):
        term *= -x / (2 * k)
        terms.append(term)
    return math.fsum(terms)


def wick_damping_series(omega, params: NoiseParams, t, order: int):
    """Pair-contraction form of the same partial sum.

    Only even orders of the Dyson expansion survive the Gaussian average;
    the ``2k``-th contributes ``(2k-1)!!`` pairings of ``(tau t)`` each,
    weighted by ``(-omega**2)**k / (2k)!``.  Evaluated with exact integer
    combinatorics so it serves as an independent check on
    :func:`damping_factor`.
    """
    _check_time(t)
    if order < 0:
        raise ValidationError("order must be >= 0")
    x = omega**2 * params.tau * t
    terms = []
    for k in range(order + 1):
        pairings = math.prod(range(2 * k - 1, 0, -2))
        coeff = pairings / math.factorial(2 * k)
        terms.append(coeff * (-x) ** k)
    return math.fsum(terms)


def _log_erfc(x):
    # erfc(x) = erfcx(x) exp(-x^2) keeps the log finite far into the tail
    return math.log(special.erfcx(x)) - x * x


def log_negative_fluctuation_count(params: NoiseParams, T: float) -> float:
    if not params.has_microstructure:
        raise MissingCorrelationTime("need sigma and delta_t, not only tau")
    if not T > 0:
        raise NonPositiveHorizon("T must be positive")
    if params.sigma == 0:
        return -math.inf
    arg = 1.0 / math.sqrt(2 * params.sigma**2)
    return math.log(T / (2 * params.delta_t)) + _log_erfc(arg)


def negative_fluctuation_count(params: NoiseParams, T: float) -> float:
    """Expected number of intervals with ``eps < -1`` during a period ``T``.

    Such draws would make ``sqrt(1 + eps)`` imaginary.
    """
    return math.exp(log_negative_fluctuation_count(params, T))


def max_sigma(delta_t: float = PLANCK_TIME, T: float = AGE_OF_UNIVERSE, rtol: float = 1e-6) -> float:
    """Largest ``sigma`` for which fewer than one ``eps < -1`` draw is expected.

    Solves ``negative_fluctuation_count == 1`` by bisection on the log of
    the count.  If even ``sigma = 1`` gives fewer than one event the
    constraint never binds on ``(0, 1]``; a :class:`RuntimeWarning` is
    issued and ``inf`` returned.
    """
    if not (delta_t > 0 and T > 0):
        raise ValidationError("delta_t and T must be positive")

    def log_count(sigma):
        return log_negative_fluctuation_count(NoiseParams.from_sigma(sigma, delta_t), T)

    lo, hi = 1e-3, 1.0
    if log_count(hi) < 0:
        warnings.warn(
            f"count at sigma=1 is below one for T/delta_t={T / delta_t:g}; no bound",
            RuntimeWarning,
            stacklevel=2,
        )
        return math.inf
    if log_count(lo) > 0:
        raise BracketFailure("count exceeds one even at sigma=1e-3")
    return optimize.bisect(log_count, lo, hi, xtol=1e-300, rtol=rtol)

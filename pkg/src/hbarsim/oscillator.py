"""Coherent states of an oscillator or cavity mode under a fluctuating hbar.

The Hamiltonian only picks up the overall factor ``(1 + eps)``, so on a
single noise path the ladder operator rotates by the effective phase
``omega (t + W(t))`` and the photon number is untouched.  Averaging the
phase factor over the noise damps every oscillating moment.

Second moments come in two flavours, selected by ``moment_mode``:

``exact``
    strict noise average; ``cos(2 omega t)`` terms decay as
    ``exp(-2 omega**2 tau t)``.  This is what the Monte-Carlo oracle
    reproduces, and it is the default.
``paper``
    the same terms decaying as ``exp(-omega**2 tau t)``; kept to reproduce
    the printed moment and uncertainty formulas and the ``figure1`` curves.

First moments are identical in both modes.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import mpmath
import numpy as np
from scipy import optimize

from .ensemble import EnsembleConfig, EnsembleEstimate, evaluate_paths, summarize
from .errors import (
    BracketFailure,
    DegenerateNoise,
    InvalidMeasurementError,
    NegativeTime,
    UnattainablePrecision,
    ValidationError,
)
from .noise import SI, NoiseParams, PhysicalConstants


class MomentMode(str, enum.Enum):
    EXACT = "exact"
    PAPER = "paper"


@dataclass(frozen=True)
class CoherentStateSpec:
    """Coherent state ``|lambda>`` with real amplitude; natural units by default."""

    lam: float = 1.0
    omega: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0
    moment_mode: MomentMode = MomentMode.EXACT

    def __post_init__(self):
        if isinstance(self.lam, complex):
            raise ValidationError("lambda must be real")
        if not self.omega > 0:
            raise ValidationError("omega must be positive")
        if not (self.mass > 0 and self.hbar > 0):
            raise ValidationError("mass and hbar must be positive")
        object.__setattr__(self, "moment_mode", MomentMode(self.moment_mode))

    @property
    def length_unit(self):
        """``sqrt(hbar / (m omega))``."""
        return math.sqrt(self.hbar / (self.mass * self.omega))


@dataclass(frozen=True)
class CavitySpec:
    quality_factor: float
    omega: float

    def __post_init__(self):
        if not self.quality_factor > 0:
            raise ValidationError("quality factor must be positive")
        if not self.omega > 0:
            raise ValidationError("omega must be positive")

    @property
    def decay_time(self):
        return self.quality_factor / self.omega

    @classmethod
    def from_decay_time(cls, decay_time, omega):
        return cls(omega * decay_time, omega)


class Moments(NamedTuple):
    mean_x: float
    mean_p: float
    mean_x2: float
    mean_p2: float


def _check_time(t):
    if t < 0:
        raise NegativeTime(f"time must be non-negative, got {t}")


def _second_moment_rate(spec):
    return 2.0 if spec.moment_mode is MomentMode.EXACT else 1.0


def mean_ladder(spec: CoherentStateSpec, params: NoiseParams, t: float) -> complex:
    """Noise-averaged ``<a(t)>``."""
    _check_time(t)
    damping = math.exp(-spec.omega**2 * params.tau * t / 2)
    return spec.lam * complex(math.cos(spec.omega * t), -math.sin(spec.omega * t)) * damping


def coherent_moments(spec: CoherentStateSpec, params: NoiseParams, t: float) -> Moments:
    _check_time(t)
    w, u = spec.omega, spec.omega**2 * params.tau * t
    first = math.exp(-u / 2)
    g = math.exp(-_second_moment_rate(spec) * u)
    x_scale = spec.hbar / (spec.mass * w)
    p_scale = spec.mass * spec.hbar * w
    lam = spec.lam
    return Moments(
        mean_x=math.sqrt(2 * x_scale) * lam * math.cos(w * t) * first,
        mean_p=-math.sqrt(2 * p_scale) * lam * math.sin(w * t) * first,
        mean_x2=x_scale * (0.5 + lam**2 * (1 + math.cos(2 * w * t) * g)),
        mean_p2=p_scale * (0.5 + lam**2 * (1 - math.cos(2 * w * t) * g)),
    )


def position_momentum_variances(spec: CoherentStateSpec, params: NoiseParams, t: float):
    """Double-averaged ``(Var x, Var p)`` from the moments of ``coherent_moments``.

    Written in a cancellation-free form: without noise the excess over the
    ground-state value vanishes exactly rather than to rounding.
    """
    _check_time(t)
    w, u = spec.omega, spec.omega**2 * params.tau * t
    r = _second_moment_rate(spec)
    # 1 - g and g - first**2, with g = exp(-r u) and first**2 = exp(-u)
    one_minus_g = -math.expm1(-r * u)
    g_minus_first2 = math.exp(-u) * math.expm1(-(r - 1) * u)
    lam2 = spec.lam**2
    cos2, sin2 = math.cos(w * t) ** 2, math.sin(w * t) ** 2
    var_x = spec.hbar / (spec.mass * w) * (0.5 + lam2 * (one_minus_g + 2 * cos2 * g_minus_first2))
    var_p = spec.mass * spec.hbar * w * (0.5 + lam2 * (one_minus_g + 2 * sin2 * g_minus_first2))
    return var_x, var_p


def quadrature_variances(spec, params, t):
    """Variances of ``X = sqrt(hbar/2)(a + a^+)`` and ``Y = i sqrt(hbar/2)(a^+ - a)``."""
    var_x, var_p = position_momentum_variances(spec, params, t)
    mw = spec.mass * spec.omega
    return var_x * mw, var_p / mw


def uncertainty_product(spec: CoherentStateSpec, params: NoiseParams, t: float) -> float:
    """``Delta x Delta p`` of the double-averaged state.

    Paper mode evaluates ``(hbar/2) [1 + 2 lambda**2 (1 - exp(-omega**2 tau t))]``
    directly; exact mode takes the root of the variance product.
    """
    _check_time(t)
    if spec.moment_mode is MomentMode.PAPER:
        u = spec.omega**2 * params.tau * t
        return spec.hbar / 2 * (1 + 2 * spec.lam**2 * -math.expm1(-u))
    var_x, var_p = position_momentum_variances(spec, params, t)
    return math.sqrt(var_x * var_p)


def _check_same_mode(spec, cavity):
    if not math.isclose(spec.omega, cavity.omega, rel_tol=1e-12):
        raise ValidationError("coherent state and cavity must share the mode frequency")


def cavity_uncertainty_product(spec: CoherentStateSpec, cavity: CavitySpec, params: NoiseParams, t: float) -> float:
    """Uncertainty product with the amplitude leaking out as ``lambda exp(-t/t_c)``.

    The leak is applied adiabatically, which requires ``t_c >> tau``.
    """
    _check_time(t)
    _check_same_mode(spec, cavity)
    t_c = cavity.decay_time
    if t_c <= 100 * params.tau:
        warnings.warn(
            f"cavity decay time {t_c:g} s is not much larger than tau={params.tau:g} s",
            RuntimeWarning,
            stacklevel=2,
        )
    if spec.moment_mode is MomentMode.PAPER:
        u = spec.omega**2 * params.tau * t
        excess = 2 * spec.lam**2 * math.exp(-2 * t / t_c) * -math.expm1(-u)
        return spec.hbar / 2 * (1 + excess)
    leaked = replace(spec, lam=spec.lam * math.exp(-t / t_c))
    return uncertainty_product(leaked, params, t)


def peak_excess(x):
    """``x (2/(2+x))**((2+x)/x)``, the relative excess at the peak for ``x = Q omega tau``.

    Increases from 0 toward its supremum 2.
    """
    if x <= 0:
        raise ValidationError("x must be positive")
    return x * math.exp(-(1 + 2 / x) * math.log1p(x / 2))


PEAK_EXCESS_SUP = 2.0


def _cavity_x(cavity, params):
    x = cavity.quality_factor * cavity.omega * params.tau
    if not x > 0:
        raise DegenerateNoise("Q omega tau must be positive for an interior maximum")
    return x


def peak_time(cavity: CavitySpec, params: NoiseParams) -> float:
    """Time of the maximum of the cavity uncertainty product.

    Stationarity of ``exp(-2t/t_c) (1 - exp(-omega**2 tau t))`` gives
    ``exp(omega**2 tau t) = 1 + x/2`` with ``x = Q omega tau``.
    """
    x = _cavity_x(cavity, params)
    return cavity.decay_time * math.log1p(x / 2) / x


def peak_time_expansion(cavity: CavitySpec, params: NoiseParams) -> float:
    """Small-``x`` approximation ``t_c/2 - Q**2 tau / 8``."""
    return cavity.decay_time / 2 - cavity.quality_factor**2 * params.tau / 8


def peak_time_numeric(cavity: CavitySpec, params: NoiseParams, dps: int = 40, rtol: float = 1e-15) -> float:
    """Golden-section maximization of the cavity excess, in extended precision.

    Derivative-free and independent of :func:`peak_time`.  Extended
    precision is needed because a flat maximum located from function values
    in double precision is only good to about ``sqrt(eps)``.
    """
    x = _cavity_x(cavity, params)
    with mpmath.workdps(dps):
        xm = mpmath.mpf(x)

        def excess(s):  # s = t / t_c
            return mpmath.exp(-2 * s) * -mpmath.expm1(-xm * s)

        inv_phi = (mpmath.sqrt(5) - 1) / 2
        # the maximizer lies below 1/2 for every x > 0
        a, b = mpmath.mpf(0), mpmath.mpf(1)
        c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
        fc, fd = excess(c), excess(d)
        while b - a > rtol * (a + b) / 2:
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - inv_phi * (b - a)
                fc = excess(c)
            else:
                a, c, fc = c, d, fd
                d = a + inv_phi * (b - a)
                fd = excess(d)
        return float((a + b) / 2) * cavity.decay_time


def peak_product(spec: CoherentStateSpec, cavity: CavitySpec, params: NoiseParams) -> float:
    """Maximum of the cavity uncertainty product (printed-formula form)."""
    _check_same_mode(spec, cavity)
    x = _cavity_x(cavity, params)
    return spec.hbar / 2 * (1 + spec.lam**2 * peak_excess(x))


def cavity_bound(
    cavity: CavitySpec,
    lam: float,
    dhbar_over_hbar: float,
    constants: PhysicalConstants = SI,
    rtol: float = 1e-10,
):
    """Largest ``tau`` whose uncertainty peak stays below the measurement error.

    Inverts ``lam**2 peak_excess(Q omega tau) = dhbar_over_hbar`` by
    bisection in ``log x``.  Returns ``(tau_max [s], hbar/tau_max [GeV])``.
    """
    if not lam > 0:
        raise ValidationError("lambda must be positive")
    if not dhbar_over_hbar > 0:
        raise InvalidMeasurementError("relative measurement error must be positive")
    target = dhbar_over_hbar / lam**2
    if target >= PEAK_EXCESS_SUP:
        raise UnattainablePrecision(
            f"a peak of relative size {dhbar_over_hbar:g} is never reached; no tau excluded"
        )

    def g(log_x):
        return math.log(peak_excess(math.exp(log_x)) / target)

    lo, hi = math.log(1e-30), math.log(1e3)
    if g(lo) > 0:
        raise BracketFailure("target below the excess at x=1e-30")
    while g(hi) < 0:
        # f approaches its supremum only logarithmically; widen as needed
        hi += math.log(1e3)
        if hi > 690:
            raise BracketFailure("could not bracket the target")
    log_x = optimize.bisect(g, lo, hi, xtol=rtol * 1e-3, rtol=4 * np.finfo(float).eps)
    # xtol on log x is a relative tolerance on x
    tau_max = math.exp(log_x) / (cavity.quality_factor * cavity.omega)
    return tau_max, constants.energy_scale_gev(tau_max)


# -- Monte-Carlo oracle -----------------------------------------------------


class OscillatorEstimates(NamedTuple):
    mean_x: EnsembleEstimate
    mean_p: EnsembleEstimate
    mean_x2: EnsembleEstimate
    mean_p2: EnsembleEstimate
    ladder_real: EnsembleEstimate
    ladder_imag: EnsembleEstimate
    ladder_modulus: EnsembleEstimate
    number: EnsembleEstimate


def _per_path_moments(spec, t):
    w = spec.omega
    x_scale = spec.hbar / (spec.mass * w)
    p_scale = spec.mass * spec.hbar * w
    lam = spec.lam

    def phase(paths):
        return w * (t + paths.w_end)

    return {
        "mean_x": lambda p: math.sqrt(2 * x_scale) * lam * np.cos(phase(p)),
        "mean_p": lambda p: -math.sqrt(2 * p_scale) * lam * np.sin(phase(p)),
        "mean_x2": lambda p: x_scale * (0.5 + lam**2 * (1 + np.cos(2 * phase(p)))),
        "mean_p2": lambda p: p_scale * (0.5 + lam**2 * (1 - np.cos(2 * phase(p)))),
        "ladder_real": lambda p: lam * np.cos(phase(p)),
        "ladder_imag": lambda p: -lam * np.sin(phase(p)),
        # |lam exp(-i phase)|**2, identically lam**2 on every path
        "number": lambda p: np.abs(lam * np.exp(-1j * phase(p))) ** 2,
    }


def mc_oscillator(spec: CoherentStateSpec, params: NoiseParams, config: EnsembleConfig, workers=None) -> OscillatorEstimates:
    """Per-path coherent-state moments at ``t = config.t_end``, averaged over noise.

    ``ladder_modulus`` is ``|mean <a>|`` with a delta-method standard error.
    """
    t = config.t_end
    funcs = _per_path_moments(spec, t)
    names = list(funcs)
    columns = dict(zip(names, evaluate_paths(config, params, tuple(funcs.values()), workers)))
    seed = config.master_seed
    est = {k: summarize(v, k, seed) for k, v in columns.items()}

    re, im = est["ladder_real"].mean, est["ladder_imag"].mean
    modulus = math.hypot(re, im)
    if modulus > 0:
        linear = (re * columns["ladder_real"] + im * columns["ladder_imag"]) / modulus
        mod_se = summarize(linear).std_error
    else:
        mod_se = 0.0
    est["ladder_modulus"] = EnsembleEstimate(modulus, mod_se, config.n_paths, "ladder_modulus", seed)
    return OscillatorEstimates(**{k: est[k] for k in OscillatorEstimates._fields})

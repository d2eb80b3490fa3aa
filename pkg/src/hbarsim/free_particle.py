"""Massive free Gaussian packet under a fluctuating Planck constant.

On a fixed noise path the packet evolves exactly as in ordinary quantum
mechanics, but with the effective time ``s = t + W(t)`` in place of ``t``.
Closed forms below are the noise averages of the resulting moments.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ensemble import EnsembleConfig, EnsembleEstimate, VarianceDecomposition, estimate_variance_decomposed
from .errors import NegativeTime, ValidationError
from .noise import NoiseParams


@dataclass(frozen=True)
class GaussianPacket:
    """Momentum-space Gaussian ``exp(-(p - p_bar)**2 / (2 delta**2))``.

    Natural units by default.
    """

    p_bar: float = 1.0
    delta: float = 0.1
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValidationError("delta must be positive")
        if not self.mass > 0:
            raise ValidationError("mass must be positive")
        if not self.hbar > 0:
            raise ValidationError("hbar must be positive")

    @property
    def momentum_variance(self):
        return self.delta**2 / 2

    @property
    def initial_position_variance(self):
        return self.hbar**2 / (2 * self.delta**2)

    @property
    def velocity(self):
        return self.p_bar / self.mass


def _check_time(t):
    if t < 0:
        raise NegativeTime(f"time must be non-negative, got {t}")


def mean_displacement(packet: GaussianPacket, t: float) -> float:
    _check_time(t)
    return packet.velocity * t


def spread_growth(packet: GaussianPacket, params: NoiseParams, t: float) -> float:
    """Growth of the double-averaged squared position uncertainty since ``t=0``.

    Ballistic quantum spreading plus a diffusive term linear in ``t``.
    """
    _check_time(t)
    ballistic = packet.delta**2 / (2 * packet.mass**2) * t**2
    return ballistic + 2 * diffusion_coefficient(packet, params) * t


def diffusion_coefficient(packet: GaussianPacket, params: NoiseParams) -> float:
    return (packet.p_bar**2 + packet.delta**2 / 2) / (2 * packet.mass**2) * params.tau


def mean_free_path(packet: GaussianPacket, params: NoiseParams) -> float:
    """``(p_bar / m) tau``: the scattering length reading of the diffusion term."""
    return packet.velocity * params.tau


def _path_observables(packet, t):
    def quantum_mean(paths):
        return packet.velocity * (t + paths.w_end)

    def quantum_var_growth(paths):
        # the constant hbar^2/(2 delta^2) offset is dropped so that the
        # noiseless case reproduces the ballistic term bit for bit
        s = t + paths.w_end
        return packet.delta**2 / (2 * packet.mass**2) * s**2

    return quantum_mean, quantum_var_growth


def mc_spread_decomposition(packet, params, config: EnsembleConfig, workers=None) -> VarianceDecomposition:
    """Per-path moments at ``t = config.t_end`` reduced by the ensemble engine.

    ``total_variance`` is the spread growth, i.e. the position variance
    minus its initial value ``hbar**2 / (2 delta**2)``.
    """
    mean_f, var_f = _path_observables(packet, config.t_end)
    return estimate_variance_decomposed(config, params, mean_f, var_f, workers)


def mc_spread(packet: GaussianPacket, params: NoiseParams, config: EnsembleConfig, workers=None) -> EnsembleEstimate:
    """Monte-Carlo estimate of :func:`spread_growth` at ``config.t_end``."""
    dec = mc_spread_decomposition(packet, params, config, workers)
    return EnsembleEstimate(
        dec.total_variance,
        dec.total_variance_std_error,
        dec.n_paths,
        "spread_growth",
        config.master_seed,
    )


def mc_displacement(packet: GaussianPacket, params: NoiseParams, config: EnsembleConfig, workers=None) -> EnsembleEstimate:
    dec = mc_spread_decomposition(packet, params, config, workers)
    return EnsembleEstimate(
        dec.total_mean, dec.mean_std_error, dec.n_paths, "mean_displacement", config.master_seed
    )

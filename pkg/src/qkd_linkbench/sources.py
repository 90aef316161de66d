"""Photon-number statistics for the two emitter types driving the link.

A triggered molecular emitter is summarized by two measured moments: the
mean photon number per excitation pulse ``mu_mol`` and the zero-delay
intensity correlation ``g2_zero``.  Together they pin down a unique
photon-number distribution truncated at n = 2, which is the minimal model
consistent with both moments.  An attenuated laser is Poissonian with mean
``mu`` and may carry a weaker decoy intensity ``nu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpsModel",
    "WcpModel",
    "SourceModel",
    "PhotonNumberDist",
    "multi_photon_prob",
    "sps_number_dist",
    "wcp_number_dist",
]

# Poisson tail mass beyond n = 12 is below 1e-12 for mu <= 1.
DEFAULT_WCP_NMAX = 12


@dataclass(frozen=True)
class SpsModel:
    """Triggered single-photon emitter.

    mu_mol: mean photon number per pulse at the sender's output, in (0, 1].
    g2_zero: zero-delay second-order correlation, in [0, 1).
    """

    mu_mol: float
    g2_zero: float

    def __post_init__(self):
        if not 0.0 < self.mu_mol <= 1.0:
            raise ValueError(f"mu_mol must be in (0, 1], got {self.mu_mol}")
        if not 0.0 <= self.g2_zero < 1.0:
            raise ValueError(f"g2_zero must be in [0, 1), got {self.g2_zero}")


@dataclass(frozen=True)
class WcpModel:
    """Weak coherent pulses with mean photon number ``mu`` per pulse.

    ``nu`` is the optional decoy intensity, required to be weaker than the
    signal.
    """

    mu: float
    nu: float | None = None

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.nu is not None and not 0.0 < self.nu < self.mu:
            raise ValueError(f"nu must be in (0, mu), got {self.nu}")


SourceModel = SpsModel | WcpModel


def multi_photon_prob(sps: SpsModel) -> float:
    """Pair-emission probability per pulse, mu_mol**2 * g2(0) / 2."""
    return 0.5 * sps.mu_mol**2 * sps.g2_zero


@dataclass(frozen=True)
class PhotonNumberDist:
    """Discrete distribution of the photon number per pulse, n = 0..n_max."""

    probabilities: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")

    @property
    def n_max(self) -> int:
        return len(self.probabilities) - 1

    def mean(self) -> float:
        p = np.asarray(self.probabilities)
        return float(np.arange(len(p)) @ p)

    def second_factorial_moment(self) -> float:
        """<n(n-1)>, the numerator of the pulse-wise g2(0) estimate."""
        p = np.asarray(self.probabilities)
        n = np.arange(len(p))
        return float((n * (n - 1)) @ p)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw photon numbers by inverse CDF, one uniform per pulse."""
        cdf = np.cumsum(self.probabilities)
        u = rng.random(size)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)


def sps_number_dist(sps: SpsModel) -> PhotonNumberDist:
    """Three-point distribution matching mu_mol and g2_zero exactly.

    P(2) = mu^2 g2/2, P(1) = mu - 2 P(2), P(0) = 1 - P(1) - P(2); the mean
    equals mu_mol and 2 P(2)/mean^2 equals g2_zero by construction.
    """
    p2 = multi_photon_prob(sps)
    p1 = sps.mu_mol - 2.0 * p2
    p0 = 1.0 - p1 - p2
    if p1 < 0.0 or p0 < 0.0:
        raise ValueError(
            f"no truncated-at-2 distribution for mu_mol={sps.mu_mol}, "
            f"g2_zero={sps.g2_zero}: P(1)={p1}, P(0)={p0}"
        )
    return PhotonNumberDist((p0, p1, p2))


def wcp_number_dist(wcp: WcpModel, n_max: int = DEFAULT_WCP_NMAX) -> PhotonNumberDist:
    """Poisson(mu) truncated at n_max, tail mass folded into P(n_max)."""
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    mu = wcp.mu
    probs = [math.exp(-mu) * mu**n / math.factorial(n) for n in range(n_max)]
    probs.append(max(0.0, 1.0 - sum(probs)))
    return PhotonNumberDist(tuple(probs))

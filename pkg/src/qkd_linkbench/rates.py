"""Closed-form QBER and secret-key-rate models for the BB84 link.

Source conventions
------------------
``mu_mol`` and ``mu`` refer to the sender's output, upstream of the
variable attenuators that emulate channel loss.  Those attenuators sit
inside the sender's station, so for the single-photon source the
photon-number distribution entering the untrusted section is binomially
thinned: the pair probability entering the channel scales with
``eta_channel**2`` while the click probability scales linearly.  The
laser-source bounds (decoy and no-decoy) instead follow the standard
deployment-referenced convention in which every multi-photon emission at
the source is counted against the key.

QBER models
-----------
SPS:  (P_D/2 + e_det * eta * mu_mol) / (P_D + eta * mu_mol)
WCP:  (P_D/2 + e_det * (1 - exp(-eta*mu))) / (P_D + 1 - exp(-eta*mu))

with eta = eta_bob * eta_channel.  Dark counts land on either bit value
with probability 1/2, which drives both models to 0.5 at high loss.

Key-rate models (per pulse; multiply by the repetition rate for bits/s)
-----------------------------------------------------------------------
SPS:        q * P_click * [beta * tau(E) - f * H(E)]
            P_click = mu_mol*eta + P_D,  beta = (P_click - P_m)/P_click,
            P_m = (mu_mol * eta_channel)**2 * g2(0) / 2
WCP plain:  q * Q_mu * [Omega * (1 - H(E/Omega)) - f * H(E)]
            Omega = (Q_mu - p_multi)/Q_mu, p_multi = 1 - (1+mu) exp(-mu)
WCP decoy:  q * [Q_1 * (1 - H(e_1)) - Q_mu * f * H(E)]
            Q_1 = (P_D + eta) mu exp(-mu),  e_1 = (P_D/2 + e_det*eta)/(P_D + eta)

where H is the binary entropy and tau(x) = -log2(1/2 + 2x - 2x^2) is the
privacy-amplification compression of the single-photon fraction.
Negative values clamp to zero so that loss sweeps cross the cutoff
smoothly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .sources import SpsModel, SourceModel, WcpModel, multi_photon_prob

__all__ = [
    "LinkParams",
    "RatePoint",
    "binary_entropy",
    "tau_privacy",
    "channel_from_db",
    "qber_sps",
    "qber_wcp",
    "skr_sps",
    "skr_wcp_no_decoy",
    "skr_wcp_decoy",
    "sweep_loss",
    "rate_for",
    "model_label",
]


@dataclass(frozen=True)
class LinkParams:
    """Optical-link and protocol parameters.

    eta_channel: channel transmittance (linear, 0..1)
    eta_bob: receiver efficiency, optics times detector (linear, 0..1)
    p_dark: total dark-count probability per pulse, summed over detectors
    e_det: detection error probability (capped at 0.5 so QBER stays <= 1/2)
    rep_rate: pulse repetition frequency in Hz
    sift_factor: sifting ratio q (1/2 for symmetric basis choice)
    f_ec: error-correction inefficiency, >= 1
    """

    eta_bob: float
    p_dark: float
    e_det: float
    rep_rate: float
    eta_channel: float = 1.0
    sift_factor: float = 0.5
    f_ec: float = 1.1

    def __post_init__(self):
        for name in ("eta_channel", "eta_bob", "p_dark"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 <= self.e_det <= 0.5:
            raise ValueError(f"e_det must be in [0, 0.5], got {self.e_det}")
        if not self.rep_rate > 0.0:
            raise ValueError(f"rep_rate must be positive, got {self.rep_rate}")
        if not 0.0 < self.sift_factor <= 1.0:
            raise ValueError(f"sift_factor must be in (0, 1], got {self.sift_factor}")
        if not self.f_ec >= 1.0:
            raise ValueError(f"f_ec must be >= 1, got {self.f_ec}")

    @property
    def eta(self) -> float:
        """Total transmittance between source output and detection."""
        return self.eta_bob * self.eta_channel

    @property
    def loss_db(self) -> float:
        """Channel loss in dB implied by eta_channel."""
        if self.eta_channel == 0.0:
            return math.inf
        return -10.0 * math.log10(self.eta_channel)


@dataclass(frozen=True)
class RatePoint:
    """One evaluated point of a rate model."""

    loss_db: float
    qber: float
    p_click: float
    skr_per_pulse: float
    skr_bps: float


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy H(x) in bits, with H(0) = H(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary_entropy argument must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -(x * math.log2(x) + (1.0 - x) * math.log2(1.0 - x))


def tau_privacy(x: float) -> float:
    """Privacy-amplification compression -log2(1/2 + 2x - 2x^2) on [0, 0.5]."""
    if not 0.0 <= x <= 0.5:
        raise ValueError(f"tau_privacy argument must be in [0, 0.5], got {x}")
    return -math.log2(0.5 + 2.0 * x - 2.0 * x * x)


def channel_from_db(link: LinkParams, loss_db: float, includes_bob: bool = False) -> LinkParams:
    """Return a copy of ``link`` with eta_channel set from a dB loss value.

    With ``includes_bob`` the dB value is the total loss; the receiver part
    is divided out (clamped so eta_channel stays <= 1).
    """
    if loss_db < 0.0:
        raise ValueError(f"loss must be >= 0 dB, got {loss_db}")
    t = 10.0 ** (-loss_db / 10.0)
    if includes_bob:
        if link.eta_bob == 0.0:
            raise ValueError("includes_bob requires eta_bob > 0")
        t = min(1.0, t / link.eta_bob)
    return replace(link, eta_channel=t)


def qber_sps(link: LinkParams, sps: SpsModel) -> float:
    """Expected sifted-key error rate for the single-photon source."""
    signal = link.eta * sps.mu_mol
    denom = link.p_dark + signal
    if denom == 0.0:
        raise ValueError("degenerate link: no dark counts and no transmission")
    return (0.5 * link.p_dark + link.e_det * signal) / denom


def qber_wcp(link: LinkParams, wcp: WcpModel) -> float:
    """Expected sifted-key error rate for the Poissonian laser source."""
    signal = -math.expm1(-link.eta * wcp.mu)  # 1 - exp(-eta mu)
    denom = link.p_dark + signal
    if denom == 0.0:
        raise ValueError("degenerate link: no dark counts and no transmission")
    return (0.5 * link.p_dark + link.e_det * signal) / denom


def skr_sps(link: LinkParams, sps: SpsModel, qber: float | None = None) -> RatePoint:
    """Secret key rate of the single-photon source.

    ``qber`` overrides the modelled error rate, e.g. to evaluate the rate
    at a measured value instead of the dark-count model.
    """
    if qber is None:
        qber = qber_sps(link, sps)
    p_click = sps.mu_mol * link.eta + link.p_dark
    # Trusted sender-side attenuation thins the pair probability quadratically.
    p_m = multi_photon_prob(sps) * link.eta_channel**2
    if p_m >= p_click or p_click == 0.0:
        per_pulse = 0.0
    else:
        beta = (p_click - p_m) / p_click
        per_pulse = link.sift_factor * p_click * (
            beta * tau_privacy(qber) - link.f_ec * binary_entropy(qber)
        )
        per_pulse = max(0.0, per_pulse)
    return RatePoint(link.loss_db, qber, p_click, per_pulse, per_pulse * link.rep_rate)


def skr_wcp_no_decoy(link: LinkParams, wcp: WcpModel) -> RatePoint:
    """Secret key rate of the laser source without decoy states.

    Every multi-photon emission is counted as tagged, so the single-photon
    fraction Omega collapses quickly with loss when mu is of order one.
    """
    q_mu = link.p_dark - math.expm1(-link.eta * wcp.mu)
    e_mu = qber_wcp(link, wcp)
    p_multi = 1.0 - math.exp(-wcp.mu) * (1.0 + wcp.mu)
    per_pulse = 0.0
    if q_mu > p_multi:
        omega = (q_mu - p_multi) / q_mu
        e_one = e_mu / omega
        if e_one <= 0.5:
            per_pulse = link.sift_factor * q_mu * (
                omega * (1.0 - binary_entropy(e_one)) - link.f_ec * binary_entropy(e_mu)
            )
            per_pulse = max(0.0, per_pulse)
    return RatePoint(link.loss_db, e_mu, q_mu, per_pulse, per_pulse * link.rep_rate)


def skr_wcp_decoy(link: LinkParams, wcp: WcpModel) -> RatePoint:
    """Secret key rate of the laser source with vacuum+weak decoy bounds.

    Uses the asymptotic one-photon gain and error,
    Q_1 = (P_D + eta) mu exp(-mu) and e_1 = (P_D/2 + e_det eta)/(P_D + eta),
    i.e. perfect decoy-state estimation rather than finite statistics.
    """
    if wcp.nu is None:
        raise ValueError("decoy rate requires a decoy intensity nu")
    q_mu = link.p_dark - math.expm1(-link.eta * wcp.mu)
    e_mu = qber_wcp(link, wcp)
    e_one = (0.5 * link.p_dark + link.e_det * link.eta) / (link.p_dark + link.eta)
    q_one = (link.p_dark + link.eta) * wcp.mu * math.exp(-wcp.mu)
    per_pulse = link.sift_factor * (
        q_one * (1.0 - binary_entropy(e_one)) - q_mu * link.f_ec * binary_entropy(e_mu)
    )
    per_pulse = max(0.0, per_pulse)
    return RatePoint(link.loss_db, e_mu, q_mu, per_pulse, per_pulse * link.rep_rate)


def rate_for(link: LinkParams, model: SourceModel) -> RatePoint:
    """Dispatch to the rate matching the source model kind."""
    if isinstance(model, SpsModel):
        return skr_sps(link, model)
    if isinstance(model, WcpModel):
        if model.nu is not None:
            return skr_wcp_decoy(link, model)
        return skr_wcp_no_decoy(link, model)
    raise TypeError(f"unsupported source model {model!r}")


def model_label(model: SourceModel) -> str:
    if isinstance(model, SpsModel):
        return "sps"
    if isinstance(model, WcpModel):
        return "wcp-decoy" if model.nu is not None else "wcp-no-decoy"
    raise TypeError(f"unsupported source model {model!r}")


def sweep_loss(
    link: LinkParams,
    models: list[SourceModel],
    loss_grid_db: list[float],
    labels: list[str] | None = None,
    includes_bob: bool = False,
) -> list[tuple[str, RatePoint]]:
    """Evaluate every model over a strictly increasing dB loss grid.

    Returns (label, RatePoint) rows, model-major then grid order.  With
    ``includes_bob`` the grid values are total losses, otherwise channel
    losses with eta_bob applied on top.
    """
    grid = list(loss_grid_db)
    if not grid:
        raise ValueError("loss grid is empty")
    if any(db < 0.0 for db in grid):
        raise ValueError("loss grid values must be >= 0 dB")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("loss grid must be strictly increasing")
    if labels is None:
        labels = [model_label(m) for m in models]
    if len(labels) != len(models):
        raise ValueError("labels and models must have equal length")
    rows = []
    for label, model in zip(labels, models):
        for db in grid:
            pt = rate_for(channel_from_db(link, db, includes_bob), model)
            rows.append((label, RatePoint(db, pt.qber, pt.p_click, pt.skr_per_pulse, pt.skr_bps)))
    return rows

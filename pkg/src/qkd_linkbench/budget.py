"""Source-efficiency accounting and the state-fidelity metric.

The measured mean photon number per pulse decomposes as

    mu_mol = eta_opt_alice * eta_col * eta_mol,
    eta_mol = QY * eta_pump * ON,

with the sender-side optics transmittance, the geometric collection
efficiency, the emitter quantum yield, the pumping efficiency and the
fraction of excitation cycles outside the dark shelving state.  Inverting
the chain extracts QY from a measured mu_mol; running it forward with
idealized (starred) factors extrapolates the reference mean photon number
mu_ref attainable after setup optimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EfficiencyBudget",
    "pump_efficiency",
    "extract_qy",
    "extrapolate_mu_ref",
    "fidelity",
    "ideal_outcome_matrix",
]


@dataclass(frozen=True)
class EfficiencyBudget:
    """One set of factors of the efficiency chain.

    All efficiencies are linear factors in [0, 1]; ``sat_param`` is the
    dimensionless pump power ratio s = P/p_S and may exceed one.  ``qy``
    is optional: it is an output of extraction and an input of
    extrapolation.
    """

    eta_opt_alice: float
    eta_col: float
    eta_pump: float
    on_frac: float
    p_exc_inf: float = 1.0
    sat_param: float = 0.0
    qy: float | None = None

    def __post_init__(self):
        for name in ("eta_opt_alice", "eta_col", "eta_pump", "on_frac", "p_exc_inf"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.sat_param < 0.0:
            raise ValueError(f"sat_param must be >= 0, got {self.sat_param}")
        if self.qy is not None and not 0.0 <= self.qy <= 1.0:
            raise ValueError(f"qy must be in [0, 1], got {self.qy}")


def pump_efficiency(p_exc_inf: float, sat_param: float,
                    measured_ratio: float | None = None) -> float:
    """Pumping efficiency p_exc_inf * R(P)/R_inf.

    The rate ratio defaults to the pure saturation value s/(1+s); pass a
    ``measured_ratio`` to use the observed R(P)/R_inf instead.
    """
    if sat_param < 0.0:
        raise ValueError("sat_param must be >= 0")
    ratio = measured_ratio if measured_ratio is not None else sat_param / (1.0 + sat_param)
    return p_exc_inf * ratio


def extract_qy(mu_mol: float, b: EfficiencyBudget) -> float:
    """Quantum yield mu_mol / (eta_opt * eta_col * eta_pump * ON)."""
    denom = b.eta_opt_alice * b.eta_col * b.eta_pump * b.on_frac
    if denom <= 0.0:
        raise ValueError("efficiency chain contains a zero factor")
    return mu_mol / denom


def extrapolate_mu_ref(b: EfficiencyBudget) -> float:
    """Mean photon number from the factor product, using starred values.

    Requires ``qy`` to be set on the budget.
    """
    if b.qy is None:
        raise ValueError("extrapolation requires the quantum yield")
    return b.eta_opt_alice * b.eta_col * b.eta_pump * b.qy * b.on_frac


def _validate_matrix(m: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.shape != (4, 4):
        raise ValueError(f"{name} must be 4x4, got shape {a.shape}")
    if np.any(a < -1e-12):
        raise ValueError(f"{name} has negative entries")
    sums = a.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError(f"{name} rows must sum to 1, got {sums}")
    return np.clip(a, 0.0, None)


def fidelity(exp: np.ndarray, ideal: np.ndarray) -> float:
    """Mean Bhattacharyya coefficient of the four per-state rows.

    Both arguments are 4x4 row-normalized outcome distributions; the
    result lies in [0, 1], reaching 1 only for identical rows.
    """
    p = _validate_matrix(exp, "exp")
    r = _validate_matrix(ideal, "ideal")
    return float(np.mean(np.sqrt(p * r).sum(axis=1)))


def ideal_outcome_matrix(convention: str = "apparatus", basis_split: float = 0.5) -> np.ndarray:
    """Reference outcome matrix of a perfect apparatus.

    "sifted": each state maps entirely to its matched channel (identity).
    "apparatus": pre-sifting click distribution of a passive receiver; a
    prepared state keeps its matched-basis share on the correct detector
    and the wrong-basis share splits evenly, e.g. (1/2, 0, 1/4, 1/4) per
    row at a balanced splitting ratio.
    """
    if convention == "sifted":
        return np.eye(4)
    if convention != "apparatus":
        raise ValueError(f"unknown convention {convention!r}")
    if not 0.0 < basis_split < 1.0:
        raise ValueError("basis_split must be in (0, 1)")
    m = np.zeros((4, 4))
    for state in range(4):
        in_z = state < 2
        matched = (1.0 - basis_split) if in_z else basis_split
        wrong = basis_split if in_z else (1.0 - basis_split)
        m[state, state] = matched
        wrong_arm = (2, 3) if in_z else (0, 1)
        for det in wrong_arm:
            m[state, det] = wrong / 2.0
    return m

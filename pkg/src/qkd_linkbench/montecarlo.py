"""Pulse-level stochastic simulation of the four-state polarization link.

Per pulse: a photon number is drawn from the source distribution, each
photon independently survives the total transmittance, surviving photons
route to the receiver's two analyzer arms by a passive splitting ratio,
matched-basis photons land on the wrong detector with probability e_det,
wrong-basis photons land uniformly, and each of the four detectors adds an
independent dark click with probability P_D/4.  Sifting keeps pulses where
exactly one arm clicked and that arm matches the sender's basis; kept
pulses with both detectors firing are assigned a uniformly random bit
(squashing) and tallied separately.

Randomness comes from counter-based Philox streams keyed by the master
seed: pulses are processed in fixed-size batches and batch ``b`` draws
from counter block ``b << 128``, so tallies are bit-identical regardless
of how many workers process the batches.

Detector and state indexing is H=0, V=1, D=2, A=3; index // 2 is the
basis, index % 2 the bit value.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .photonstats import EmitterDynamics, TimeTagStream
from .rates import LinkParams
from .sources import (
    PhotonNumberDist,
    SourceModel,
    SpsModel,
    sps_number_dist,
    wcp_number_dist,
)

__all__ = ["SimConfig", "SimOutcome", "simulate_bb84", "outcome_matrix", "generate_timetags"]

STATE_NAMES = ("H", "V", "D", "A")

# Pulses per RNG batch.  Fixed: the batch grid is part of the determinism
# contract, worker counts only change who processes which batch.
BATCH_PULSES = 1 << 18


@dataclass(frozen=True)
class SimConfig:
    """Configuration of one simulation run.

    ``alice_states`` is either "uniform" (seeded random choice per pulse)
    or a string over HVDA cycled deterministically, e.g. "H" or "HVDA".
    ``basis_split`` is the probability that a photon is routed to the D/A
    analyzer.  Each detector dark-clicks with P_D/4 per pulse so the four
    detectors together reproduce the per-pulse dark probability.
    """

    source: SourceModel
    link: LinkParams
    n_pulses: int
    seed: int = 0
    basis_split: float = 0.5
    alice_states: str = "uniform"
    n_workers: int = 1

    def __post_init__(self):
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")
        if not 0.0 < self.basis_split < 1.0:
            raise ValueError("basis_split must be in (0, 1)")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if self.alice_states != "uniform":
            if not self.alice_states or any(c not in STATE_NAMES for c in self.alice_states):
                raise ValueError("alice_states must be 'uniform' or a string over HVDA")

    def state_pattern(self) -> np.ndarray | None:
        if self.alice_states == "uniform":
            return None
        return np.array([STATE_NAMES.index(c) for c in self.alice_states], dtype=np.int64)

    def number_dist(self) -> PhotonNumberDist:
        if isinstance(self.source, SpsModel):
            return sps_number_dist(self.source)
        return wcp_number_dist(self.source)


@dataclass
class SimOutcome:
    """Merged tallies of a simulation run."""

    n_pulses: int
    clicks_per_detector: np.ndarray
    sifted_bits: int
    sifted_errors: int
    double_clicks: int
    clicked_pulses: int
    outcome_matrix: np.ndarray  # input state x detector, click counts

    @property
    def empirical_gain(self) -> float:
        return self.clicked_pulses / self.n_pulses

    @property
    def empirical_qber(self) -> float | None:
        """Sifted error ratio; None marks the undefined zero-sample case."""
        if self.sifted_bits == 0:
            return None
        return self.sifted_errors / self.sifted_bits

    def merge(self, other: "SimOutcome") -> "SimOutcome":
        return SimOutcome(
            self.n_pulses + other.n_pulses,
            self.clicks_per_detector + other.clicks_per_detector,
            self.sifted_bits + other.sifted_bits,
            self.sifted_errors + other.sifted_errors,
            self.double_clicks + other.double_clicks,
            self.clicked_pulses + other.clicked_pulses,
            self.outcome_matrix + other.outcome_matrix,
        )


def _batch_rng(seed: int, salt: int, batch_index: int) -> np.random.Generator:
    bg = np.random.Philox(key=np.array([seed, salt], dtype=np.uint64),
                          counter=batch_index << 128)
    return np.random.Generator(bg)


def _simulate_batch(cfg: SimConfig, dist: PhotonNumberDist, batch_index: int,
                    start: int, count: int, salt: int) -> SimOutcome:
    rng = _batch_rng(cfg.seed, salt, batch_index)
    link = cfg.link
    eta = link.eta
    p_dark_each = link.p_dark / 4.0

    # Draw order is fixed; every draw happens unconditionally so the
    # stream layout never depends on outcomes.
    pattern = cfg.state_pattern()
    if pattern is None:
        alice = rng.integers(0, 4, count)
    else:
        alice = pattern[(start + np.arange(count)) % len(pattern)]
    n_photons = dist.sample(rng, count)
    survivors = rng.binomial(n_photons, eta)
    to_da = rng.binomial(survivors, cfg.basis_split)
    hv = survivors - to_da
    mis_hv = rng.binomial(hv, link.e_det)
    split_hv = rng.binomial(hv, 0.5)
    mis_da = rng.binomial(to_da, link.e_det)
    split_da = rng.binomial(to_da, 0.5)
    darks = rng.random((count, 4)) < p_dark_each
    squash = rng.integers(0, 2, count)

    alice_basis_z = alice < 2
    bit = alice & 1

    # Detector photon counts per arm: matched basis applies e_det, the
    # wrong basis splits uniformly.
    n_h = np.where(alice_basis_z, np.where(bit == 0, hv - mis_hv, mis_hv), split_hv)
    n_v = np.where(alice_basis_z, np.where(bit == 0, mis_hv, hv - mis_hv), hv - split_hv)
    n_d = np.where(~alice_basis_z, np.where(bit == 0, to_da - mis_da, mis_da), split_da)
    n_a = np.where(~alice_basis_z, np.where(bit == 0, mis_da, to_da - mis_da), to_da - split_da)

    clicks = np.empty((count, 4), dtype=bool)
    clicks[:, 0] = (n_h > 0) | darks[:, 0]
    clicks[:, 1] = (n_v > 0) | darks[:, 1]
    clicks[:, 2] = (n_d > 0) | darks[:, 2]
    clicks[:, 3] = (n_a > 0) | darks[:, 3]

    arm_z = clicks[:, 0] | clicks[:, 1]
    arm_x = clicks[:, 2] | clicks[:, 3]
    exactly_one = arm_z ^ arm_x
    kept = exactly_one & np.where(alice_basis_z, arm_z, arm_x)

    dbl_z = clicks[:, 0] & clicks[:, 1]
    dbl_x = clicks[:, 2] & clicks[:, 3]
    bit_z = np.where(dbl_z, squash, clicks[:, 1].astype(np.int64))
    bit_x = np.where(dbl_x, squash, clicks[:, 3].astype(np.int64))
    bob_bit = np.where(alice_basis_z, bit_z, bit_x)
    errors = kept & (bob_bit != bit)
    double_kept = kept & np.where(alice_basis_z, dbl_z, dbl_x)

    matrix = np.zeros((4, 4), dtype=np.int64)
    for det in range(4):
        matrix[:, det] = np.bincount(alice[clicks[:, det]], minlength=4)

    return SimOutcome(
        n_pulses=count,
        clicks_per_detector=clicks.sum(axis=0).astype(np.int64),
        sifted_bits=int(kept.sum()),
        sifted_errors=int(errors.sum()),
        double_clicks=int(double_kept.sum()),
        clicked_pulses=int((arm_z | arm_x).sum()),
        outcome_matrix=matrix,
    )


def simulate_bb84(cfg: SimConfig, salt: int = 0) -> SimOutcome:
    """Run the pulse simulation; identical (cfg, seed) gives identical
    tallies for any worker count."""
    dist = cfg.number_dist()
    n_batches = (cfg.n_pulses + BATCH_PULSES - 1) // BATCH_PULSES

    def run(b: int) -> SimOutcome:
        start = b * BATCH_PULSES
        count = min(BATCH_PULSES, cfg.n_pulses - start)
        return _simulate_batch(cfg, dist, b, start, count, salt)

    if cfg.n_workers == 1 or n_batches == 1:
        outcomes = [run(b) for b in range(n_batches)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.n_workers) as pool:
            outcomes = list(pool.map(run, range(n_batches)))
    total = outcomes[0]
    for o in outcomes[1:]:
        total = total.merge(o)
    return total


def outcome_matrix(cfg: SimConfig) -> np.ndarray:
    """Pre-sifting detection distribution, one row per prepared state.

    Runs one simulation per input state (same seed, state-specific
    substream) and normalizes each row of click counts to unit sum.
    """
    rows = np.zeros((4, 4), dtype=float)
    for state, name in enumerate(STATE_NAMES):
        sub = SimConfig(
            source=cfg.source,
            link=cfg.link,
            n_pulses=cfg.n_pulses,
            seed=cfg.seed,
            basis_split=cfg.basis_split,
            alice_states=name,
            n_workers=cfg.n_workers,
        )
        out = simulate_bb84(sub, salt=1 + state)
        row = out.outcome_matrix[state].astype(float)
        total = row.sum()
        if total == 0.0:
            raise ValueError(f"no clicks recorded for input state {name}")
        rows[state] = row / total
    return rows


def generate_timetags(
    dyn: EmitterDynamics,
    duration_s: float,
    rep_period_ns: float = 12.5,
    seed: int = 0,
) -> TimeTagStream:
    """Synthesize a two-channel split detection record of the emitter.

    Per excitation cycle the emitter, when not shelved in its dark state,
    emits a photon pair with probability mu^2 g2(0)/2 and a single photon
    with the complementary probability that keeps the per-cycle mean at
    mu.  Emission times add an exponential lifetime delay; every photon
    routes to one of the two channels with probability 1/2.  Shelving is a
    two-state telegraph process: dark dwells average tau_trap, emitting
    dwells average tau_trap * on/(1 - on), so the stationary emitting
    fraction equals on_fraction.
    """
    rep_period_ps = int(round(rep_period_ns * 1000.0))
    n_cycles = int(duration_s * 1e12 // rep_period_ps)
    if n_cycles < 1:
        raise ValueError("duration shorter than one excitation cycle")
    rng = np.random.default_rng(seed)
    cycle_t = np.arange(n_cycles, dtype=np.int64) * rep_period_ps

    if dyn.on_fraction >= 1.0:
        on = np.ones(n_cycles, dtype=bool)
    else:
        tau_off_ps = dyn.tau_trap_ns * 1000.0
        tau_on_ps = tau_off_ps * dyn.on_fraction / (1.0 - dyn.on_fraction)
        total_ps = n_cycles * rep_period_ps
        pair_ps = tau_on_ps + tau_off_ps
        n_seg = 2 * (int(total_ps / pair_ps * 2.0) + 16)
        while True:
            start_on = bool(rng.random() < dyn.on_fraction)
            means = np.empty(n_seg)
            means[0::2] = tau_on_ps if start_on else tau_off_ps
            means[1::2] = tau_off_ps if start_on else tau_on_ps
            dwells = rng.exponential(means)
            bounds = np.cumsum(dwells)
            if bounds[-1] >= total_ps:
                break
            n_seg *= 2  # rare: dwell draw fell short, redraw longer
        seg = np.searchsorted(bounds, cycle_t, side="right")
        on = (seg % 2 == 0) if start_on else (seg % 2 == 1)

    p_pair = dyn.mu**2 * dyn.g2_zero / 2.0
    p_single = dyn.mu - 2.0 * p_pair
    on_times = cycle_t[on]
    u = rng.random(len(on_times))
    pair_t = on_times[u < p_pair]
    single_t = on_times[(u >= p_pair) & (u < p_pair + p_single)]

    tau_c_ps = dyn.tau_c_ns * 1000.0
    emit = np.concatenate([single_t, pair_t, pair_t]).astype(float)
    emit += rng.exponential(tau_c_ps, len(emit))
    chan = (rng.random(len(emit)) < 0.5).astype(np.int64)

    times = np.round(emit).astype(np.int64)
    order = np.lexsort((chan, times))
    return TimeTagStream(chan[order], times[order], rep_period_ps)

"""Rate models, Monte Carlo simulation and photon-statistics analysis for
a polarization-encoded BB84 link driven by a triggered single-photon
source or an attenuated laser."""

from .budget import (
    EfficiencyBudget,
    extract_qy,
    extrapolate_mu_ref,
    fidelity,
    ideal_outcome_matrix,
    pump_efficiency,
)
from .fitting import FitProblem, FitResult, fit_qber_curve, grid_oracle, least_squares
from .montecarlo import SimConfig, SimOutcome, generate_timetags, outcome_matrix, simulate_bb84
from .photonstats import (
    EmitterDynamics,
    Histogram,
    TimeTagStream,
    coincidence_histogram,
    fit_g2_longtime,
    fit_g2_pulsed,
    fit_saturation,
    read_timetags,
    write_timetags,
)
from .rates import (
    LinkParams,
    RatePoint,
    binary_entropy,
    channel_from_db,
    qber_sps,
    qber_wcp,
    skr_sps,
    skr_wcp_decoy,
    skr_wcp_no_decoy,
    sweep_loss,
    tau_privacy,
)
from .sources import (
    PhotonNumberDist,
    SpsModel,
    WcpModel,
    multi_photon_prob,
    sps_number_dist,
    wcp_number_dist,
)

__version__ = "0.1.0"

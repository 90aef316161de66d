"""Command-line front end: config parsing and reproducible tabular output.

Subcommands
-----------
rates-sweep   evaluate every configured source model over a dB loss grid
simulate      run the pulse-level Monte Carlo and compare to the models
fit           g2 | g2long | saturation | qber fits on input files
budget        source-efficiency accounting and mu_ref extrapolation

Configuration is structured text (key = value under [section] headers)
with unit-suffixed keys for dimensioned quantities.  Unknown keys are
rejected.  All outputs are deterministic functions of (config, flags,
seed); numbers are serialized with 9 significant digits and CSV schemas
carry the version line ``# qkd-linkbench v1``.

Exit codes: 0 success, 2 configuration or input-format error, 3 numeric
failure, 4 fit non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import numpy as np

from . import budget as budget_mod
from . import fitting, montecarlo, photonstats, rates, sources

__all__ = ["main", "ConfigError"]

SCHEMA_LINE = "# qkd-linkbench v1"
SWEEP_COLUMNS = "model,loss_db,eta_total,qber,p_click,skr_per_pulse,skr_bps"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NO_CONVERGENCE = 4


class ConfigError(ValueError):
    """Invalid configuration or malformed input file."""


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _round9(x: float) -> float:
    return float(_fmt(x))


# --------------------------------------------------------------------------
# Configuration schema and parsing

_BUDGET_FACTORS = (
    "mu_mol", "eta_opt_alice", "eta_col", "p_exc_inf", "sat_param",
    "eta_pump", "pump_ratio_measured", "on_fraction", "qy",
    "eta_opt_star", "eta_col_star", "eta_pump_star",
)

_SCHEMA: dict[str, set[str]] = {
    "source": {"sps_mu_mol", "sps_g2_zero", "wcp_mu", "wcp_nu", "mu_ref"},
    "link": {"eta_bob", "eta_opt", "eta_det", "p_dark", "e_det", "e_det_wcp", "rep_rate_hz"},
    "protocol": {"sift_factor", "f_ec", "loss_includes_bob"},
    "sweep": {"loss_grid_db"},
    "simulate": {"source", "n_pulses", "seed", "basis_split", "alice_states", "n_workers"},
    "budget": set(_BUDGET_FACTORS) | {f"{k}_source" for k in _BUDGET_FACTORS},
}

_DEFAULT_PROVENANCE = {
    "mu_mol": "measured", "eta_opt_alice": "measured", "eta_col": "literature",
    "p_exc_inf": "literature", "sat_param": "measured", "eta_pump": "measured",
    "pump_ratio_measured": "measured", "on_fraction": "measured", "qy": "literature",
    "eta_opt_star": "assumed", "eta_col_star": "assumed", "eta_pump_star": "assumed",
}


def load_config(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    cfg: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        cfg[section] = {}
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            cfg[section][key] = value
    return cfg


def _get(cfg, section, key, conv, default=None, required=False):
    try:
        raw = cfg[section][key]
    except KeyError:
        if required:
            raise ConfigError(f"missing required key '{key}' in section [{section}]")
        return default
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"invalid value for [{section}] {key}: {raw!r}")


def _as_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(raw)


def _as_float_list(raw: str) -> list[float]:
    return [float(p) for p in raw.split(",") if p.strip()]


def parse_loss_grid(spec: str) -> list[float]:
    """Grid spec: 'start:stop:step' (stop exclusive) or comma list of dB."""
    spec = spec.strip()
    if not spec:
        raise ConfigError("empty loss grid")
    try:
        if ":" in spec:
            parts = [float(p) for p in spec.split(":")]
            if len(parts) != 3:
                raise ValueError(spec)
            grid = list(np.arange(parts[0], parts[1], parts[2]))
        else:
            grid = _as_float_list(spec)
    except ValueError:
        raise ConfigError(f"cannot parse loss grid {spec!r}")
    if not grid:
        raise ConfigError(f"loss grid {spec!r} is empty")
    return [float(g) for g in grid]


def link_from_config(cfg, e_det_override: float | None = None) -> rates.LinkParams:
    eta_bob = _get(cfg, "link", "eta_bob", float)
    if eta_bob is None:
        eta_opt = _get(cfg, "link", "eta_opt", float)
        eta_det = _get(cfg, "link", "eta_det", float)
        if eta_opt is None or eta_det is None:
            raise ConfigError("missing required key 'eta_bob' (or 'eta_opt' plus 'eta_det') in section [link]")
        eta_bob = eta_opt * eta_det
    try:
        return rates.LinkParams(
            eta_bob=eta_bob,
            p_dark=_get(cfg, "link", "p_dark", float, required=True),
            e_det=e_det_override if e_det_override is not None
            else _get(cfg, "link", "e_det", float, required=True),
            rep_rate=_get(cfg, "link", "rep_rate_hz", float, required=True),
            sift_factor=_get(cfg, "protocol", "sift_factor", float, 0.5),
            f_ec=_get(cfg, "protocol", "f_ec", float, 1.1),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _source_models(cfg):
    """Configured (label, model, e_det_override) triples in block order."""
    out = []
    mu_mol = _get(cfg, "source", "sps_mu_mol", float)
    g2 = _get(cfg, "source", "sps_g2_zero", float)
    wcp_mu = _get(cfg, "source", "wcp_mu", float)
    wcp_nu = _get(cfg, "source", "wcp_nu", float)
    mu_ref = _get(cfg, "source", "mu_ref", float)
    e_det_wcp = _get(cfg, "link", "e_det_wcp", float)
    try:
        if mu_mol is not None:
            out.append(("sps", sources.SpsModel(mu_mol, 0.0 if g2 is None else g2), None))
        if wcp_mu is not None:
            out.append(("wcp-no-decoy", sources.WcpModel(wcp_mu), e_det_wcp))
            if wcp_nu is not None:
                out.append(("wcp-decoy", sources.WcpModel(wcp_mu, wcp_nu), e_det_wcp))
        if mu_ref is not None:
            out.append(("sps-muref", sources.SpsModel(mu_ref, 0.0 if g2 is None else g2), None))
    except ValueError as exc:
        raise ConfigError(str(exc))
    if not out:
        raise ConfigError("no source model configured in section [source]")
    return out


# --------------------------------------------------------------------------
# Subcommands

def _write_output(text: str, out_path) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w") as fh:
            fh.write(text)


def _sweep_rows(cfg, grid, includes_bob) -> list[str]:
    lines = []
    for label, model, e_det_override in _source_models(cfg):
        link = link_from_config(cfg, e_det_override)
        for label_out, pt in rates.sweep_loss(link, [model], grid, labels=[label],
                                              includes_bob=includes_bob):
            var = rates.channel_from_db(link, pt.loss_db, includes_bob)
            lines.append(",".join([
                label_out, _fmt(pt.loss_db), _fmt(var.eta), _fmt(pt.qber),
                _fmt(pt.p_click), _fmt(pt.skr_per_pulse), _fmt(pt.skr_bps),
            ]))
    return lines


def cmd_rates_sweep(args) -> int:
    cfg = load_config(args.config)
    grid_spec = args.loss_grid or _get(cfg, "sweep", "loss_grid_db", str)
    if grid_spec is None:
        raise ConfigError("no loss grid: set [sweep] loss_grid_db or pass --loss-grid")
    grid = parse_loss_grid(grid_spec)
    includes_bob = (args.loss_includes_bob if args.loss_includes_bob is not None
                    else _get(cfg, "protocol", "loss_includes_bob", _as_bool, False))
    lines = [SCHEMA_LINE, SWEEP_COLUMNS]
    lines += _sweep_rows(cfg, grid, includes_bob)
    _write_output("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _simulate_model(cfg):
    kind = _get(cfg, "simulate", "source", str, "sps")
    mu_mol = _get(cfg, "source", "sps_mu_mol", float)
    g2 = _get(cfg, "source", "sps_g2_zero", float, 0.0)
    wcp_mu = _get(cfg, "source", "wcp_mu", float)
    wcp_nu = _get(cfg, "source", "wcp_nu", float)
    try:
        if kind == "sps":
            if mu_mol is None:
                raise ConfigError("missing required key 'sps_mu_mol' in section [source]")
            return kind, sources.SpsModel(mu_mol, g2), None
        if kind == "wcp":
            if wcp_mu is None:
                raise ConfigError("missing required key 'wcp_mu' in section [source]")
            return kind, sources.WcpModel(wcp_mu), _get(cfg, "link", "e_det_wcp", float)
        if kind == "wcp-nu":
            if wcp_nu is None:
                raise ConfigError("missing required key 'wcp_nu' in section [source]")
            return kind, sources.WcpModel(wcp_nu), _get(cfg, "link", "e_det_wcp", float)
    except ValueError as exc:
        raise ConfigError(str(exc))
    raise ConfigError(f"[simulate] source must be sps, wcp or wcp-nu, got {kind!r}")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    n_pulses = args.pulses if args.pulses is not None else _get(
        cfg, "simulate", "n_pulses", int, required=True)
    if n_pulses < 1:
        raise ConfigError(f"number of pulses must be >= 1, got {n_pulses}")
    seed = args.seed if args.seed is not None else _get(cfg, "simulate", "seed", int, 0)
    label, model, e_det_override = _simulate_model(cfg)
    link = link_from_config(cfg, e_det_override)
    try:
        sim = montecarlo.SimConfig(
            source=model,
            link=link,
            n_pulses=n_pulses,
            seed=seed,
            basis_split=_get(cfg, "simulate", "basis_split", float, 0.5),
            alice_states=_get(cfg, "simulate", "alice_states", str, "uniform"),
            n_workers=_get(cfg, "simulate", "n_workers", int, 1),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    out = montecarlo.simulate_bb84(sim)

    if isinstance(model, sources.SpsModel):
        qber = rates.qber_sps(link, model)
        p_click = model.mu_mol * link.eta + link.p_dark
    else:
        qber = rates.qber_wcp(link, model)
        p_click = link.p_dark - float(np.expm1(-link.eta * model.mu))

    z_gain = (out.empirical_gain - p_click) / max(
        (p_click * (1.0 - p_click) / n_pulses) ** 0.5, 1e-300)
    if out.empirical_qber is None:
        z_qber = None
    else:
        z_qber = (out.empirical_qber - qber) / max(
            (qber * (1.0 - qber) / out.sifted_bits) ** 0.5, 1e-300)

    report = {
        "schema": "qkd-linkbench v1",
        "source": label,
        "n_pulses": n_pulses,
        "seed": seed,
        "empirical": {
            "gain": _round9(out.empirical_gain),
            "qber": None if out.empirical_qber is None else _round9(out.empirical_qber),
            "sifted_bits": out.sifted_bits,
            "sifted_errors": out.sifted_errors,
            "double_clicks": out.double_clicks,
            "clicked_pulses": out.clicked_pulses,
            "clicks_per_detector": [int(c) for c in out.clicks_per_detector],
            "outcome_matrix": [[int(c) for c in row] for row in out.outcome_matrix],
        },
        "analytic": {"gain": _round9(p_click), "qber": _round9(qber)},
        "z_scores": {
            "gain": _round9(z_gain),
            "qber": None if z_qber is None else _round9(z_qber),
        },
    }
    _write_output(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _fit_report(res: fitting.FitResult) -> str:
    lines = [SCHEMA_LINE]
    names = res.param_names or tuple(f"p{i}" for i in range(len(res.params)))
    for name, value, sig in zip(names, res.params, res.sigma):
        lines.append(f"{name} = {_fmt(value)}")
        lines.append(f"{name}_sigma = {_fmt(sig)}")
    lines.append(f"residual_norm = {_fmt(res.residual_norm)}")
    lines.append(f"converged = {str(res.converged).lower()}")
    lines.append(f"iterations = {res.iterations}")
    return "\n".join(lines) + "\n"


def _load_histogram_input(args):
    """Accept either a timetag v1 file (histogrammed here) or histogram CSV."""
    with open(args.input) as fh:
        first = fh.readline()
    if first.startswith(photonstats.TIMETAG_HEADER):
        stream = photonstats.read_timetags(args.input)
        rep = args.rep_period_ps or stream.rep_period_ps
        bin_width = args.bin_width_ps or 100
        window = args.window_ps or 16 * rep
        if window % bin_width:
            raise ConfigError(
                f"bin width {bin_width} ps does not divide window {window} ps")
        return photonstats.coincidence_histogram(
            stream, bin_width, window, normalization=args.normalization), rep
    hist = photonstats.read_histogram_csv(args.input)
    rep = args.rep_period_ps or hist.rep_period_ps
    return hist, rep


def _load_xy_csv(path, n_columns=2):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not rows and line[0].isalpha():
                continue  # single header line ahead of the data
            parts = line.split(",")
            if len(parts) != n_columns:
                raise photonstats.FileFormatError(
                    f"{path}: line {lineno}: expected {n_columns} columns")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise photonstats.FileFormatError(
                    f"{path}: line {lineno}: malformed value in {line!r}")
    if not rows:
        raise photonstats.FileFormatError(f"{path}: no data rows")
    return np.asarray(rows)


def cmd_fit(args) -> int:
    if args.kind == "g2":
        hist, rep = _load_histogram_input(args)
        if rep is None:
            raise ConfigError("g2 fit on a histogram CSV requires --rep-period-ps")
        res = photonstats.fit_g2_pulsed(hist, rep)
    elif args.kind == "g2long":
        hist, _ = _load_histogram_input(args)
        res = photonstats.fit_g2_longtime(hist)
    elif args.kind == "saturation":
        pts = _load_xy_csv(args.input)
        res = photonstats.fit_saturation(pts)
    elif args.kind == "qber":
        if args.source_kind is None or args.mu is None:
            raise ConfigError("qber fit requires --source-kind and --mu")
        pts = _load_xy_csv(args.input)
        try:
            res = fitting.fit_qber_curve(pts, args.source_kind, args.mu,
                                         eta_bob=args.eta_bob)
        except ValueError as exc:
            raise ConfigError(str(exc))
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown fit kind {args.kind!r}")

    text = _fit_report(res)
    if args.kind == "saturation" and args.query_power is not None:
        extra = photonstats.saturation_queries(res, args.query_power, args.rep_rate_hz)
        for key in sorted(extra):
            text += f"query_{key} = {_fmt(extra[key])}\n"
    _write_output(text, args.out)
    return EXIT_OK if res.converged else EXIT_NO_CONVERGENCE


def _budget_values(cfg):
    if "budget" not in cfg:
        raise ConfigError("missing [budget] section")

    def req(key, conv=float):
        return _get(cfg, "budget", key, conv, required=True)

    mu_mol = req("mu_mol")
    eta_opt = req("eta_opt_alice")
    eta_cols = req("eta_col", _as_float_list)
    on_frac = req("on_fraction")
    p_exc_inf = _get(cfg, "budget", "p_exc_inf", float, 1.0)
    sat_param = _get(cfg, "budget", "sat_param", float, 0.0)
    ratio = _get(cfg, "budget", "pump_ratio_measured", float)
    eta_pump = _get(cfg, "budget", "eta_pump", float)
    if eta_pump is None:
        eta_pump = budget_mod.pump_efficiency(p_exc_inf, sat_param, ratio)
    qy_refs = _get(cfg, "budget", "qy", _as_float_list)
    stars = {
        "eta_opt_star": req("eta_opt_star"),
        "eta_col_star": req("eta_col_star"),
        "eta_pump_star": _get(cfg, "budget", "eta_pump_star", float, p_exc_inf),
    }
    return (mu_mol, eta_opt, eta_cols, on_frac, p_exc_inf, sat_param,
            eta_pump, qy_refs, stars)


def cmd_budget(args) -> int:
    cfg = load_config(args.config)
    (mu_mol, eta_opt, eta_cols, on_frac, p_exc_inf, sat_param,
     eta_pump, qy_refs, stars) = _budget_values(cfg)

    def src(key):
        return _get(cfg, "budget", f"{key}_source", str,
                    _DEFAULT_PROVENANCE.get(key, "assumed"))

    lines = [SCHEMA_LINE, "[budget]"]

    def emit(key, value, provenance):
        lines.append(f"{key} = {_fmt(value)}  ; source={provenance}")

    emit("mu_mol", mu_mol, src("mu_mol"))
    emit("eta_opt_alice", eta_opt, src("eta_opt_alice"))
    for i, ec in enumerate(eta_cols, start=1):
        emit(f"eta_col_{i}", ec, src("eta_col"))
    emit("p_exc_inf", p_exc_inf, src("p_exc_inf"))
    emit("sat_param", sat_param, src("sat_param"))
    emit("eta_pump", eta_pump, src("eta_pump"))
    emit("eta_pump_saturation_model",
         budget_mod.pump_efficiency(p_exc_inf, sat_param), "derived")
    emit("on_fraction", on_frac, src("on_fraction"))

    try:
        qy_derived = []
        for i, ec in enumerate(eta_cols, start=1):
            b = budget_mod.EfficiencyBudget(
                eta_opt_alice=eta_opt, eta_col=ec, eta_pump=eta_pump,
                on_frac=on_frac, p_exc_inf=p_exc_inf, sat_param=sat_param)
            qy_derived.append(min(budget_mod.extract_qy(mu_mol, b), 1.0))
            emit(f"qy_derived_{i}", qy_derived[-1], "derived")
        qy_used = qy_refs if qy_refs is not None else qy_derived
        for i, qy in enumerate(qy_used, start=1):
            emit(f"qy_ref_{i}", qy, src("qy") if qy_refs is not None else "derived")
        for key, value in stars.items():
            emit(key, value, src(key))
        mu_refs = []
        for i, qy in enumerate(qy_used, start=1):
            star = budget_mod.EfficiencyBudget(
                eta_opt_alice=stars["eta_opt_star"], eta_col=stars["eta_col_star"],
                eta_pump=stars["eta_pump_star"], on_frac=on_frac, qy=qy)
            mu_refs.append(budget_mod.extrapolate_mu_ref(star))
            emit(f"mu_ref_{i}", mu_refs[-1], "derived")
    except ValueError as exc:
        raise ConfigError(str(exc))

    # Comparison sweep: configured models plus one block per mu_ref value.
    if "source" in cfg and "link" in cfg:
        grid_spec = _get(cfg, "sweep", "loss_grid_db", str, "0")
        grid = parse_loss_grid(grid_spec)
        includes_bob = _get(cfg, "protocol", "loss_includes_bob", _as_bool, False)
        lines += ["", "[sweep]", SWEEP_COLUMNS]
        lines += _sweep_rows(cfg, grid, includes_bob)
        g2 = _get(cfg, "source", "sps_g2_zero", float, 0.0)
        link = link_from_config(cfg)
        for i, mu_ref in enumerate(mu_refs, start=1):
            model = sources.SpsModel(min(mu_ref, 1.0), g2)
            for label, pt in rates.sweep_loss(link, [model], grid,
                                              labels=[f"sps-muref-{i}"],
                                              includes_bob=includes_bob):
                var = rates.channel_from_db(link, pt.loss_db, includes_bob)
                lines.append(",".join([
                    label, _fmt(pt.loss_db), _fmt(var.eta), _fmt(pt.qber),
                    _fmt(pt.p_click), _fmt(pt.skr_per_pulse), _fmt(pt.skr_bps),
                ]))

    _write_output("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# Argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkd-linkbench",
        description="BB84 link rate models, Monte Carlo simulation and "
                    "photon-statistics fits",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("rates-sweep", help="rate models over a loss grid")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--loss-grid", help="'start:stop:step' or comma list of dB")
    p_sweep.add_argument("--loss-includes-bob", type=_as_bool, default=None,
                         metavar="BOOL",
                         help="grid is total loss instead of channel loss")
    p_sweep.add_argument("--out")
    p_sweep.set_defaults(func=cmd_rates_sweep)

    p_sim = sub.add_parser("simulate", help="pulse-level Monte Carlo run")
    p_sim.add_argument("config")
    p_sim.add_argument("--pulses", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--out")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="least-squares fits on input files")
    p_fit.add_argument("kind", choices=["g2", "g2long", "saturation", "qber"])
    p_fit.add_argument("input")
    p_fit.add_argument("--out")
    p_fit.add_argument("--bin-width-ps", type=int)
    p_fit.add_argument("--window-ps", type=int)
    p_fit.add_argument("--rep-period-ps", type=int)
    p_fit.add_argument("--normalization", default="lateral-peak-normalized",
                       choices=["raw", "lateral-peak-normalized"])
    p_fit.add_argument("--source-kind", choices=["sps", "wcp"])
    p_fit.add_argument("--mu", type=float)
    p_fit.add_argument("--eta-bob", type=float, default=1.0)
    p_fit.add_argument("--query-power", type=float)
    p_fit.add_argument("--rep-rate-hz", type=float)
    p_fit.set_defaults(func=cmd_fit)

    p_budget = sub.add_parser("budget", help="source-efficiency accounting")
    p_budget.add_argument("config")
    p_budget.add_argument("--out")
    p_budget.set_defaults(func=cmd_budget)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, photonstats.FileFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

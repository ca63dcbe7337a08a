"""Command-line front end.

Every command reads one JSON config and writes CSV/JSON files into ``--out``.
Exit codes: 0 success, 2 configuration error, 3 validation gap, 4 herald impossible.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analytic
from .analytic import AmplifierParams
from .errors import ConfigError, CutoffError, HeraldImpossibleError
from .fock import CutoffPolicy, FockDensity, choose_cutoff, coherent_state, displaced_thermal, wigner_grid
from .phase import PhaseStats, gain_and_gamma, mu_canonical, holevo_variance, phase_distribution, theta_grid
from .pipeline import MCConfig, acceptance_grid, amplify_exact, validate_grid
from .tomography import TomoConfig, fidelity, maxlik_run, sample_homodyne

log = logging.getLogger("phaseamp")

EXIT_OK, EXIT_CONFIG, EXIT_GAP, EXIT_HERALD = 0, 2, 3, 4
SPOT_CHECKS = 5
SPOT_CHECK_RTOL = 1e-5
DEFAULT_SEED = 42


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# -- config parsing -------------------------------------------------------------


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config key {key!r}")
    return cfg[key]


def _alpha(v) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict) and "abs" in v:
        return complex(float(v["abs"]) * math.cos(float(v.get("arg", 0.0))),
                       float(v["abs"]) * math.sin(float(v.get("arg", 0.0))))
    raise ConfigError(f"cannot read amplitude from {v!r}")


def _grid(v, name: str) -> list[float]:
    if isinstance(v, dict):
        try:
            vals = np.linspace(float(v["start"]), float(v["stop"]), int(v["num"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: expected {{start, stop, num}}") from exc
        vals = [float(x) for x in vals]
    elif isinstance(v, (list, tuple)):
        vals = [float(x) for x in v]
    else:
        vals = [float(v)]
    if not vals:
        raise ConfigError(f"{name} grid is empty")
    return vals


def _m_list(cfg: dict) -> list[int]:
    ms = cfg.get("M", [])
    ms = [ms] if isinstance(ms, int) else list(ms)
    if any(not isinstance(m, int) or m < 0 for m in ms):
        raise ConfigError("M must be a list of non-negative integers")
    return ms


def _params(cfg: dict, **override) -> AmplifierParams:
    try:
        return AmplifierParams(
            alpha=override.get("alpha", _alpha(_require(cfg, "alpha"))),
            n_th=float(override.get("n_th", cfg.get("n_th", 0.0))),
            T=float(cfg.get("T", 0.8)),
            eta=float(cfg.get("eta", 0.63)),
            M=int(override.get("M", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _policy(cfg: dict) -> CutoffPolicy:
    pol = cfg.get("cutoff", {})
    try:
        return CutoffPolicy(float(pol.get("tail_tol", 1e-10)), int(pol.get("hard_max", 256)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- commands ---------------------------------------------------------------------


def run_sweep(cfg: dict, out: Path, seed: int) -> int:
    """Gamma, gain and success probability versus added noise for each threshold M."""
    alpha = _alpha(_require(cfg, "alpha"))
    if alpha == 0:
        raise ConfigError("sweep needs a nonzero alpha")
    n_grid = _grid(_require(cfg, "n_th"), "n_th")
    ms = _m_list(cfg)
    if not ms:
        raise ConfigError("sweep needs at least one M")
    policy = _policy(cfg)
    rows = []
    exact = {}
    for M in ms:
        for n in n_grid:
            p = _params(cfg, alpha=alpha, n_th=n, M=M)
            gamma = analytic.normalized_variance(p)
            ps = analytic.success_probability(p)
            # no closed form for <a> of the heralded state: the gain comes from the Fock pipeline
            ex = amplify_exact(p, policy)
            exact[len(rows)] = ex
            rows.append((n, M, gamma, ex.stats.gain, ps))
    _write_csv(out / "sweep.csv", ("n_th", "M", "gamma", "gain", "ps"), rows)

    rng = np.random.default_rng(seed)
    picks = rng.choice(len(rows), size=min(SPOT_CHECKS, len(rows)), replace=False)
    worst = 0.0
    for i in sorted(int(k) for k in picks):
        _, _, gamma, _, ps = rows[i]
        ex = exact[i]
        worst = max(worst, abs(gamma / ex.stats.gamma - 1), abs(ps / ex.success_prob - 1))
    log.info("sweep: %d rows, worst spot-check gap %.3g", len(rows), worst)
    if worst > SPOT_CHECK_RTOL:
        print(f"oracle spot-check gap {worst:.3g} exceeds {SPOT_CHECK_RTOL:g}", file=sys.stderr)
        return EXIT_GAP
    return EXIT_OK


def _wigner_axes(cfg: dict):
    w = cfg.get("wigner", {})
    xs = _grid(w.get("x", {"start": -3, "stop": 3, "num": 121}), "wigner.x")
    ps = _grid(w.get("p", {"start": -3, "stop": 3, "num": 121}), "wigner.p")
    return np.array(xs), np.array(ps)


def _emit_state(out: Path, name: str, rho: FockDensity, stats: PhaseStats, xs, ps):
    _write_json(out / f"state_{name}.json", rho.to_dict())
    _write_json(out / f"stats_{name}.json", stats.to_dict())
    W = wigner_grid(rho, xs, ps)
    rows = [(x, p, W[j, i]) for i, x in enumerate(xs) for j, p in enumerate(ps)]
    _write_csv(out / f"wigner_{name}.csv", ("x", "p", "w"), rows)


def _input_state(alpha: complex, policy: CutoffPolicy) -> FockDensity:
    return coherent_state(alpha, max(choose_cutoff(alpha, 0.0, policy) + 1, 2))


def run_amplify(cfg: dict, out: Path, seed: int) -> int:
    """States, Wigner grids and phase statistics for the input and each heralded output."""
    alpha = _alpha(_require(cfg, "alpha"))
    ms = _m_list(cfg)
    policy = _policy(cfg)
    xs, ps = _wigner_axes(cfg)
    rho_in = _input_state(alpha, policy)
    mu = mu_canonical(rho_in)
    stats_in = gain_and_gamma(rho_in, alpha, policy) if alpha != 0 else PhaseStats(mu, holevo_variance(mu))
    _emit_state(out, "input", rho_in, stats_in, xs, ps)
    for M in ms:
        res = amplify_exact(_params(cfg, alpha=alpha, M=M), policy)
        _emit_state(out, f"M{M}", res.state, res.stats, xs, ps)
    return EXIT_OK


def run_phase_dist(cfg: dict, out: Path, seed: int) -> int:
    """Canonical phase distributions of the input, the noisy state and each heralded output."""
    alpha = _alpha(_require(cfg, "alpha"))
    n_th = float(cfg.get("n_th", 0.0))
    policy = _policy(cfg)
    thetas = theta_grid(int(cfg.get("points", 2048)))
    states = {"input": _input_state(alpha, policy)}
    if "n_th" in cfg:
        dim = choose_cutoff(alpha, n_th, policy) + 1
        states["noisy"] = displaced_thermal(alpha, n_th, max(dim, 2), tail_tol=policy.tail_tol)
    for M in _m_list(cfg):
        states[f"M{M}"] = amplify_exact(_params(cfg, alpha=alpha, M=M), policy).state
    for name, rho in states.items():
        _write_csv(out / f"phase_{name}.csv", ("theta", "p"), zip(thetas, phase_distribution(rho, thetas)))
    return EXIT_OK


def run_tomo(cfg: dict, out: Path, seed: int) -> int:
    """Sample homodyne data from a known state and reconstruct it by maximum likelihood."""
    st = cfg.get("state", {})
    alpha = _alpha(st.get("alpha", 0.4))
    n_th = float(st.get("n_th", 0.0))
    try:
        tcfg = TomoConfig(
            dim=int(cfg.get("dim", 12)),
            eta_hd=float(cfg.get("eta_hd", 1.0)),
            n_phase_bins=int(cfg.get("n_phase_bins", 12)),
            n_x_bins=int(cfg.get("n_x_bins", 64)),
            x_range=cfg.get("x_range"),
            max_iters=int(cfg.get("max_iters", 5000)),
            tol=float(cfg.get("tol", 1e-8)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    n = int(cfg.get("n_samples", 50000))
    truth = displaced_thermal(alpha, n_th, tcfg.dim)
    records = sample_homodyne(truth, n, tcfg.eta_hd, seed)
    _write_csv(out / "records.csv", ("theta", "x"), records)
    res = maxlik_run(records, tcfg)
    _write_json(out / "reconstructed.json", res.state.to_dict())
    fid = fidelity(truth, res.state)
    _write_json(out / "summary.json", {
        "fidelity": fid,
        "iterations": res.iterations,
        "converged": res.converged,
        "floored_bins": res.floored_bins,
        "loglik": res.loglik[-1],
    })
    print(f"fidelity {fid:.6f}")
    return EXIT_OK


def _validation_grid(cfg: dict) -> list[AmplifierParams]:
    g = cfg.get("grid", "acceptance")
    if g == "acceptance":
        return acceptance_grid()
    if isinstance(g, dict):
        try:
            return [AmplifierParams(_alpha(a), n, T, e, int(M))
                    for a in (g["alpha"] if isinstance(g["alpha"], list) else [g["alpha"]])
                    for n in _grid(g["n_th"], "n_th")
                    for T in _grid(g["T"], "T")
                    for e in _grid(g["eta"], "eta")
                    for M in (g["M"] if isinstance(g["M"], list) else [g["M"]])]
        except KeyError as exc:
            raise ConfigError(f"grid missing {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError("grid must be 'acceptance' or an object of value lists")


def run_validate(cfg: dict, out: Path, seed: int) -> int:
    """Three-way comparison (closed form, Fock oracle, Monte Carlo) over a parameter grid."""
    grid = _validation_grid(cfg)
    n_mc = int(cfg.get("mc_samples", 10000))
    mc = MCConfig(n_mc, seed) if n_mc > 0 else None
    report = validate_grid(grid, mc, _policy(cfg))
    with open(out / "validation.csv", "w", newline="") as fh:
        report.to_csv(fh)
    print(f"validated {len(report.checked)} points, max relative gap {report.max_gap:.3g}")
    if report.literal_discrepancy:
        print("note: literal closed forms deviate from the oracle (documented discrepancy)")
    return EXIT_OK if report.ok else EXIT_GAP


COMMANDS = {
    "sweep": run_sweep,
    "amplify": run_amplify,
    "phase-dist": run_phase_dist,
    "tomo": run_tomo,
    "validate": run_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phaseamp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        seed = args.seed if args.seed is not None else int(cfg.get("seed", DEFAULT_SEED))
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, seed)
    except (OSError, json.JSONDecodeError, ConfigError, CutoffError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HeraldImpossibleError as exc:
        print(f"herald impossible for M={exc.M}: {exc}", file=sys.stderr)
        return EXIT_HERALD


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end amplification: exact Fock pipeline, P-function Monte Carlo and grid validation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import gammainc

from . import analytic
from .analytic import AmplifierParams
from .errors import HeraldImpossibleError
from .fock import CutoffPolicy, FockDensity, condition_on_click, displaced_thermal, heralded_cutoff
from .phase import PhaseStats, gain_and_gamma, holevo_variance, mu_canonical

PIPELINE_MAX_M = 8
MC_CHUNK = 1 << 16
MC_MAX_SAMPLES = 10**9
BOOTSTRAP_RESAMPLES = 200
VALIDATION_RTOL = 1e-6
LITERAL_FLAG_GAP = 1e-3


class Amplified(NamedTuple):
    state: FockDensity
    stats: PhaseStats
    success_prob: float


def amplify_exact(params: AmplifierParams, policy: CutoffPolicy = CutoffPolicy(),
                  dim: int | None = None) -> Amplified:
    """Displaced thermal input -> tap and herald -> phase statistics, all in Fock space.

    ``dim`` overrides the policy truncation (used for cutoff-convergence checks).
    """
    if params.M > PIPELINE_MAX_M:
        raise ValueError(f"pipeline supports M <= {PIPELINE_MAX_M}")
    if dim is None:
        dim = heralded_cutoff(params.alpha, params.n_th, params.T, params.eta, params.M, policy) + 1
        dim = max(dim, params.M + 2)
    rho = displaced_thermal(params.alpha, params.n_th, dim, tail_tol=policy.tail_tol)
    out, ps = condition_on_click(rho, params.T, params.eta, params.M)
    if params.alpha != 0:
        stats = gain_and_gamma(out, params.alpha, policy)
    else:
        mu = mu_canonical(out)
        stats = PhaseStats(mu, holevo_variance(mu))
    return Amplified(out, stats, ps)


# -- Monte Carlo over the P-function -------------------------------------------------


@dataclass(frozen=True)
class MCConfig:
    n_samples: int = 10**6
    seed: int = 42

    def __post_init__(self):
        if not 1 <= self.n_samples <= MC_MAX_SAMPLES:
            raise ValueError(f"n_samples must lie in [1, {MC_MAX_SAMPLES}]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo mean with its standard error.

    For complex means ``std_error`` is the standard error of ``abs(mean)``
    (the radial component), which is what phase concentration is judged by.
    """

    mean: complex | float
    std_error: float
    n_effective: float


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    # sample i lives in chunk i // MC_CHUNK; the stream depends only on (seed, chunk)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk])))


def _herald_weight(lam: np.ndarray, M: int) -> np.ndarray:
    """P(Poisson(lam) >= M) = regularized lower incomplete gamma P(M, lam)."""
    if M <= 0:
        return np.ones_like(lam)
    return gammainc(M, lam)


def _mc_samples(params: AmplifierParams, seed: int, chunk: int, size: int) -> np.ndarray:
    """Rows (w, Re w*mu, Im w*mu, Re w*<a>, Im w*<a>) for one chunk of P-function draws."""
    rng = _chunk_rng(seed, chunk)
    g = rng.standard_normal((size, 2)) * math.sqrt(params.n_th / 2.0)
    gamma = params.alpha + g[:, 0] + 1j * g[:, 1]
    lam = params.eta * (1 - params.T) * np.abs(gamma) ** 2
    w = _herald_weight(lam, params.M)
    beta = math.sqrt(params.T) * gamma
    wm = w * analytic.mu_coherent_array(beta)
    wa = w * beta
    return np.column_stack([w, wm.real, wm.imag, wa.real, wa.imag])


def _chunks(n: int):
    for c in range(0, (n + MC_CHUNK - 1) // MC_CHUNK):
        yield c, min(MC_CHUNK, n - c * MC_CHUNK)


def _ratio_estimate(mean: np.ndarray, cov: np.ndarray, n: int, idx: tuple[int, int], n_eff: float) -> MCEstimate:
    w = mean[0]
    y = complex(mean[idx[0]], mean[idx[1]])
    r = y / w
    u = r / abs(r) if r != 0 else 1.0
    # delta method for |Y/W|: gradient w.r.t. (W, Re Y, Im Y)
    grad = np.array([-abs(r) / w, u.real / w, u.imag / w])
    sub = cov[np.ix_([0, idx[0], idx[1]], [0, idx[0], idx[1]])]
    var = float(grad @ sub @ grad) / n
    return MCEstimate(r, math.sqrt(max(var, 0.0)), n_eff)


def _bootstrap(params: AmplifierParams, cfg: MCConfig) -> tuple[float, float, float]:
    rows = np.concatenate([_mc_samples(params, cfg.seed, c, size) for c, size in _chunks(cfg.n_samples)])
    rng = _chunk_rng(cfg.seed, 2**32)
    stats = np.empty((BOOTSTRAP_RESAMPLES, 3))
    n = len(rows)
    for b in range(BOOTSTRAP_RESAMPLES):
        counts = rng.multinomial(n, np.full(n, 1.0 / n))
        m = counts @ rows / n
        stats[b] = (m[0], abs(complex(m[1], m[2])) / m[0] if m[0] > 0 else np.nan,
                    abs(complex(m[3], m[4])) / m[0] if m[0] > 0 else np.nan)
    sd = np.nanstd(stats, axis=0, ddof=1)
    return float(sd[0]), float(sd[1]), float(sd[2])


def mc_heralded(params: AmplifierParams, cfg: MCConfig = MCConfig()) -> tuple[MCEstimate, MCEstimate, MCEstimate]:
    """Monte Carlo estimates of (P_S, mu, <a>) for the heralded state.

    The displaced thermal input is sampled as a mixture of coherent states
    gamma = alpha + complex normal noise of variance n_th/2 per quadrature; each
    draw is weighted by its probability of producing >= M counts.
    """
    n = cfg.n_samples
    s1 = np.zeros(5)
    s2 = np.zeros((5, 5))
    for c, size in _chunks(n):
        rows = _mc_samples(params, cfg.seed, c, size)
        s1 += rows.sum(axis=0)
        s2 += rows.T @ rows
    mean = s1 / n
    if mean[0] <= 0:
        raise HeraldImpossibleError("all Monte Carlo herald weights are zero", M=params.M)
    cov = s2 / n - np.outer(mean, mean)
    cov *= n / max(n - 1, 1)
    n_eff = s1[0] ** 2 / s2[0, 0]
    ps = MCEstimate(float(mean[0]), math.sqrt(max(cov[0, 0], 0.0) / n), float(n))
    mu = _ratio_estimate(mean, cov, n, (1, 2), n_eff)
    amp = _ratio_estimate(mean, cov, n, (3, 4), n_eff)
    if ps.mean * n < 100 and n > 1:
        se_ps, se_mu, se_amp = _bootstrap(params, cfg)
        ps = MCEstimate(ps.mean, se_ps, ps.n_effective)
        mu = MCEstimate(mu.mean, se_mu, mu.n_effective)
        amp = MCEstimate(amp.mean, se_amp, amp.n_effective)
    return ps, mu, amp


# -- amplitude inference -----------------------------------------------------------------


def infer_input_amplitude(n_hd: float, n_pnrd: float, eta_pnrd: float) -> tuple[float, float]:
    """Input mean photon number from the (ideal) homodyne and (inefficient) counter arms.

    Returns ``(n_in, |alpha|)`` with ``n_in = n_hd + n_pnrd / eta_pnrd``.
    """
    if not 0 < eta_pnrd <= 1:
        raise ValueError("eta_pnrd must lie in (0, 1]")
    if n_hd < 0 or n_pnrd < 0:
        raise ValueError("photon numbers must be non-negative")
    n_in = n_hd + n_pnrd / eta_pnrd
    return n_in, math.sqrt(n_in)


# -- validation harness ---------------------------------------------------------------------


REPORT_COLUMNS = (
    "alpha_re", "alpha_im", "n_th", "T", "eta", "M",
    "ps_analytic", "ps_oracle", "ps_mc", "ps_mc_se",
    "mu_abs_analytic", "mu_abs_oracle", "mu_abs_mc", "mu_abs_mc_se",
    "gap_rel", "paper_literal_gap",
)


@dataclass
class ValidationRow:
    params: AmplifierParams
    herald_impossible: bool = False
    ps_analytic: float = math.nan
    ps_oracle: float = math.nan
    ps_mc: float = math.nan
    ps_mc_se: float = math.nan
    mu_analytic: complex = complex(math.nan, math.nan)
    mu_oracle: complex = complex(math.nan, math.nan)
    mu_abs_mc: float = math.nan
    mu_abs_mc_se: float = math.nan
    gap_rel: float = math.nan
    paper_literal_gap: float = math.nan

    def values(self) -> list:
        p = self.params
        head = [p.alpha.real, p.alpha.imag, p.n_th, p.T, p.eta, p.M]
        if self.herald_impossible:
            return head + ["herald_impossible"] * (len(REPORT_COLUMNS) - len(head))
        return head + [self.ps_analytic, self.ps_oracle, self.ps_mc, self.ps_mc_se,
                       abs(self.mu_analytic), abs(self.mu_oracle), self.mu_abs_mc, self.mu_abs_mc_se,
                       self.gap_rel, self.paper_literal_gap]


@dataclass
class ValidationReport:
    rows: list[ValidationRow] = field(default_factory=list)
    rtol: float = VALIDATION_RTOL

    @property
    def checked(self) -> list[ValidationRow]:
        return [r for r in self.rows if not r.herald_impossible]

    @property
    def max_gap(self) -> float:
        gaps = [r.gap_rel for r in self.checked]
        return max(gaps) if gaps else 0.0

    @property
    def ok(self) -> bool:
        return all(r.gap_rel <= self.rtol for r in self.checked)

    @property
    def literal_discrepancy(self) -> bool:
        return any(not r.paper_literal_gap <= LITERAL_FLAG_GAP for r in self.checked)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row.values()])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _rel(a: complex, b: complex) -> float:
    scale = abs(b)
    return abs(a - b) / scale if scale > 0 else abs(a - b)


def validate_point(params: AmplifierParams, cfg: MCConfig | None = None,
                   policy: CutoffPolicy = CutoffPolicy()) -> ValidationRow:
    row = ValidationRow(params)
    try:
        exact = amplify_exact(params, policy)
    except HeraldImpossibleError:
        row.herald_impossible = True
        return row
    row.ps_oracle = exact.success_prob
    row.mu_oracle = exact.stats.mu
    row.ps_analytic = analytic.success_probability(params)
    row.mu_analytic = analytic.mu_amplified(params)
    row.gap_rel = max(_rel(row.ps_analytic, row.ps_oracle), _rel(row.mu_analytic, row.mu_oracle))
    try:
        lit_ps = analytic.success_probability(params, literal=True)
        lit_mu = analytic.mu_amplified(params, literal=True, herald_floor=-math.inf)
        row.paper_literal_gap = max(_rel(lit_ps, row.ps_oracle), _rel(lit_mu, row.mu_oracle))
    except (ArithmeticError, ValueError):
        row.paper_literal_gap = math.inf
    if cfg is not None:
        try:
            ps, mu, _ = mc_heralded(params, cfg)
            row.ps_mc, row.ps_mc_se = float(ps.mean), ps.std_error
            row.mu_abs_mc, row.mu_abs_mc_se = abs(mu.mean), mu.std_error
        except HeraldImpossibleError:
            pass
    return row


def validate_grid(grid: Sequence[AmplifierParams], cfg: MCConfig | None = MCConfig(),
                  policy: CutoffPolicy = CutoffPolicy()) -> ValidationReport:
    """Compare closed form, Fock oracle and Monte Carlo at every grid point.

    ``cfg=None`` skips the Monte Carlo column. Rows keep the order of ``grid``.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("validation grid is empty")
    return ValidationReport([validate_point(p, cfg, policy) for p in grid])


def acceptance_grid() -> list[AmplifierParams]:
    """The oracle-equivalence grid: 3 amplitudes x 4 noise levels x 2 taps x 2 efficiencies x 5 thresholds."""
    return [AmplifierParams(a, n, T, eta, M)
            for a in (0.2, 0.48, 1.0)
            for n in (0.05, 0.15, 0.5, 1.0)
            for T in (0.8, 0.95)
            for eta in (0.63, 1.0)
            for M in range(5)]

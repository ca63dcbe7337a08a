"""Homodyne sampling and binned maximum-likelihood state reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import TomographyError
from .fock import FockDensity, loss_adjoint, pure_loss

TABLE_POINTS = 4096
SAMPLE_CHUNK = 512
PROB_FLOOR = 1e-12
LIKELIHOOD_SLACK = 1e-12


class QuadratureRecord(NamedTuple):
    theta: float
    x: float


@dataclass(frozen=True)
class TomoConfig:
    dim: int = 12
    eta_hd: float = 1.0
    n_phase_bins: int = 12
    n_x_bins: int = 64
    x_range: float | None = None  # half-width; None means 4 standard deviations around the data mean
    max_iters: int = 5000
    tol: float = 1e-8

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.n_phase_bins < 4 or self.n_x_bins < 4:
            raise ValueError("need at least 4 phase and 4 quadrature bins")
        if not 0 < self.eta_hd <= 1:
            raise ValueError("eta_hd must lie in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def wavefunctions(dim: int, x) -> np.ndarray:
    """Number-state wavefunctions psi_n(x), n < dim, for X = (a + a^dag)/2 (vacuum variance 1/4)."""
    x = np.asarray(x, dtype=float)
    q = math.sqrt(2.0) * x
    psi = np.empty((dim,) + x.shape)
    psi[0] = 2.0 ** 0.25 * math.pi ** -0.25 * np.exp(-q * q / 2.0)
    if dim > 1:
        psi[1] = math.sqrt(2.0) * q * psi[0]
    for n in range(1, dim - 1):
        psi[n + 1] = math.sqrt(2.0 / (n + 1)) * q * psi[n] - math.sqrt(n / (n + 1)) * psi[n - 1]
    return psi


def _support(dim: int) -> float:
    # classical turning point of the highest level plus a margin of Gaussian tail
    return math.sqrt(dim + 0.5) + 3.0


def _diagonal_profiles(rho: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """g_d(x) = sum_n rho[n+d, n] psi_{n+d}(x) psi_n(x) for d = 0..dim-1."""
    dim = rho.shape[0]
    out = np.empty((dim, psi.shape[1]), dtype=complex)
    for d in range(dim):
        coeff = np.diagonal(rho, offset=-d)
        out[d] = coeff @ (psi[d:] * psi[: dim - d])
    return out


def quadrature_marginal(rho: FockDensity, theta: float, x) -> np.ndarray:
    """<x_theta|rho|x_theta> for X_theta = (a e^{-i theta} + a^dag e^{i theta})/2."""
    x = np.asarray(x, dtype=float)
    g = _diagonal_profiles(rho.elements, wavefunctions(rho.dim, x.reshape(-1)))
    d = np.arange(rho.dim)
    phase = np.exp(-1j * theta * d)
    weight = np.where(d == 0, 1.0, 2.0)
    return (np.real((weight * phase) @ g)).reshape(x.shape)


def sample_homodyne(rho: FockDensity, n: int, eta_hd: float = 1.0, seed: int = 0) -> list[QuadratureRecord]:
    """Draw n homodyne records with uniformly scanned phase from the loss-degraded state.

    Each x is drawn by inverse CDF on a 4096-point tabulation of the marginal at
    that record's phase (bisection on the table, linear within a cell). Chunk c
    of records uses a stream keyed by (seed, c).
    """
    state = pure_loss(rho, eta_hd) if eta_hd < 1 else rho
    half = _support(rho.dim)
    xs = np.linspace(-half, half, TABLE_POINTS)
    dx = xs[1] - xs[0]
    d = np.arange(state.dim)
    weight = np.where(d == 0, 1.0, 2.0)
    g = weight[:, None] * _diagonal_profiles(state.elements, wavefunctions(state.dim, xs))
    # cumulative trapezoid of every Fourier component; the CDF at phase theta is
    # Re sum_d e^{-i d theta} G_d, so each record only needs a bisection over the table
    G = np.concatenate([np.zeros((state.dim, 1)), np.cumsum(0.5 * (g[:, 1:] + g[:, :-1]) * dx, axis=1)], axis=1)
    Gt = np.ascontiguousarray(G.T)
    records = []
    for c, start in enumerate(range(0, n, SAMPLE_CHUNK)):
        size = min(SAMPLE_CHUNK, n - start)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, c])))
        thetas = rng.uniform(0.0, np.pi, size)
        u = rng.uniform(0.0, 1.0, size)
        ph = np.exp(-1j * np.outer(thetas, d))

        def cdf(idx):
            return np.real(np.sum(ph * Gt[idx], axis=1))

        target = u * cdf(np.full(size, TABLE_POINTS - 1))
        lo = np.zeros(size, dtype=int)
        hi = np.full(size, TABLE_POINTS - 1)
        while np.any(hi - lo > 1):
            mid = (lo + hi) // 2
            below = cdf(mid) <= target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        c_lo, c_hi = cdf(lo), cdf(hi)
        span = c_hi - c_lo
        frac = np.where(span > 0, (target - c_lo) / np.where(span > 0, span, 1.0), 0.5)
        xv = xs[lo] + np.clip(frac, 0.0, 1.0) * dx
        records.extend(QuadratureRecord(float(th), float(xi)) for th, xi in zip(thetas, xv))
    return records


# -- maximum likelihood -------------------------------------------------------------------


def _bin_overlaps(dim: int, edges: np.ndarray) -> np.ndarray:
    """int_{edges[b]}^{edges[b+1]} psi_m psi_n dx for each x bin (outer bins extend to +-inf)."""
    half = max(_support(dim) + 2.0, float(np.max(np.abs(edges[1:-1]))) + 1.0)
    fine = np.linspace(-half, half, 20001)
    psi = wavefunctions(dim, fine)
    prod = psi[:, None, :] * psi[None, :, :]
    dx = fine[1] - fine[0]
    cum = np.concatenate([np.zeros((dim, dim, 1)),
                          np.cumsum(0.5 * (prod[..., 1:] + prod[..., :-1]) * dx, axis=-1)], axis=-1)
    inner = np.clip(edges[1:-1], -half, half)
    # linear interpolation of the cumulative integral between fine nodes
    i = np.clip(np.searchsorted(fine, inner) - 1, 0, len(fine) - 2)
    t = ((inner - fine[i]) / dx)[:, None, None]
    at = (1 - t) * np.moveaxis(cum[..., i], -1, 0) + t * np.moveaxis(cum[..., i + 1], -1, 0)
    total = cum[..., -1]
    bounds = np.concatenate([np.zeros((1, dim, dim)), at, total[None]], axis=0)
    return np.diff(bounds, axis=0)


def build_povm(cfg: TomoConfig, x_edges: np.ndarray) -> np.ndarray:
    """POVM elements Pi[c, b] for phase bin c and quadrature bin b.

    The phase dependence is averaged over the bin (uniform phases), which
    multiplies the d-th off-diagonal by sinc(d w / 2). Detector loss is folded
    in through the adjoint loss map so the reconstruction targets the
    pre-loss state.
    """
    dim = cfg.dim
    overlaps = _bin_overlaps(dim, x_edges)
    width = np.pi / cfg.n_phase_bins
    centers = (np.arange(cfg.n_phase_bins) + 0.5) * width
    m = np.arange(dim)
    diff = m[:, None] - m[None, :]
    avg = np.sinc(diff * width / (2 * np.pi))
    povm = np.empty((cfg.n_phase_bins, len(overlaps), dim, dim), dtype=complex)
    for c, phi in enumerate(centers):
        phase = np.exp(1j * phi * diff) * avg
        for b, ov in enumerate(overlaps):
            el = ov * phase
            povm[c, b] = loss_adjoint(el, cfg.eta_hd) if cfg.eta_hd < 1 else el
    return povm


def bin_records(records, cfg: TomoConfig) -> tuple[np.ndarray, np.ndarray]:
    """Histogram records into (phase bin, x bin) counts; returns (counts, x_edges)."""
    arr = np.asarray(records, dtype=float).reshape(-1, 2)
    theta = np.mod(arr[:, 0], np.pi)
    x = arr[:, 1]
    if cfg.x_range is None:
        half = abs(float(np.mean(x))) + 4.0 * float(np.std(x))
    else:
        half = float(cfg.x_range)
    edges = np.linspace(-half, half, cfg.n_x_bins + 1)
    edges[0], edges[-1] = -np.inf, np.inf
    pb = np.minimum((theta / (np.pi / cfg.n_phase_bins)).astype(int), cfg.n_phase_bins - 1)
    xb = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, cfg.n_x_bins - 1)
    counts = np.zeros((cfg.n_phase_bins, cfg.n_x_bins))
    np.add.at(counts, (pb, xb), 1.0)
    return counts, edges


@dataclass
class MaxLikResult:
    state: FockDensity
    loglik: list[float]
    iterations: int
    converged: bool
    floored_bins: int


def _probs(rho, povm_flat):
    return np.real(np.einsum("kij,ji->k", povm_flat, rho))


def maxlik_run(records, cfg: TomoConfig) -> MaxLikResult:
    """Iterative R rho R reconstruction with a monotone-likelihood safeguard.

    A plain R rho R step is taken whenever it does not lower the likelihood;
    otherwise the diluted step (1 + eps R) rho (1 + eps R) is used with eps
    halved until the likelihood is nondecreasing.
    """
    if len(records) < 100:
        raise ValueError("maximum-likelihood reconstruction needs at least 100 records")
    counts, edges = bin_records(records, cfg)
    povm = build_povm(cfg, edges).reshape(-1, cfg.dim, cfg.dim)
    f = counts.reshape(-1)
    keep = f > 0
    povm_k, f_k = povm[keep], f[keep]
    # the phase bin is chosen by the scan, not by the state: normalize each POVM slice to a phase-bin probability
    scale = float(cfg.n_phase_bins)

    rho = np.eye(cfg.dim, dtype=complex) / cfg.dim
    floored = 0

    def loglik(r):
        p = _probs(r, povm_k) / scale
        nonlocal floored
        low = p < PROB_FLOOR
        floored = max(floored, int(np.count_nonzero(low)))
        return float(f_k @ np.log(np.maximum(p, PROB_FLOOR)))

    history = [loglik(rho)]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        p = np.maximum(_probs(rho, povm_k) / scale, PROB_FLOOR)
        R = np.einsum("k,kij->ij", f_k / p, povm_k) / (scale * f_k.sum())
        new = R @ rho @ R
        new = 0.5 * (new + new.conj().T)
        new /= np.trace(new).real
        ll = loglik(new)
        eps = 1.0
        while ll < history[-1] - LIKELIHOOD_SLACK * abs(history[-1]) and eps > 1e-12:
            eps *= 0.5
            G = (np.eye(cfg.dim) + eps * R) / (1 + eps)
            new = G @ rho @ G
            new = 0.5 * (new + new.conj().T)
            new /= np.trace(new).real
            ll = loglik(new)
        if ll < history[-1] - LIKELIHOOD_SLACK * abs(history[-1]):
            raise TomographyError(f"likelihood decreased at iteration {it}")
        step = float(np.max(np.abs(new - rho)))
        rho = new
        history.append(ll)
        if step < cfg.tol:
            converged = True
            break
    return MaxLikResult(FockDensity(rho), history, it, converged, floored)


def maxlik_reconstruct(records, cfg: TomoConfig) -> FockDensity:
    """Maximum-likelihood density matrix (loss-corrected when ``cfg.eta_hd < 1``)."""
    return maxlik_run(records, cfg).state


def fidelity(rho: FockDensity, sigma: FockDensity) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    if rho.dim != sigma.dim:
        raise ValueError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    w, v = np.linalg.eigh(rho.elements)
    w = np.clip(w, 0.0, None)
    sq = (v * np.sqrt(w)) @ v.conj().T
    inner = sq @ sigma.elements @ sq
    ev = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)
    return float(min(np.sum(np.sqrt(ev)) ** 2, 1.0))

"""Closed-form canonical-phase moments for coherent, displaced thermal and heralded states.

All heralded quantities are built from Gaussian moments: a displaced thermal
state has a Gaussian P-function, and every quantity needed here reduces to
moments ``E[beta |beta|^{2n}]`` (``cal_I``) or ``E[|beta|^{2n}]`` (``cal_J``)
of a complex Gaussian with independent real and imaginary parts.

The heralded expressions exist in two algebraically identical forms:

* ``"difference"``: unconditioned term minus the finite sum over the excluded
  count outcomes k < M (the textbook form);
* ``"tail"``: the sum over the accepted outcomes k >= M, which never cancels and
  stays accurate when the success probability is tiny.

``form="auto"`` uses the difference form unless it loses more than three
digits to cancellation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize
from scipy.special import comb, gammaln, logsumexp

from .errors import HeraldImpossibleError, IntegrationError, SeriesError, UndefinedReferenceError
from .fock import FockDensity, HERALD_FLOOR

SERIES_RTOL = 1e-16
SERIES_MAX_TERMS = 500
MAX_M = 32
# below this success probability the difference form has lost ~3 digits
_CANCELLATION_SWITCH = 1e-3


@dataclass(frozen=True)
class AmplifierParams:
    """One amplification scenario: input amplitude, added noise, tap, detector, threshold."""

    alpha: complex
    n_th: float
    T: float = 0.8
    eta: float = 0.63
    M: int = 1

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        vals = (self.alpha.real, self.alpha.imag, self.n_th, self.T, self.eta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("amplifier parameters must be finite")
        if self.n_th < 0:
            raise ValueError("n_th must be non-negative")
        if not 0 < self.T <= 1:
            raise ValueError("T must lie in (0, 1]")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if int(self.M) != self.M or not 0 <= self.M <= MAX_M:
            raise ValueError(f"M must be an integer in [0, {MAX_M}]")
        object.__setattr__(self, "M", int(self.M))

    def with_(self, **changes) -> "AmplifierParams":
        return replace(self, **changes)


# -- Gaussian moments ------------------------------------------------------------


def gaussian_moments(kmax: int, A: float, B: float) -> np.ndarray:
    """M_0..M_kmax of a normal distribution with mean A and variance B."""
    m = np.empty(kmax + 1)
    m[0] = 1.0
    if kmax >= 1:
        m[1] = A
    for k in range(1, kmax):
        m[k + 1] = A * m[k] + B * k * m[k - 1]
    return m


def gaussian_moment(k: int, A: float, B: float) -> float:
    """k-th raw moment via M_{k+1} = A M_k + B k M_{k-1}, M_0 = 1."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if B < 0:
        raise ValueError("variance B must be non-negative")
    return float(gaussian_moments(k, A, B)[k])


def cal_I(n: int, A: complex, B: float) -> complex:
    """E[beta |beta|^{2n}] for beta with mean A and variance B per quadrature."""
    A = complex(A)
    mr = gaussian_moments(2 * n + 1, A.real, B)
    mi = gaussian_moments(2 * n + 1, A.imag, B)
    k = np.arange(n + 1)
    c = comb(n, k)
    re = np.sum(c * mr[2 * k + 1] * mi[2 * (n - k)])
    im = np.sum(c * mr[2 * k] * mi[2 * (n - k) + 1])
    return complex(re, im)


def cal_J(n: int, A: complex, B: float) -> float:
    """E[|beta|^{2n}] for beta with mean A and variance B per quadrature."""
    A = complex(A)
    mr = gaussian_moments(2 * n, A.real, B)
    mi = gaussian_moments(2 * n, A.imag, B)
    k = np.arange(n + 1)
    return float(np.sum(comb(n, k) * mr[2 * k] * mi[2 * (n - k)]))


def _scaled_moments(kmax: int, A: float, B: float) -> np.ndarray:
    """M_k / sqrt(k!) from the rescaled recurrence; stays finite where M_k overflows."""
    r = np.empty(kmax + 1)
    r[0] = 1.0
    if kmax >= 1:
        r[1] = A
    for k in range(1, kmax):
        r[k + 1] = (A * r[k] + B * math.sqrt(k) * r[k - 1]) / math.sqrt(k + 1)
    return r


def _moment_halves(nmax: int, A: float, B: float) -> tuple[np.ndarray, np.ndarray]:
    """(M_{2k}/k!, M_{2k+1}/k!) for k = 0..nmax."""
    r = _scaled_moments(2 * nmax + 1, A, B)
    k = np.arange(nmax + 1)
    even = r[2 * k] * np.exp(0.5 * gammaln(2 * k + 1) - gammaln(k + 1))
    odd = r[2 * k + 1] * np.exp(0.5 * gammaln(2 * k + 2) - gammaln(k + 1))
    return even, odd


def scaled_I(nmax: int, A: complex, B: float) -> np.ndarray:
    """cal_I(n, A, B) / n! for n = 0..nmax, as a convolution of scaled moments."""
    A = complex(A)
    er, orr = _moment_halves(nmax, A.real, B)
    ei, oi = _moment_halves(nmax, A.imag, B)
    return np.convolve(orr, ei)[: nmax + 1] + 1j * np.convolve(er, oi)[: nmax + 1]


def scaled_J(nmax: int, A: complex, B: float) -> np.ndarray:
    """cal_J(n, A, B) / n! for n = 0..nmax."""
    A = complex(A)
    er, _ = _moment_halves(nmax, A.real, B)
    ei, _ = _moment_halves(nmax, A.imag, B)
    return np.convolve(er, ei)[: nmax + 1]


# -- series driver --------------------------------------------------------------


def _converged(terms: np.ndarray, n_floor: float) -> bool:
    total = abs(terms.sum())
    n = len(terms) - 1
    if n <= n_floor:
        return False
    tail = np.abs(terms[-3:])
    return bool(np.all(tail <= SERIES_RTOL * max(total, 1e-300)))


def _sum_series(term_fn, n_floor: float) -> complex:
    """Sum ``term_fn(nmax)`` (an array of terms 0..nmax), growing nmax until the tail is negligible."""
    nmax = int(math.ceil(n_floor)) + 32
    while True:
        nmax = min(nmax, SERIES_MAX_TERMS)
        terms = term_fn(nmax)
        if not np.all(np.isfinite(terms)):
            raise SeriesError("series terms overflowed")
        if _converged(terms, n_floor):
            return complex(terms.sum())
        if nmax >= SERIES_MAX_TERMS:
            raise SeriesError(f"series not converged within {SERIES_MAX_TERMS} terms")
        nmax *= 2


# -- mu for state families ---------------------------------------------------------


def mu_coherent(alpha: complex) -> complex:
    """Canonical mu of |alpha>: exp(-|a|^2) a sum_n |a|^{2n} / (n! sqrt(n+1))."""
    alpha = complex(alpha)
    if abs(alpha) > 12:
        raise ValueError("|alpha| > 12 is outside the series policy")
    if alpha == 0:
        return 0j
    x = abs(alpha) ** 2
    t = 1.0
    total = 1.0
    n = 0
    while True:
        n += 1
        t *= x / n
        term = t / math.sqrt(n + 1)
        total += term
        if term < SERIES_RTOL * total and n > x + 10:
            break
        if n > SERIES_MAX_TERMS:
            raise SeriesError("coherent series did not converge")
    return math.exp(-x) * alpha * total


def mu_coherent_array(betas) -> np.ndarray:
    """Vectorized :func:`mu_coherent` for an array of amplitudes."""
    betas = np.asarray(betas, dtype=complex)
    x = np.abs(betas) ** 2
    xmax = float(x.max()) if x.size else 0.0
    if xmax > 144:
        raise ValueError("|beta| > 12 is outside the series policy")
    t = np.ones_like(x)
    total = np.ones_like(x)
    n = 0
    while True:
        n += 1
        t = t * x / n
        term = t / math.sqrt(n + 1)
        total += term
        if n > xmax + 10 and np.all(term <= SERIES_RTOL * total):
            break
    return np.exp(-x) * betas * total


def mu_displaced_thermal(alpha: complex, n_th: float) -> complex:
    """Canonical mu of a displaced thermal state, averaged over its Gaussian P-function."""
    alpha = complex(alpha)
    if n_th < 0:
        raise ValueError("n_th must be non-negative")
    if alpha == 0:
        return 0j
    N = n_th
    pref = math.exp(-abs(alpha) ** 2 / (N + 1)) / (N + 1)
    A = alpha / (N + 1)
    B = N / (2 * (N + 1))

    def terms(nmax):
        return pref * scaled_I(nmax, A, B) / np.sqrt(np.arange(1, nmax + 2))

    return _sum_series(terms, abs(alpha) ** 2 + N + 10)


def mu_displaced_thermal_integral(alpha: complex, n_th: float) -> complex:
    """Same quantity as :func:`mu_displaced_thermal` from a one-dimensional integral.

    ``mu = (a/sqrt(pi)) int_0^{1/(1+N)} exp(-x|a|^2) / sqrt(-ln[1 - x/(1 - xN)]) dx``,
    obtained from ``1/sqrt(n+1) = pi^{-1/2} int t^{-1/2} e^{-(n+1)t} dt``. The
    substitution x = u^2 removes the inverse-square-root singularity at x = 0.
    """
    alpha = complex(alpha)
    N = float(n_th)
    a2 = abs(alpha) ** 2

    def f(u):
        x = u * u
        z = x / (1.0 - x * N)
        if z >= 1.0:
            return 0.0
        return 2.0 * u * math.exp(-x * a2) / math.sqrt(-math.log1p(-z))

    upper = 1.0 / math.sqrt(1.0 + N)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=400)
        except integrate.IntegrationWarning as exc:
            raise IntegrationError(str(exc)) from exc
    if err > 1e-8:
        raise IntegrationError(f"quadrature error estimate {err:.3g} exceeds 1e-8")
    return alpha / math.sqrt(math.pi) * val


def mu_parametric(alpha: complex, G: float) -> complex:
    """Canonical mu after a phase-insensitive parametric amplifier of gain G.

    The output is treated as a displaced thermal state with amplitude
    sqrt(G) alpha and N_th = 2G - 2, evaluated through the integral route.
    """
    if G < 1:
        raise ValueError("gain G must be >= 1")
    return mu_displaced_thermal_integral(math.sqrt(G) * complex(alpha), 2.0 * G - 2.0)


# -- heralded state --------------------------------------------------------------------


class _Heralded(NamedTuple):
    ps: float
    mu_unnorm: complex


def _xi(p: AmplifierParams):
    N, T, eta = p.n_th, p.T, p.eta
    xi1 = N * T + 1
    xi2 = N * T + N * eta * (1 - T) + 1
    xi3 = N * eta * (1 - T) + 1
    return xi1, xi2, xi3


def _ps_difference(p: AmplifierParams, literal: bool) -> float:
    if p.M == 0:
        return 1.0
    a, N, T, eta = p.alpha, p.n_th, p.T, p.eta
    _, _, xi3 = _xi(p)
    pref = math.exp(-abs(a) ** 2 * eta * (1 - T) / xi3) / xi3
    k = np.arange(p.M)
    if literal:
        # printed form: (eta(1-T)/T)^{2k}/k! J_k(alpha T / Xi3, N T / (2 Xi3))
        J = scaled_J(p.M - 1, a * T / xi3, N * T / (2 * xi3))
        coef = (eta * (1 - T) / T) ** (2 * k)
    else:
        J = scaled_J(p.M - 1, a / xi3, N / (2 * xi3))
        coef = (eta * (1 - T)) ** k
    return float(1.0 - pref * np.sum(coef * J))


def _ps_tail(p: AmplifierParams) -> float:
    if p.M == 0:
        return 1.0
    a, N, T, eta = p.alpha, p.n_th, p.T, p.eta
    _, _, xi3 = _xi(p)
    d = eta * (1 - T)
    if d == 0:
        return 0.0
    pref = math.exp(-abs(a) ** 2 * d / xi3) / xi3
    A, B = a / xi3, N / (2 * xi3)

    def terms(nmax):
        kmax = nmax + p.M
        k = np.arange(p.M, kmax + 1)
        J = scaled_J(kmax, A, B)[p.M:]
        return pref * np.exp(k * math.log(d)) * J

    return float(_sum_series(terms, abs(a) ** 2 + N + 10).real)


def _mu_difference(p: AmplifierParams, literal: bool) -> complex:
    a, N, T, eta = p.alpha, p.n_th, p.T, p.eta
    xi1, xi2, _ = _xi(p)
    sT = math.sqrt(T)
    pref1 = math.exp(-abs(a) ** 2 * T / xi1) / xi1
    pref2 = math.exp(-abs(a) ** 2 * (T + eta * (1 - T)) / xi2) / xi2
    c = eta * (1 - T) / T
    k = np.arange(p.M)
    ck = c ** (2 * k) if literal else c ** k

    def terms(nmax):
        n = np.arange(nmax + 1)
        s1 = scaled_I(nmax, a * sT / xi1, N * T / (2 * xi1))
        out = pref1 * s1
        if p.M > 0:
            s2 = scaled_I(nmax + p.M, a * sT / xi2, N * T / (2 * xi2))
            # I_{n+k}/(n! k!) = (I_{n+k}/(n+k)!) * C(n+k, k)
            binoms = comb(n[:, None] + k[None, :], k[None, :])
            idx = n[:, None] + k[None, :]
            out = out - pref2 * np.sum(ck[None, :] * binoms * s2[idx], axis=1)
        return out / np.sqrt(n + 1)

    return _sum_series(terms, abs(a) ** 2 + N + 10)


def _mu_tail(p: AmplifierParams) -> complex:
    if p.M == 0:
        return _mu_difference(p, literal=False)
    a, N, T, eta = p.alpha, p.n_th, p.T, p.eta
    _, xi2, _ = _xi(p)
    c = eta * (1 - T) / T
    if c == 0:
        return 0j
    pref2 = math.exp(-abs(a) ** 2 * (T + eta * (1 - T)) / xi2) / xi2
    A, B = a * math.sqrt(T) / xi2, N * T / (2 * xi2)

    def terms(nmax):
        # regroup by j = n + k: weight_j = sum_{k=M}^{j} C(j,k) c^k / sqrt(j-k+1), kept in log space
        j = np.arange(nmax + 1)[:, None]
        k = np.arange(nmax + 1)[None, :]
        with np.errstate(invalid="ignore"):
            logw = (gammaln(j + 1) - gammaln(k + 1) - gammaln(j - k + 1)
                    + k * math.log(c) - 0.5 * np.log(np.abs(j - k) + 1.0))
        logw = logsumexp(np.where((k >= p.M) & (k <= j), logw, -np.inf), axis=1)
        s = scaled_I(nmax, A, B)
        mag = np.abs(s)
        safe = np.where(mag > 0, mag, 1.0)
        return np.where(mag > 0, pref2 * (s / safe) * np.exp(logw + np.log(safe)), 0.0)

    return _sum_series(terms, abs(a) ** 2 + N + 10 + p.M)


def _heralded(p: AmplifierParams, literal: bool, form: str) -> _Heralded:
    if form not in ("auto", "difference", "tail"):
        raise ValueError(f"unknown form {form!r}")
    if literal or form == "difference":
        return _Heralded(_ps_difference(p, literal), _mu_difference(p, literal))
    if form == "tail":
        return _Heralded(_ps_tail(p), _mu_tail(p))
    ps = _ps_difference(p, literal=False)
    if ps < _CANCELLATION_SWITCH:
        return _Heralded(_ps_tail(p), _mu_tail(p))
    return _Heralded(ps, _mu_difference(p, literal=False))


def success_probability(params: AmplifierParams, literal: bool = False, form: str = "auto") -> float:
    """Probability that the tap detector registers at least M counts.

    ``literal=True`` evaluates the expression with the factor
    ``(eta(1-T)/T)^{2k}`` and Gaussian mean ``alpha T / Xi3`` as commonly
    printed; the default uses ``(eta(1-T))^k`` and ``alpha / Xi3``, which
    agree with the exact Fock-space calculation.
    """
    if form not in ("auto", "difference", "tail"):
        raise ValueError(f"unknown form {form!r}")
    if literal or form == "difference":
        return _ps_difference(params, literal)
    if form == "tail":
        return _ps_tail(params)
    ps = _ps_difference(params, literal=False)
    return _ps_tail(params) if ps < _CANCELLATION_SWITCH else ps


def mu_amplified(params: AmplifierParams, literal: bool = False, form: str = "auto",
                 herald_floor: float = HERALD_FLOOR) -> complex:
    """Canonical mu of the heralded output state (see :func:`success_probability` for ``literal``)."""
    h = _heralded(params, literal, form)
    if not h.ps >= herald_floor:
        raise HeraldImpossibleError(f"success probability {h.ps:.3g} below floor", M=params.M)
    return h.mu_unnorm / h.ps


def holevo_variance_of(mu: complex) -> float:
    m = abs(mu)
    return math.inf if m == 0 else 1.0 / m ** 2 - 1.0


def normalized_variance(params: AmplifierParams, **kw) -> float:
    """Gamma: heralded canonical variance over that of the input coherent state."""
    if params.alpha == 0:
        raise UndefinedReferenceError("normalized variance needs a nonzero input amplitude")
    return holevo_variance_of(mu_amplified(params, **kw)) / holevo_variance_of(mu_coherent(params.alpha))


# -- small-signal approximation ---------------------------------------------------------


def approx_amplified(alpha: complex, n_th: float) -> tuple[FockDensity, float]:
    """Two-level heralded state for weak input and weak noise, and its approximate variance.

    The state is ``[|a|^2 |0><0| + N (|0> + 2a|1>)(<0| + 2a*<1|)] / (|a|^2 + N + 4|a|^2 N)``
    and the variance ``(1 + |a|^2/N)/(4|a|^2) - 1``.
    """
    alpha = complex(alpha)
    if alpha == 0:
        raise UndefinedReferenceError("approximation undefined for alpha = 0")
    a2 = abs(alpha) ** 2
    if a2 >= 0.1 or n_th >= 0.3:
        warnings.warn("approx_amplified used outside |alpha|^2 < 0.1, n_th < 0.3", RuntimeWarning, stacklevel=2)
    v = np.array([1.0, 2.0 * alpha])
    rho = a2 * np.diag([1.0, 0.0]).astype(complex) + n_th * np.outer(v, v.conj())
    rho /= a2 + n_th + 4 * a2 * n_th
    variance = math.inf if n_th == 0 else (1 + a2 / n_th) / (4 * a2) - 1
    return FockDensity(rho), variance


# -- noise optimizer --------------------------------------------------------------------------


class NoiseOptimum(NamedTuple):
    n_th: float
    gamma: float
    improved: bool


def optimal_noise(alpha: complex, T: float, eta: float, M: int,
                  bracket: tuple[float, float] = (1e-4, 5.0), xtol: float = 1e-4) -> NoiseOptimum:
    """Added noise minimizing Gamma for a given input magnitude and threshold.

    Bounded golden-section/parabolic search (scipy's ``bounded`` method).
    ``improved`` is False when no noise level in the bracket gives Gamma < 1.
    """
    if M < 1:
        raise ValueError("optimal_noise needs M >= 1")
    alpha = complex(alpha)
    base = AmplifierParams(alpha, bracket[0], T, eta, M)

    def gamma(n):
        return normalized_variance(base.with_(n_th=float(n)))

    res = optimize.minimize_scalar(gamma, bounds=bracket, method="bounded",
                                   options={"xatol": xtol})
    n_star, g_star = float(res.x), float(res.fun)
    for edge in bracket:
        g_edge = gamma(edge)
        if g_edge < g_star:
            n_star, g_star = float(edge), g_edge
    return NoiseOptimum(n_star, g_star, g_star < 1.0)

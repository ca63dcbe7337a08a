"""Truncated Fock-space states, the tap/heralding channel and Wigner grids.

Everything in here works on explicit density matrices and serves as the
numerical ground truth for the closed-form expressions in
:mod:`phaseamp.analytic`.

Conventions: quadratures are ``X = (a + a^dag)/2`` and ``P = (a - a^dag)/(2i)``,
so the vacuum has quadrature variance 1/4 and ``<X> = Re(alpha)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln, logsumexp
from scipy.stats import binom

from .errors import CutoffError, HeraldImpossibleError

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
PSD_TOL = 1e-8
HERALD_FLOOR = 1e-14
# extra levels used when building the displacement operator by matrix exponential
DISPLACEMENT_PADDING = 8


@dataclass(frozen=True)
class CutoffPolicy:
    tail_tol: float = 1e-10
    hard_max: int = 256

    def __post_init__(self):
        if not 0 < self.tail_tol < 1:
            raise ValueError("tail_tol must lie in (0, 1)")
        if self.hard_max < 2:
            raise ValueError("hard_max must be at least 2")


@dataclass(frozen=True, eq=False)
class FockDensity:
    """Density matrix in the truncated number basis, ``elements[m, n] = <m|rho|n>``.

    ``deficit`` records the probability mass lost to truncation before the
    matrix was renormalized (zero when nothing was renormalized).
    """

    elements: np.ndarray
    deficit: float = field(default=0.0)

    def __post_init__(self):
        rho = np.array(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "elements", rho)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @property
    def cutoff(self) -> int:
        return self.dim - 1

    def trace(self) -> float:
        return float(np.real(np.trace(self.elements)))

    def photon_number(self) -> float:
        return float(np.real(np.diag(self.elements)) @ np.arange(self.dim))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.elements)).copy()

    def normalized(self) -> "FockDensity":
        tr = self.trace()
        return FockDensity(self.elements / tr, deficit=self.deficit)

    def padded(self, dim: int) -> "FockDensity":
        """Embed into a larger truncation by zero padding."""
        if dim < self.dim:
            raise ValueError("cannot pad to a smaller dimension")
        out = np.zeros((dim, dim), dtype=complex)
        out[: self.dim, : self.dim] = self.elements
        return FockDensity(out, deficit=self.deficit)

    def check(self, hermitian_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL, psd_tol=PSD_TOL) -> list[str]:
        """Return a list of violated invariants (empty when the state is valid)."""
        rho = self.elements
        problems = []
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        if herm > hermitian_tol:
            problems.append(f"not Hermitian (max deviation {herm:.3g})")
        if abs(self.trace() - 1.0) > trace_tol:
            problems.append(f"trace {self.trace():.12g} differs from 1")
        lo = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
        if lo < -psd_tol:
            problems.append(f"negative eigenvalue {lo:.3g}")
        return problems

    def is_valid(self, **tols) -> bool:
        return not self.check(**tols)

    def to_dict(self) -> dict:
        flat = self.elements.reshape(-1)
        return {"dim": self.dim, "elements": [[float(z.real), float(z.imag)] for z in flat]}

    @classmethod
    def from_dict(cls, data: dict) -> "FockDensity":
        dim = int(data["dim"])
        pairs = np.asarray(data["elements"], dtype=float)
        if pairs.shape != (dim * dim, 2):
            raise ValueError(f"expected {dim * dim} [re, im] pairs, got array of shape {pairs.shape}")
        return cls((pairs[:, 0] + 1j * pairs[:, 1]).reshape(dim, dim))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FockDensity":
        return cls.from_dict(json.loads(text))


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def number_op(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def rotate(rho: FockDensity, theta: float) -> FockDensity:
    """Apply the phase shift ``exp(i theta n) rho exp(-i theta n)``; maps alpha to alpha*exp(i theta)."""
    ph = np.exp(1j * theta * np.arange(rho.dim))
    return FockDensity(ph[:, None] * rho.elements * ph.conj()[None, :], deficit=rho.deficit)


# -- photon-number statistics -------------------------------------------------


def displaced_thermal_distribution(alpha: complex, n_th: float, n_max: int) -> np.ndarray:
    """Exact photon-number distribution p_0..p_{n_max} of a displaced thermal state.

    For n_th > 0 this is the Laguerre form
    ``p_n = r^n/(1+N) exp(-|a|^2/(1+N)) L_n(-|a|^2/(N(1+N)))`` with ``r = N/(1+N)``,
    evaluated in log space; n_th = 0 reduces to the Poisson distribution.
    """
    if not math.isfinite(n_th) or n_th < 0:
        raise ValueError("n_th must be finite and non-negative")
    a2 = abs(complex(alpha)) ** 2
    n = np.arange(n_max + 1)
    if n_th == 0:
        if a2 == 0:
            p = np.zeros(n_max + 1)
            p[0] = 1.0
            return p
        return np.exp(-a2 + n * math.log(a2) - gammaln(n + 1))
    logp = n * (math.log(n_th) - math.log1p(n_th)) - math.log1p(n_th) - a2 / (1 + n_th)
    if a2 > 0:
        # log of a2 / (N (1 + N)), formed in log space so tiny N cannot overflow
        log_y = math.log(a2) - math.log(n_th) - math.log1p(n_th)
        k = np.arange(n_max + 1)
        # log C(n,k) + k log y - log k!, masked to k <= n
        terms = (gammaln(n[:, None] + 1) - gammaln(k[None, :] + 1) - gammaln(n[:, None] - k[None, :] + 1)
                 + k[None, :] * log_y - gammaln(k[None, :] + 1))
        terms = np.where(k[None, :] <= n[:, None], terms, -np.inf)
        logp = logp + logsumexp(terms, axis=1)
    return np.exp(logp)


def click_probabilities(n_max: int, T: float, eta: float, M: int) -> np.ndarray:
    """Probability that n input photons produce at least M counts behind a tap of transmissivity T."""
    n = np.arange(n_max + 1)
    if M <= 0:
        return np.ones(n_max + 1)
    return binom.sf(M - 1, n, eta * (1 - T))


def _tail_cutoff(p: np.ndarray, tol: float, hard_max: int, what: str) -> int:
    # tail[N] = sum_{n > N} p_n, summed from the far end to avoid cancellation
    tail = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
    ok = np.nonzero(tail < tol)[0]
    cutoff = int(ok[0])
    if cutoff > hard_max:
        raise CutoffError(f"{what} needs cutoff {cutoff} > hard_max {hard_max}")
    return cutoff


def _distribution_window(alpha, n_th, policy):
    """Tabulate the photon distribution far enough out that its remaining tail is negligible."""
    mean = abs(complex(alpha)) ** 2 + n_th
    n_max = math.ceil(mean + 10 * math.sqrt(mean + 1) + 20)
    limit = 4 * policy.hard_max + 64
    while True:
        p = displaced_thermal_distribution(alpha, n_th, n_max)
        # remaining tail is bounded by a geometric series once terms decay
        if p[-1] < 1e-8 * policy.tail_tol and (n_max == 0 or p[-1] <= p[-2]):
            return p
        if n_max >= limit:
            if 1.0 - p.sum() > policy.tail_tol:
                raise CutoffError(f"photon distribution not captured below n={n_max}")
            return p
        n_max = min(2 * n_max, limit)


def choose_cutoff(alpha: complex, n_th: float, policy: CutoffPolicy = CutoffPolicy()) -> int:
    """Smallest cutoff N with displaced-thermal tail mass beyond N below ``policy.tail_tol``."""
    if not math.isfinite(n_th):
        raise ValueError("n_th must be finite")
    p = _distribution_window(alpha, n_th, policy)
    return _tail_cutoff(p, policy.tail_tol, policy.hard_max, "displaced thermal state")


def heralded_cutoff(alpha: complex, n_th: float, T: float, eta: float, M: int,
                    policy: CutoffPolicy = CutoffPolicy()) -> int:
    """Cutoff for heralded runs: the tail is measured on the click-weighted distribution.

    Heralding reweights the input photon distribution by the click probability,
    so a tail that is negligible before post-selection can dominate after it
    when the success probability is small.
    """
    p = _distribution_window(alpha, n_th, policy)
    w = p * click_probabilities(len(p) - 1, T, eta, M)
    total = w.sum()
    if total <= 0:
        return choose_cutoff(alpha, n_th, policy)
    return max(_tail_cutoff(w / total, policy.tail_tol, policy.hard_max, "heralded state"),
               _tail_cutoff(p, policy.tail_tol, policy.hard_max, "displaced thermal state"))


# -- states ---------------------------------------------------------------------


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    alpha = complex(alpha)
    c = np.zeros(dim, dtype=complex)
    if alpha == 0:
        c[0] = 1.0
        return c
    n = np.arange(dim)
    logmag = -0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent_state(alpha: complex, dim: int) -> FockDensity:
    """Coherent state |alpha><alpha|, renormalized on the truncated basis."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    c = coherent_amplitudes(alpha, dim)
    norm = float(np.vdot(c, c).real)
    c = c / math.sqrt(norm)
    return FockDensity(np.outer(c, c.conj()), deficit=1.0 - norm)


def thermal_state(n_th: float, dim: int) -> FockDensity:
    p = displaced_thermal_distribution(0.0, n_th, dim - 1)
    return FockDensity(np.diag(p / p.sum()), deficit=1.0 - p.sum())


def displacement(alpha: complex, dim: int, padding: int = DISPLACEMENT_PADDING) -> np.ndarray:
    """Truncated displacement operator, exponentiated on ``dim + padding`` levels and cut back."""
    big = dim + padding
    a = annihilation(big)
    D = expm(alpha * a.conj().T - np.conj(alpha) * a)
    return D[:dim, :dim]


def displaced_thermal(alpha: complex, n_th: float, dim: int, tail_tol: float = CutoffPolicy.tail_tol,
                      padding: int = DISPLACEMENT_PADDING) -> FockDensity:
    """D(alpha) rho_th(n_th) D(alpha)^dag on ``dim`` levels.

    The thermal state and the displacement live on ``dim + padding`` levels and
    the result is projected back; a trace deficit above ``tail_tol`` means the
    requested truncation is too small.
    """
    if n_th < 0 or not math.isfinite(n_th):
        raise ValueError("n_th must be finite and non-negative")
    if n_th == 0:
        return coherent_state(alpha, dim)
    big = dim + padding
    a = annihilation(big)
    D = expm(alpha * a.conj().T - np.conj(alpha) * a)
    p = displaced_thermal_distribution(0.0, n_th, big - 1)
    rho = (D * p[None, :]) @ D.conj().T
    rho = rho[:dim, :dim]
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.trace(rho).real)
    if 1.0 - tr > tail_tol:
        raise CutoffError(f"dim={dim} loses probability {1.0 - tr:.3g} > {tail_tol:g}")
    return FockDensity(rho / tr, deficit=1.0 - tr)


def mean_amplitude(rho: FockDensity) -> complex:
    """Tr[a rho]."""
    sub = np.diagonal(rho.elements, offset=-1)
    return complex(np.sum(np.sqrt(np.arange(1, rho.dim)) * sub))


# -- tap beam splitter and detection -----------------------------------------------


def beam_splitter_unitary(T: float, dim: int) -> np.ndarray:
    """Two-mode beam splitter ``exp(theta (a b^dag - a^dag b))`` with cos^2 theta = T.

    Index ordering is ``i*dim + j`` for |i>_signal |j>_tap. The product
    truncation is exact on every subspace of total photon number below ``dim``.
    """
    theta = math.atan2(math.sqrt(1.0 - T), math.sqrt(T))
    a = annihilation(dim)
    eye = np.eye(dim)
    A = np.kron(a, eye)
    B = np.kron(eye, a)
    gen = A @ B.conj().T - A.conj().T @ B
    return expm(theta * gen)


def tap_amplitudes(T: float, dim: int) -> np.ndarray:
    """``amp[k, n] = <n-k, k| U |n, 0>`` for the tap beam splitter, 0 <= k <= n < dim.

    Computed block by block: the beam splitter conserves total photon number,
    so each block with n photons is a (n+1)x(n+1) exponential.
    """
    theta = math.atan2(math.sqrt(1.0 - T), math.sqrt(T))
    amp = np.zeros((dim, dim))
    amp[0, 0] = 1.0
    for n in range(1, dim):
        k = np.arange(n)
        # basis |n-k, k>, k = tap photons; a b^dag moves one photon into the tap
        up = np.sqrt((n - k) * (k + 1.0))
        gen = np.diag(up, -1) - np.diag(up, 1)
        col = expm(theta * gen)[:, 0]
        amp[: n + 1, n] = col
    return amp


def detector_povm(dim: int, eta: float, M: int) -> np.ndarray:
    """Diagonal of the "at least M counts" POVM for a detector of efficiency eta."""
    n = np.arange(dim)
    if M <= 0:
        return np.ones(dim)
    return binom.sf(M - 1, n, eta)


def _tap_sum(rho: np.ndarray, amp: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_k weights[k] E_k rho E_k^dag with E_k[n-k, n] = amp[k, n]."""
    dim = rho.shape[0]
    out = np.zeros_like(rho)
    for k in range(dim):
        if weights[k] == 0.0:
            continue
        e = amp[k, k:]
        out[: dim - k, : dim - k] += weights[k] * (e[:, None] * rho[k:, k:] * e[None, :])
    return out


def _tap_adjoint_sum(op: np.ndarray, amp: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_k weights[k] E_k^dag op E_k (Heisenberg-picture counterpart of :func:`_tap_sum`)."""
    dim = op.shape[0]
    out = np.zeros_like(op)
    for k in range(dim):
        if weights[k] == 0.0:
            continue
        e = amp[k, k:]
        out[k:, k:] += weights[k] * (e[:, None] * op[: dim - k, : dim - k] * e[None, :])
    return out


def pure_loss(rho: FockDensity, T: float) -> FockDensity:
    """Pure-loss channel keeping a fraction T of the intensity."""
    amp = tap_amplitudes(T, rho.dim)
    return FockDensity(_tap_sum(rho.elements, amp, np.ones(rho.dim)), deficit=rho.deficit)


def loss_adjoint(op: np.ndarray, T: float) -> np.ndarray:
    """Adjoint of :func:`pure_loss`, used to fold detector inefficiency into POVM elements."""
    op = np.asarray(op, dtype=complex)
    return _tap_adjoint_sum(op, tap_amplitudes(T, op.shape[0]), np.ones(op.shape[0]))


def condition_on_click(rho_in: FockDensity, T: float, eta: float, M: int,
                       herald_floor: float = HERALD_FLOOR) -> tuple[FockDensity, float]:
    """Tap a fraction 1-T of the light, herald on >= M counts, return (state, P_S).

    Computes ``Tr_tap[(1 x Pi) U (rho x |0><0|) U^dag] / P_S`` where Pi is the
    binomially smeared detector POVM; because Pi is diagonal only the Kraus
    terms with k photons in the tap contribute, each weighted by Pi_k.
    """
    if not 0 < T <= 1:
        raise ValueError("T must lie in (0, 1]")
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    if M < 0:
        raise ValueError("M must be non-negative")
    amp = tap_amplitudes(T, rho_in.dim)
    q = detector_povm(rho_in.dim, eta, M)
    out = _tap_sum(rho_in.elements, amp, q)
    ps = float(np.trace(out).real)
    if ps < herald_floor:
        raise HeraldImpossibleError(f"success probability {ps:.3g} below floor {herald_floor:g}", M=M)
    out = 0.5 * (out + out.conj().T) / ps
    return FockDensity(out, deficit=rho_in.deficit), ps


def subtract_photons_ideal(rho: FockDensity, M: int,
                           herald_floor: float = HERALD_FLOOR) -> tuple[FockDensity, float]:
    """Normalized a^M rho a^dag^M together with its weight Tr[a^M rho a^dag^M]."""
    if M < 0 or M > rho.dim - 1:
        raise ValueError(f"M must lie in [0, {rho.dim - 1}]")
    A = np.linalg.matrix_power(annihilation(rho.dim), M)
    out = A @ rho.elements @ A.conj().T
    w = float(np.trace(out).real)
    if w < herald_floor:
        raise HeraldImpossibleError(f"subtraction weight {w:.3g} below floor", M=M)
    return FockDensity(0.5 * (out + out.conj().T) / w, deficit=rho.deficit), w


# -- Wigner function ---------------------------------------------------------------


def wigner_grid(rho: FockDensity, xs, ps) -> np.ndarray:
    """Wigner function W[i, j] = W(x=xs[j], p=ps[i]) normalized to unit integral over dx dp.

    Uses the Laguerre recursion for the Wigner functions of |m><n|, which is
    the displaced-parity formula ``(2/pi) Tr[rho D(b) (-1)^n D(b)^dag]`` at
    b = x + i p evaluated in closed form.
    """
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    X, P = np.meshgrid(xs, ps)
    A = X + 1j * P
    r = rho.elements
    dim = rho.dim
    wlist = [np.zeros_like(A) for _ in range(dim)]
    wlist[0] = np.exp(-2.0 * np.abs(A) ** 2) / np.pi
    W = np.real(r[0, 0]) * np.real(wlist[0])
    for n in range(1, dim):
        wlist[n] = 2.0 * A * wlist[n - 1] / math.sqrt(n)
        W += 2 * np.real(r[0, n] * wlist[n])
    for m in range(1, dim):
        temp = wlist[m].copy()
        wlist[m] = (2 * np.conj(A) * temp - math.sqrt(m) * wlist[m - 1]) / math.sqrt(m)
        W += np.real(r[m, m] * wlist[m])
        for n in range(m + 1, dim):
            temp2 = (2 * A * wlist[n - 1] - math.sqrt(m) * temp) / math.sqrt(n)
            temp = wlist[n].copy()
            wlist[n] = temp2
            W += 2 * np.real(r[m, n] * wlist[n])
    return 2.0 * W

"""Canonical phase statistics of single-mode states."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedReferenceError
from .fock import CutoffPolicy, FockDensity, choose_cutoff, coherent_state, mean_amplitude

DEFAULT_THETA_POINTS = 2048


@dataclass(frozen=True)
class PhaseStats:
    """Figures of merit for one output state.

    ``gamma`` and ``gain`` are relative to a reference coherent input and are
    ``None`` when no reference was supplied.
    """

    mu: complex
    variance_canonical: float
    gain: float | None = None
    gamma: float | None = None

    def to_dict(self) -> dict:
        return {
            "mu_re": self.mu.real,
            "mu_im": self.mu.imag,
            "v_canonical": self.variance_canonical,
            "gain": self.gain,
            "gamma": self.gamma,
        }


def mu_canonical(rho: FockDensity) -> complex:
    """<exp(i theta)> under the canonical phase measurement: sum_n <n+1|rho|n>."""
    return complex(np.sum(np.diagonal(rho.elements, offset=-1)))


def holevo_variance(mu: complex) -> float:
    """|mu|^-2 - 1, infinite for mu = 0."""
    m = abs(mu)
    if m == 0:
        return math.inf
    return 1.0 / (m * m) - 1.0


def canonical_variance(rho: FockDensity) -> float:
    return holevo_variance(mu_canonical(rho))


def theta_grid(n: int = DEFAULT_THETA_POINTS) -> np.ndarray:
    """Closed grid on [-pi, pi]; the trapezoid rule on it integrates P(theta) exactly."""
    return np.linspace(-np.pi, np.pi, n)


def phase_distribution(rho: FockDensity, thetas) -> np.ndarray:
    """Canonical phase distribution P(theta) = (1/2pi) sum_{m,n} e^{i theta (m-n)} <n|rho|m>.

    Written as a Fourier series in the diagonal sums s_d = sum_n <n+d|rho|n>,
    P(theta) = (1/2pi) [s_0 + 2 Re sum_{d>=1} s_d e^{-i d theta}].
    """
    thetas = np.asarray(thetas, dtype=float)
    r = rho.elements
    s = np.array([np.sum(np.diagonal(r, offset=-d)) for d in range(1, rho.dim)])
    d = np.arange(1, rho.dim)
    osc = np.exp(-1j * np.outer(thetas, d)) @ s if rho.dim > 1 else np.zeros(thetas.shape)
    return (np.real(np.trace(r)) + 2.0 * np.real(osc)) / (2.0 * np.pi)


def reference_variance(alpha_in: complex, policy: CutoffPolicy = CutoffPolicy()) -> float:
    """Canonical variance of the coherent state |alpha_in>."""
    dim = choose_cutoff(alpha_in, 0.0, policy) + 1
    return canonical_variance(coherent_state(alpha_in, max(dim, 2)))


def gain_and_gamma(rho_out: FockDensity, alpha_in: complex,
                   policy: CutoffPolicy = CutoffPolicy()) -> PhaseStats:
    """Gain |<a>_out|/|alpha_in| and Gamma = V_C(out)/V_C(|alpha_in>)."""
    alpha_in = complex(alpha_in)
    if alpha_in == 0:
        raise UndefinedReferenceError("gain and Gamma need a nonzero input amplitude")
    mu = mu_canonical(rho_out)
    v = holevo_variance(mu)
    gain = abs(mean_amplitude(rho_out)) / abs(alpha_in)
    return PhaseStats(mu, v, gain, v / reference_variance(alpha_in, policy))

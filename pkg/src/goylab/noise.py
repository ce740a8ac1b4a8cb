"""Noise model: trace-class covariance, reproducing-kernel norms, coefficients.

The driving noise is a collection of independent scalar Wiener processes, one
per shell, with Var(w_n(t)) = lambda_n * t for a summable positive sequence
lambda.  Increment samples are REAL-valued (returned in complex storage with
zero imaginary part): each shell's driving path is one-dimensional Brownian
motion, and the complex state only arises through the coefficient map sigma.
This convention is load-bearing: the Girsanov identity E[exp(log_lr)] = 1 and
the Gaussian closed forms used by the rare-event checks hold exactly for it.

The control/noise geometry is the weighted space with inner product
(u, v)_0 = sum_n u_n v_n / lambda_n; controls and increments are measured in
its norm (`h0_norm`).

Reproducibility: every ensemble member draws from its own counter-based
stream derived from (master seed, purpose, member index) via a splitmix64
chain — see `member_stream` — so results do not depend on scheduling or on
how members are chunked across workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .space import ModelParams, check_finite, compensated_sum, norm, wavenumbers

__all__ = [
    "CovarianceSpec",
    "NoiseCoefficient",
    "AdditiveNoise",
    "DiagonalMultiplicativeNoise",
    "NoiseHypothesesReport",
    "h0_norm",
    "h0_inner",
    "lq_norm",
    "sample_wiener_increment",
    "check_noise_hypotheses",
    "splitmix64",
    "member_stream",
    "STREAM_PURPOSES",
]


@dataclass(frozen=True)
class CovarianceSpec:
    """Diagonal trace-class covariance: eigenvalue lambda_n on shell n.

    Build with `CovarianceSpec.geometric(n, lam0, gamma)` for the ladder
    lambda_n = lam0 * 2**(-gamma*n) (the default lam0 = gamma = 1 gives
    trace < 1, concentrating noise at large scales), or
    `CovarianceSpec.explicit(values)` for an arbitrary positive sequence.
    """

    eigenvalues: tuple
    kind: str = "explicit"
    lam0: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self) -> None:
        if len(self.eigenvalues) < 1:
            raise ValueError("covariance needs at least one eigenvalue")
        vals = tuple(float(v) for v in self.eigenvalues)
        for v in vals:
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"covariance eigenvalues must be positive, got {v!r}")
        object.__setattr__(self, "eigenvalues", vals)
        if self.kind not in ("geometric", "explicit"):
            raise ValueError(f"unknown covariance kind {self.kind!r}")

    @classmethod
    def geometric(cls, num_shells: int, lam0: float = 1.0, gamma: float = 1.0) -> "CovarianceSpec":
        if num_shells < 1:
            raise ValueError("num_shells must be >= 1")
        if not (math.isfinite(lam0) and lam0 > 0):
            raise ValueError(f"lam0 must be positive, got {lam0!r}")
        if not (math.isfinite(gamma) and gamma > 0):
            raise ValueError(f"gamma must be positive, got {gamma!r}")
        n = np.arange(1, num_shells + 1, dtype=float)
        vals = tuple(lam0 * np.exp2(-gamma * n))
        return cls(eigenvalues=vals, kind="geometric", lam0=float(lam0), gamma=float(gamma))

    @classmethod
    def explicit(cls, values) -> "CovarianceSpec":
        return cls(eigenvalues=tuple(values), kind="explicit")

    @property
    def num_shells(self) -> int:
        return len(self.eigenvalues)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.eigenvalues, dtype=float)

    def trace(self) -> float:
        return float(compensated_sum(self.as_array()))


class NoiseCoefficient:
    """Diagonal noise coefficient map: shell n of the noise term is
    sigma_n(u) * dW_n with sigma_n as returned by `.sigma(u)`."""

    kind: str = "abstract"

    def sigma(self, u: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class AdditiveNoise(NoiseCoefficient):
    """State-independent coefficients: sigma_n(u) = s_n.

    Bounded and Lipschitz (with constant 0), so the growth/Lipschitz
    hypotheses hold; the pointwise per-shell hypothesis that forces
    sigma(0) = 0 does NOT (additive noise never vanishes at the origin),
    and reports flag this via `a1_applicable = False`.
    """

    s: tuple
    kind: str = field(default="additive", init=False, repr=False)

    def __post_init__(self) -> None:
        vals = tuple(complex(v) for v in self.s)
        if len(vals) < 1:
            raise ValueError("additive coefficients need at least one shell")
        for v in vals:
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError(f"coefficients must be finite, got {v!r}")
        object.__setattr__(self, "s", vals)

    @classmethod
    def constant(cls, num_shells: int, value: complex = 1.0) -> "AdditiveNoise":
        return cls(s=(complex(value),) * num_shells)

    def sigma(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        s = np.asarray(self.s, dtype=complex)
        if u.shape[-1] != s.shape[0]:
            raise ValueError(f"state has {u.shape[-1]} shells, coefficients {s.shape[0]}")
        return np.broadcast_to(s, u.shape).copy()


@dataclass(frozen=True)
class DiagonalMultiplicativeNoise(NoiseCoefficient):
    """Linear per-shell coefficients: sigma_n(u) = c_n * u_n."""

    c: tuple
    kind: str = field(default="diagonal-multiplicative", init=False, repr=False)

    def __post_init__(self) -> None:
        vals = tuple(complex(v) for v in self.c)
        if len(vals) < 1:
            raise ValueError("multiplicative coefficients need at least one shell")
        for v in vals:
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError(f"coefficients must be finite, got {v!r}")
        object.__setattr__(self, "c", vals)

    def sigma(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        c = np.asarray(self.c, dtype=complex)
        if u.shape[-1] != c.shape[0]:
            raise ValueError(f"state has {u.shape[-1]} shells, coefficients {c.shape[0]}")
        return c * u


def _check_cov(x: np.ndarray, q: CovarianceSpec, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != q.num_shells:
        raise ValueError(f"{what} has {x.shape[-1]} shells, covariance has {q.num_shells}")
    return x


def h0_inner(u: np.ndarray, v: np.ndarray, q: CovarianceSpec) -> Union[float, np.ndarray]:
    """Weighted real inner product (u, v)_0 = Re sum_n u_n conj(v_n) / lambda_n."""
    u = _check_cov(u, q, "u")
    v = _check_cov(v, q, "v")
    lam = q.as_array()
    terms = (u.real * v.real + u.imag * v.imag) / lam
    out = compensated_sum(terms)
    return float(out) if out.ndim == 0 else out


def h0_norm(v: np.ndarray, q: CovarianceSpec) -> Union[float, np.ndarray]:
    """Weighted norm |v|_0 = (sum_n |v_n|^2 / lambda_n)^(1/2)."""
    v = _check_cov(v, q, "v")
    lam = q.as_array()
    terms = (v.real * v.real + v.imag * v.imag) / lam
    out = np.sqrt(compensated_sum(terms))
    return float(out) if out.ndim == 0 else out


def lq_norm(
    sigma: NoiseCoefficient, u: np.ndarray, q: CovarianceSpec
) -> Union[float, np.ndarray]:
    """Hilbert-Schmidt-against-Q norm of the diagonal coefficient at state u:
    (sum_n lambda_n |sigma_n(u)|^2)^(1/2)."""
    su = _check_cov(sigma.sigma(np.asarray(u, dtype=complex)), q, "sigma(u)")
    lam = q.as_array()
    terms = lam * (su.real * su.real + su.imag * su.imag)
    out = np.sqrt(compensated_sum(terms))
    return float(out) if out.ndim == 0 else out


def sample_wiener_increment(
    q: CovarianceSpec, dt: float, stream: np.random.Generator
) -> np.ndarray:
    """One increment Delta w with independent real entries N(0, lambda_n*dt).

    Returned in complex storage (imaginary part identically zero): each
    shell's driving noise is a one-dimensional Brownian motion; complex state
    responses enter only through sigma.  E|Delta w_n|^2 = lambda_n * dt.
    Deterministic given the stream state; dt = 0 yields the zero increment.
    """
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    lam = q.as_array()
    if dt == 0.0:
        return np.zeros(lam.shape[0], dtype=complex)
    draw = stream.standard_normal(lam.shape[0]) * np.sqrt(lam * dt)
    return draw.astype(complex)


# ---------------------------------------------------------------------------
# Reproducible stream derivation


_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output step (64-bit avalanche mix of x + gamma)."""
    x = (x + _SPLITMIX_GAMMA) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return (z ^ (z >> 31)) & 0xFFFFFFFFFFFFFFFF


#: Registered stream purposes.  Member streams for different purposes are
#: decorrelated even under the same master seed; keep this table append-only.
STREAM_PURPOSES = {
    "simulate": 1,
    "ensemble": 2,
    "weak-convergence": 3,
    "ldp-naive": 4,
    "ldp-importance": 5,
    "energy": 6,
    "hypothesis-check": 7,
    "constants": 8,
}


def member_stream(master_seed: int, purpose: str, member: int) -> np.random.Generator:
    """Counter-based stream for one ensemble member.

    The stream key is derived by the chain
        k = splitmix64(master_seed); k = splitmix64(k ^ purpose_id);
        k = splitmix64(k ^ member)
    and fed to a Philox generator, so member streams are independent of
    worker count, scheduling, and evaluation order.
    """
    if purpose not in STREAM_PURPOSES:
        raise ValueError(
            f"unknown stream purpose {purpose!r}; registered: {sorted(STREAM_PURPOSES)}"
        )
    if member < 0:
        raise ValueError(f"member index must be nonnegative, got {member}")
    k = splitmix64(int(master_seed) & 0xFFFFFFFFFFFFFFFF)
    k = splitmix64(k ^ STREAM_PURPOSES[purpose])
    k = splitmix64(k ^ int(member))
    return np.random.Generator(np.random.Philox(key=k))


# ---------------------------------------------------------------------------
# Hypothesis checking


@dataclass(frozen=True)
class NoiseHypothesesReport:
    """Closed-form growth/Lipschitz constants and the admissible-noise table.

    K  : growth constant, |sigma(u)|_{LQ}^2 <= K (1 + ||u||_V^2)
    L  : Lipschitz constant, |sigma(u)-sigma(v)|_{LQ}^2 <= L ||u-v||_V^2
    K1 : per-shell growth, |sigma_n(u)|^2 <= K1 k_n^2 |u_n|^2 (multiplicative only)
    K2 : per-shell Lipschitz analog of K1
    a1_applicable : False for additive noise (sigma(0) != 0 rules the
        per-shell pointwise hypothesis out; only growth/Lipschitz hold)
    epsilon_guards : thresholds on the noise amplitude that the energy and
        deviation bounds require, keyed by the expression that produces them;
        infinite entries mean the constraint is vacuous for this coefficient.
    """

    K: float
    L: float
    K1: float
    K2: float
    a1_applicable: bool
    epsilon_guards: dict
    samples: int
    rng_seed: int

    def __post_init__(self) -> None:
        for name in ("K", "L", "K1", "K2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v!r}")


def _guard(num: float, den: float) -> float:
    return math.inf if den == 0.0 else num / den


def check_noise_hypotheses(
    sigma: NoiseCoefficient,
    q: CovarianceSpec,
    params: ModelParams,
    samples: int,
    seed: int,
) -> NoiseHypothesesReport:
    """Compute exact hypothesis constants for a diagonal coefficient.

    The constants are closed-form maxima over shells; `samples` random states
    are drawn only to cross-check the inequalities (a defensive verification
    of the closed forms, not an estimation step).  Deterministic given seed.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    if q.num_shells != params.num_shells:
        raise ValueError(
            f"covariance has {q.num_shells} shells, model has {params.num_shells}"
        )
    lam = q.as_array()
    k = wavenumbers(params)
    if isinstance(sigma, AdditiveNoise):
        s = np.asarray(sigma.s, dtype=complex)
        if s.shape[0] != q.num_shells:
            raise ValueError("coefficient/covariance shell counts differ")
        big_k = float(compensated_sum(lam * np.abs(s) ** 2))
        big_l = 0.0
        k1 = k2 = 0.0
        a1 = False
    elif isinstance(sigma, DiagonalMultiplicativeNoise):
        c = np.asarray(sigma.c, dtype=complex)
        if c.shape[0] != q.num_shells:
            raise ValueError("coefficient/covariance shell counts differ")
        ratios = np.abs(c) ** 2 / k**2
        big_k = big_l = float(np.max(lam * ratios))
        k1 = k2 = float(np.max(ratios))
        a1 = True
    else:
        raise TypeError(f"unsupported coefficient type {type(sigma).__name__}")

    guards = {
        "nu/(2K)": _guard(params.nu / 2.0, big_k),
        "nu/(2L)": _guard(params.nu / 2.0, big_l),
        "nu/(4K)": _guard(params.nu / 4.0, big_k),
        "1/(2K^2)": _guard(0.5, big_k * big_k),
        "3nu/(2K)": _guard(1.5 * params.nu, big_k),
        "nu/(3K)": _guard(params.nu / 3.0, big_k),
    }

    rng = np.random.default_rng(seed)
    u = rng.standard_normal((samples, params.num_shells)) + 1j * rng.standard_normal(
        (samples, params.num_shells)
    )
    v = rng.standard_normal((samples, params.num_shells)) + 1j * rng.standard_normal(
        (samples, params.num_shells)
    )
    tol = 1.0 + 1e-9
    growth = np.asarray(lq_norm(sigma, u, q)) ** 2
    bound = big_k * (1.0 + np.asarray(norm(u, "v", params)) ** 2)
    if not np.all(growth <= bound * tol):
        raise AssertionError("growth cross-check failed; closed-form K is wrong")
    diff = sigma.sigma(u) - sigma.sigma(v)
    lip = np.sqrt(np.sum(lam * np.abs(diff) ** 2, axis=-1))
    lip_bound = math.sqrt(big_l) * np.asarray(norm(u - v, "v", params))
    if not np.all(lip <= lip_bound * tol + 1e-12):
        raise AssertionError("Lipschitz cross-check failed; closed-form L is wrong")
    if a1:
        per_shell = np.abs(sigma.sigma(u)) ** 2
        per_bound = k1 * (k**2) * np.abs(u) ** 2
        if not np.all(per_shell <= per_bound * tol + 1e-12):
            raise AssertionError("per-shell cross-check failed; closed-form K1 is wrong")

    return NoiseHypothesesReport(
        K=big_k,
        L=big_l,
        K1=k1,
        K2=k2,
        a1_applicable=a1,
        epsilon_guards=guards,
        samples=samples,
        rng_seed=seed,
    )

"""State space for the dyadic shell ladder: parameters, norms, inner products.

The state is a finite sequence of complex shell amplitudes u_1..u_N attached to
the dyadic wavenumbers k_n = k0 * 2**n.  Indices outside 1..N are implicit
zeros; that convention makes the retained system exactly the Galerkin system of
the infinite ladder, and every operator in this package relies on it.

States are plain ``numpy`` arrays of dtype complex128 and shape (..., N); all
functions here broadcast over leading batch axes.  Norm and inner-product
summations run in ascending shell index with compensated (Neumaier) summation
so that results are reproducible across run configurations and worker counts.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Variant",
    "ModelParams",
    "WNorm",
    "NormKind",
    "wavenumbers",
    "norm",
    "inner_h",
    "project",
    "zero_state",
    "basis_state",
    "as_state",
    "check_finite",
    "compensated_sum",
]


class Variant(enum.Enum):
    """Which conjugation pattern the quadratic shell coupling uses."""

    GOY = "goy"
    SABRA = "sabra"


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the truncated shell ladder.

    Attributes
    ----------
    num_shells : number of retained complex amplitudes u_1..u_N (N >= 1).
    k0         : wavenumber base; shell n lives at k_n = k0 * 2**n.
    nu         : kinematic viscosity; nu = 0 is allowed only for inviscid
                 diagnostics (energy-conservation checks).
    a, b, c    : coupling coefficients of the quadratic term.  They must
                 satisfy a + b + c = 0 *exactly* (as floats); this is the
                 condition that makes the nonlinearity redistribute energy
                 between shells without creating it.
    variant    : GOY or SABRA conjugation pattern.

    The defaults are the standard desk-scale configuration: N = 16, k0 = 1,
    nu = 1, (a, b, c) = (-1, 1/2, 1/2), GOY.
    """

    num_shells: int = 16
    k0: float = 1.0
    nu: float = 1.0
    a: float = -1.0
    b: float = 0.5
    c: float = 0.5
    variant: Variant = Variant.GOY

    def __post_init__(self) -> None:
        if not isinstance(self.num_shells, int) or isinstance(self.num_shells, bool):
            raise TypeError(f"num_shells must be an integer, got {self.num_shells!r}")
        if self.num_shells < 1:
            raise ValueError(f"num_shells must be >= 1, got {self.num_shells}")
        for name in ("k0", "nu", "a", "b", "c"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not self.k0 > 0:
            raise ValueError(f"k0 must be positive, got {self.k0}")
        if self.nu < 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if self.a + self.b + self.c != 0.0:
            raise ValueError(
                "coupling coefficients must satisfy a + b + c = 0 exactly; "
                f"got a={self.a}, b={self.b}, c={self.c} "
                f"(sum {self.a + self.b + self.c!r})"
            )
        if not isinstance(self.variant, Variant):
            raise TypeError(f"variant must be a Variant, got {self.variant!r}")


def wavenumbers(params: ModelParams) -> np.ndarray:
    """Return the dyadic wavenumber ladder k_n = k0 * 2**n for n = 1..N."""
    n = np.arange(1, params.num_shells + 1)
    return params.k0 * np.exp2(n.astype(float))


@dataclass(frozen=True)
class WNorm:
    """Weighted sequence norm of order (s, p): (sum (k_n**s |u_n|)**p)**(1/p).

    p = math.inf means the supremum over shells.  W(1, 2) coincides with the
    V-norm bit-for-bit (both run through the same weighted-square kernel).
    """

    s: float
    p: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.s):
            raise ValueError(f"W-norm order s must be finite, got {self.s!r}")
        if not self.p >= 1:
            raise ValueError(f"W-norm exponent p must satisfy p >= 1, got {self.p!r}")


#: A norm selector: one of "h", "v", "da", "l4", or a WNorm(s, p).
NormKind = Union[str, WNorm]

_NAMED_KINDS = {
    "h": WNorm(0.0, 2.0),
    "v": WNorm(1.0, 2.0),
    "da": WNorm(2.0, 2.0),
    "l4": WNorm(0.0, 4.0),
}


def compensated_sum(terms: np.ndarray) -> np.ndarray:
    """Sum along the last axis in ascending index order with Neumaier compensation.

    The loop order is part of the reproducibility contract: identical inputs
    give bit-identical sums regardless of how the batch is chunked.
    """
    terms = np.asarray(terms, dtype=float)
    total = np.zeros(terms.shape[:-1])
    comp = np.zeros_like(total)
    for n in range(terms.shape[-1]):
        t = terms[..., n]
        new = total + t
        swap = np.abs(total) >= np.abs(t)
        comp = comp + np.where(swap, (total - new) + t, (t - new) + total)
        total = new
    return total + comp


def _resolve_kind(kind: NormKind) -> WNorm:
    if isinstance(kind, WNorm):
        return kind
    try:
        return _NAMED_KINDS[kind.lower()]
    except (KeyError, AttributeError):
        raise ValueError(
            f"unknown norm kind {kind!r}; expected 'h', 'v', 'da', 'l4', or WNorm(s, p)"
        ) from None


def check_finite(u: np.ndarray, what: str = "state") -> np.ndarray:
    """Validate that a state has no NaN/Inf entries; returns the array."""
    u = np.asarray(u)
    if not np.all(np.isfinite(u.view(float) if np.iscomplexobj(u) else u)):
        raise ValueError(f"{what} contains NaN or Inf entries")
    return u


def norm(u: np.ndarray, kind: NormKind, params: ModelParams) -> Union[float, np.ndarray]:
    """Evaluate a sequence-space norm of a state (batched over leading axes).

    "h"  -> (sum |u_n|^2)^(1/2)
    "v"  -> (sum k_n^2 |u_n|^2)^(1/2)
    "da" -> (sum k_n^4 |u_n|^2)^(1/2)
    "l4" -> (sum |u_n|^4)^(1/4)
    WNorm(s, p) -> (sum (k_n^s |u_n|)^p)^(1/p), with p = inf as the supremum.
    """
    u = check_finite(np.asarray(u, dtype=complex), "norm input")
    w = _resolve_kind(kind)
    k = wavenumbers(params)
    if u.shape[-1] != k.shape[0]:
        raise ValueError(
            f"state has {u.shape[-1]} shells but params.num_shells = {params.num_shells}"
        )
    if w.p == 2.0:
        # Weighted-square kernel: shared by H, V, DA and every W(s, 2), which
        # makes W(1, 2) == V an identity of code paths, not just of values.
        weights = k ** (2.0 * w.s) if w.s != 0.0 else np.ones_like(k)
        terms = weights * (u.real * u.real + u.imag * u.imag)
        out = np.sqrt(compensated_sum(terms))
    elif math.isinf(w.p):
        out = np.max((k**w.s if w.s != 0.0 else np.ones_like(k)) * np.abs(u), axis=-1)
    else:
        scaled = (k**w.s if w.s != 0.0 else np.ones_like(k)) * np.abs(u)
        out = compensated_sum(scaled**w.p) ** (1.0 / w.p)
    return float(out) if out.ndim == 0 else out


def inner_h(u: np.ndarray, v: np.ndarray) -> Union[float, np.ndarray]:
    """Real inner product Re sum_n u_n * conj(v_n) (batched over leading axes)."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"shell-count mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    terms = u.real * v.real + u.imag * v.imag
    out = compensated_sum(terms)
    return float(out) if out.ndim == 0 else out


def project(u: np.ndarray, m: int, params: ModelParams | None = None) -> np.ndarray:
    """Orthogonal projection onto the first m shells: entries m+1..N zeroed.

    Idempotent; a contraction in every norm defined here.
    """
    u = np.asarray(u, dtype=complex)
    n_shells = u.shape[-1]
    if not isinstance(m, int) or isinstance(m, bool):
        raise TypeError(f"projection level must be an integer, got {m!r}")
    if m < 1:
        raise ValueError(f"projection level must be >= 1, got {m}")
    if m > n_shells:
        raise ValueError(f"projection level {m} exceeds shell count {n_shells}")
    out = u.copy()
    out[..., m:] = 0.0
    return out


def zero_state(num_shells: int) -> np.ndarray:
    """The zero element of the state space."""
    return np.zeros(num_shells, dtype=complex)


def basis_state(num_shells: int, mode: int, value: complex = 1.0) -> np.ndarray:
    """State with a single populated shell: value at shell `mode` (1-indexed)."""
    if not 1 <= mode <= num_shells:
        raise ValueError(f"mode must be in 1..{num_shells}, got {mode}")
    u = zero_state(num_shells)
    u[mode - 1] = value
    return u


def as_state(values, num_shells: int | None = None) -> np.ndarray:
    """Coerce a sequence to a finite complex state array (copy)."""
    u = np.array(values, dtype=complex)
    if num_shells is not None and u.shape[-1] != num_shells:
        raise ValueError(f"expected {num_shells} shells, got {u.shape[-1]}")
    return check_finite(u)

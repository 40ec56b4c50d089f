"""Scalar and dyadic kernels of the time-harmonic volume integral equation.

Sign convention: outgoing scalar kernel g(R) = exp(-i*k*R) / (4*pi*R).

The electric dyadic kernel is

    G(r, r') = e^{-ikR}/(4 pi R)      * (I - uu)
             - i e^{-ikR}/(4 pi k R^2) * (I - 3 uu)
             -   e^{-ikR}/(4 pi k^2 R^3) * (I - 3 uu)

with R = |r' - r| and u = (r' - r)/R (uu is unaffected by the sign of u).
The singularity split g = g0 + g_tilde isolates the static part
g0 = 1/(4 pi R); g_tilde = (e^{-ikR} - 1)/(4 pi R) is bounded with
g_tilde(0) = -ik/(4 pi).  Hessians follow from the closed-form identity
hess(g) = k^2 (G - g I), keeping the dyadic formula the single source of
truth; the difference hess(g_tilde) = hess(g) - hess(g0) switches to a power
series below k*R = SMALL_KR where direct evaluation loses digits to
cancellation.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ParameterError, SingularityError

FOUR_PI = 4.0 * math.pi

# below this value of k*R the bounded kernels switch to their Taylor branches
SMALL_KR = 1e-2
# series lengths chosen so truncation < 1e-26 relative at the threshold
_SERIES_TERMS = 12

_EYE = np.eye(3)


def separation(r, r_src):
    """Distance R and unit direction u = (r_src - r)/R between two points.

    Returns (R, u); u is None when R == 0 (direction undefined).
    """
    d = np.asarray(r_src, dtype=float) - np.asarray(r, dtype=float)
    R = float(np.sqrt(d @ d))
    if R == 0.0:
        return 0.0, None
    return R, d / R


def scalar_g(k: float, R):
    """Outgoing scalar kernel e^{-ikR}/(4 pi R).  R may be an array."""
    _check_k(k)
    R = _check_R(R, allow_zero=False)
    return np.exp(-1j * k * R) / (FOUR_PI * R)


def scalar_g0(R):
    """Static kernel 1/(4 pi R).  R may be an array."""
    R = _check_R(R, allow_zero=False)
    return 1.0 / (FOUR_PI * R)


def scalar_g_tilde(k: float, R):
    """Bounded remainder (e^{-ikR} - 1)/(4 pi R); equals -ik/(4 pi) at R = 0.

    Uses (e^x - 1)/x = sum_{n>=0} x^n/(n+1)! with x = -ikR below the
    small-argument threshold, where direct evaluation cancels catastrophically.
    """
    _check_k(k, allow_zero=True)
    Ra = _check_R(R, allow_zero=True)
    scalar_in = np.ndim(R) == 0
    Rb = np.atleast_1d(np.asarray(Ra, dtype=float))
    x = -1j * k * Rb
    out = np.empty(x.shape, dtype=complex)
    small = np.abs(x) < SMALL_KR
    # series branch: (-ik/4pi) * sum_{n>=0} x^n/(n+1)!  (Horner, highest first)
    xs = x[small]
    acc = np.zeros_like(xs)
    for n in range(_SERIES_TERMS - 1, -1, -1):
        acc = acc * xs + 1.0 / math.factorial(n + 1)
    out[small] = (-1j * k / FOUR_PI) * acc
    big = ~small
    out[big] = (np.exp(x[big]) - 1.0) / (FOUR_PI * Rb[big])
    if scalar_in:
        return complex(out[0])
    return out


def dyadic_G(k: float, r, r_src) -> np.ndarray:
    """Electric dyadic kernel (3, 3); symmetric and reciprocal."""
    _check_k(k)
    R, u = separation(r, r_src)
    if u is None:
        raise SingularityError("dyadic kernel undefined at zero separation")
    uu = np.outer(u, u)
    phase = np.exp(-1j * k * R) / FOUR_PI
    c1 = phase / R
    c2 = -1j * phase / (k * R * R)
    c3 = -phase / (k * k * R ** 3)
    return c1 * (_EYE - uu) + (c2 + c3) * (_EYE - 3.0 * uu)


def hessian_g0(r, r_src) -> np.ndarray:
    """Hessian of the static kernel: -(I - 3 uu)/(4 pi R^3).  Traceless."""
    R, u = separation(r, r_src)
    if u is None:
        raise SingularityError("hessian of static kernel undefined at zero separation")
    uu = np.outer(u, u)
    return -(_EYE - 3.0 * uu) / (FOUR_PI * R ** 3)


def hessian_g(k: float, r, r_src) -> np.ndarray:
    """Hessian of g via the closed-form identity k^2 (G - g I)."""
    _check_k(k)
    R, u = separation(r, r_src)
    if u is None:
        raise SingularityError("hessian undefined at zero separation")
    return k * k * (dyadic_G(k, r, r_src) - scalar_g(k, R) * _EYE)


def hessian_g_tilde(k: float, r, r_src) -> np.ndarray:
    """Hessian of the bounded remainder g_tilde = g - g0.

    Only an O(1/R) weak singularity remains; still undefined exactly at
    R = 0.  Below k*R = SMALL_KR the two cancelling 1/R^3 contributions are
    replaced by series:

        hess(g_tilde) = -(1/4pi) [ S_a(R) uu + S_b(R) (I - uu) ]
        S_b = (e^{-ikR}(1 + ikR) - 1)/R^3 = sum_{n>=2} (1-n)/n! (-ik)^n R^{n-3}
        S_a = (k^2 R^2 e^{-ikR} - 2(e^{-ikR}(1+ikR)-1))/R^3
            = -sum_{n>=3} (n-1)(n-2)/n! (-ik)^n R^{n-3}
    """
    _check_k(k, allow_zero=True)
    R, u = separation(r, r_src)
    if u is None:
        raise SingularityError("hessian of g_tilde undefined at zero separation")
    if k == 0.0:
        return np.zeros((3, 3), dtype=complex)
    if k * R < SMALL_KR:
        uu = np.outer(u, u)
        x = -1j * k
        s_b = 0.0 + 0.0j
        s_a = 0.0 + 0.0j
        for n in range(2, 2 + _SERIES_TERMS):
            term = x ** n * R ** (n - 3) / math.factorial(n)
            s_b += (1 - n) * term
            s_a -= (n - 1) * (n - 2) * term
        return (-1.0 / FOUR_PI) * (s_a * uu + s_b * (_EYE - uu))
    return hessian_g(k, r, r_src) - hessian_g0(r, r_src)


class KernelEval(NamedTuple):
    """A kernel value bundled with the separation geometry it used.

    ``u`` is None when the two points coincide (direction undefined).
    """

    R: float
    u: "np.ndarray | None"
    value: "complex | np.ndarray"


_KERNELS = {
    "g": lambda k, r, r_src, R: scalar_g(k, R),
    "g0": lambda k, r, r_src, R: scalar_g0(R),
    "g_tilde": lambda k, r, r_src, R: scalar_g_tilde(k, R),
    "dyadic": lambda k, r, r_src, R: dyadic_G(k, r, r_src),
    "hessian_g0": lambda k, r, r_src, R: hessian_g0(r, r_src),
    "hessian_g": lambda k, r, r_src, R: hessian_g(k, r, r_src),
    "hessian_g_tilde": lambda k, r, r_src, R: hessian_g_tilde(k, r, r_src),
}


def evaluate_kernel(name: str, k: float, r, r_src) -> KernelEval:
    """Evaluate a named kernel, returning value plus (R, u) geometry."""
    if name not in _KERNELS:
        raise ParameterError(f"unknown kernel {name!r}; choose from {sorted(_KERNELS)}")
    R, u = separation(r, r_src)
    value = _KERNELS[name](k, r, r_src, R)
    return KernelEval(R=R, u=u, value=value)


def dyadic_G_pairs(k: float, targets: np.ndarray, sources: np.ndarray,
                   mask: "np.ndarray | None" = None) -> np.ndarray:
    """Batched dyadic kernel for all target/source pairs.

    targets (P, 3), sources (Q, 3) -> (P, Q, 3, 3).  ``mask`` (P, Q) marks
    pairs to skip (left as zeros); any unmasked coincident pair raises.
    """
    _check_k(k)
    t = np.asarray(targets, dtype=float)
    s = np.asarray(sources, dtype=float)
    d = s[None, :, :] - t[:, None, :]            # (P, Q, 3)
    R = np.sqrt(np.einsum("pqc,pqc->pq", d, d))  # (P, Q)
    live = R > 0.0
    if mask is not None:
        live &= ~mask
    elif not np.all(live):
        raise SingularityError("coincident target/source pair in batched dyadic kernel")
    Rs = np.where(live, R, 1.0)
    u = d / Rs[..., None]
    phase = np.exp(-1j * k * Rs) / FOUR_PI
    alpha = phase / Rs                                      # (I - uu) factor
    beta = -phase * (1j / (k * Rs ** 2) + 1.0 / (k * k * Rs ** 3))  # (I - 3uu) factor
    uu = np.einsum("pqa,pqb->pqab", u, u)
    out = (alpha + beta)[..., None, None] * _EYE - (alpha + 3.0 * beta)[..., None, None] * uu
    out[~live] = 0.0
    return out


def _check_k(k, allow_zero=False):
    if not (isinstance(k, (int, float)) and math.isfinite(k)):
        raise ParameterError(f"wavenumber must be a finite real, got {k!r}")
    if k < 0 or (k == 0 and not allow_zero):
        raise ParameterError(f"wavenumber must be positive, got {k!r}")


def _check_R(R, allow_zero):
    arr = np.asarray(R, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ParameterError("separation distance must be finite and non-negative")
    if not allow_zero and np.any(arr == 0.0):
        raise SingularityError("kernel undefined at zero separation")
    if np.ndim(R) == 0:
        return float(arr)
    return arr

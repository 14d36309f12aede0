"""Kolmogorov turbulence statistics: structure function, Fried parameter,
and the covariance of Zernike coefficients over a circular aperture.

The covariance matrix uses Noll's closed form,

    cov(j, j') = c0 * (-1)^((n + n' - 2m)/2) * sqrt((n+1)(n'+1))
                 * Gamma((n + n' - 5/3)/2)
                 / [ Gamma((n - n' + 17/3)/2) * Gamma((n' - n + 17/3)/2)
                     * Gamma((n + n' + 23/3)/2) ]
                 * (D/r0)^(5/3)

with c0 = Gamma(14/3) * Gamma(11/6)^2 * ((24/5) Gamma(6/5))^(5/6)
          / (2^(8/3) * pi)  ~= 2.2462,

nonzero only when |m| matches and the branch (cos/sin) matches (m = 0 pairs
always couple). This reproduces the classic Var(a_tilt) = 0.4489 (D/r0)^(5/3)
and is cross-checked in the tests against direct numerical quadrature of the
defining double-aperture integral.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument, NumericError
from .zernike import noll_to_nm

__all__ = [
    "structure_function",
    "fried_from_cn2",
    "cn2_from_fried",
    "noll_covariance",
    "NollMatrix",
]

log = logging.getLogger(__name__)

# 6.88 is the conventional rounding of 2 * (24/5 * Gamma(6/5))^(5/6).
STRUCTURE_CONST = 6.883877182293811

_C0 = None


def _noll_c0() -> float:
    global _C0
    if _C0 is None:
        from scipy.special import gamma

        _C0 = float(
            gamma(14.0 / 3.0)
            * gamma(11.0 / 6.0) ** 2
            * ((24.0 / 5.0) * gamma(6.0 / 5.0)) ** (5.0 / 6.0)
            / (2.0 ** (8.0 / 3.0) * np.pi)
        )
    return _C0


def structure_function(r, r0: float):
    """Kolmogorov phase structure function D_phi(r) = 6.88 (r/r0)^(5/3).

    `r` and `r0` are lengths in the same unit; `r` may be an array.
    """
    if r0 <= 0:
        raise InvalidArgument(f"r0 must be positive, got {r0}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InvalidArgument("separation r must be non-negative")
    return STRUCTURE_CONST * (r / r0) ** (5.0 / 3.0)


def fried_from_cn2(cn2: float, wavelength_m: float, path_length_m: float) -> float:
    """Fried parameter r0 = (0.423 k^2 Cn2 L)^(-3/5) for a uniform path.

    Plane-wave form with k = 2 pi / wavelength; Cn2 in m^(-2/3).
    """
    if cn2 <= 0 or wavelength_m <= 0 or path_length_m <= 0:
        raise InvalidArgument("cn2, wavelength and path length must be positive")
    k = 2.0 * np.pi / wavelength_m
    return float((0.423 * k * k * cn2 * path_length_m) ** (-3.0 / 5.0))


def cn2_from_fried(r0_m: float, wavelength_m: float, path_length_m: float) -> float:
    """Inverse of fried_from_cn2 (uniform-path Cn2 giving this r0)."""
    if r0_m <= 0 or wavelength_m <= 0 or path_length_m <= 0:
        raise InvalidArgument("r0, wavelength and path length must be positive")
    k = 2.0 * np.pi / wavelength_m
    return float(r0_m ** (-5.0 / 3.0) / (0.423 * k * k * path_length_m))


def _noll_entry_unit(j_i: int, j_j: int) -> float:
    """Covariance entry at D/r0 = 1 (piston rows are the caller's business)."""
    n, m_signed = noll_to_nm(j_i)
    np_, mp_signed = noll_to_nm(j_j)
    m, mp = abs(m_signed), abs(mp_signed)
    if m != mp:
        return 0.0
    if m != 0:
        # same |m|: couples only within a branch (cos with cos, sin with sin)
        if (m_signed > 0) != (mp_signed > 0):
            return 0.0
    # parity selection: (n + n' - 2m)/2 must be an integer; same |m| implies
    # n and n' share parity with m, so it always is.
    s = (n + np_ - 2 * m) // 2
    sign = -1.0 if s % 2 else 1.0
    lg = (
        gammaln((n + np_ - 5.0 / 3.0) / 2.0)
        - gammaln((n - np_ + 17.0 / 3.0) / 2.0)
        - gammaln((np_ - n + 17.0 / 3.0) / 2.0)
        - gammaln((n + np_ + 23.0 / 3.0) / 2.0)
    )
    return _noll_c0() * sign * np.sqrt((n + 1.0) * (np_ + 1.0)) * float(np.exp(lg))


@dataclass(frozen=True)
class NollMatrix:
    """Zernike-coefficient covariance over a circular aperture.

    `entries` is (N, N), already scaled by (D/r0)^(5/3); row/column 0 (piston)
    is zeroed because an aperture-averaged phase offset is unobservable in
    imaging. `cholesky` is a lower-triangular factor L with entries == L L^T,
    with the piston row/column kept at zero by factoring the j >= 2 block.
    """

    dimension: int
    d_over_r0: float
    entries: np.ndarray = field(repr=False)
    cholesky: np.ndarray = field(repr=False)

    def mode_variances(self) -> np.ndarray:
        return np.diag(self.entries).copy()


def noll_covariance(num_modes: int, d_over_r0: float) -> NollMatrix:
    """Covariance of Noll-indexed Zernike coefficients, modes 1..num_modes.

    Piston (j=1) is zeroed. Entries scale as (d_over_r0)^(5/3); d_over_r0 = 0
    gives the zero matrix (with a zero Cholesky factor).
    """
    if num_modes < 3:
        raise InvalidArgument(f"num_modes must be >= 3, got {num_modes}")
    if d_over_r0 < 0:
        raise InvalidArgument(f"d_over_r0 must be >= 0, got {d_over_r0}")
    n = num_modes
    A = np.zeros((n, n))
    for i in range(2, n + 1):
        for j in range(i, n + 1):
            v = _noll_entry_unit(i, j)
            A[i - 1, j - 1] = v
            A[j - 1, i - 1] = v
    scale = float(d_over_r0) ** (5.0 / 3.0) if d_over_r0 > 0 else 0.0
    A *= scale

    L = np.zeros_like(A)
    if scale > 0:
        sub = A[1:, 1:]
        try:
            Ls = np.linalg.cholesky(sub)
        except np.linalg.LinAlgError:
            # Nearly singular high-order blocks can dip below zero by
            # round-off; nudge the diagonal and retry once.
            eps = 1e-12 * np.trace(sub) / (n - 1)
            log.warning(
                "covariance factorization needed regularization (eps=%.3e)", eps
            )
            try:
                Ls = np.linalg.cholesky(sub + eps * np.eye(n - 1))
            except np.linalg.LinAlgError as exc:
                eig = np.linalg.eigvalsh(sub)
                raise NumericError(
                    "covariance matrix is not positive semidefinite: "
                    f"min eigenvalue {eig.min():.3e} at dimension {n}"
                ) from exc
        L[1:, 1:] = Ls
    return NollMatrix(dimension=n, d_over_r0=float(d_over_r0), entries=A, cholesky=L)

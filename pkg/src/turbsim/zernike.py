"""Zernike polynomials under Noll indexing and normalization.

Conventions used throughout the package:

- Noll's single index j >= 1: j=1 piston, j=2/3 x/y tilt, j=4 defocus.
  Even j takes the cosine branch, odd j the sine branch.
- Normalization is Noll's: sqrt(n+1) * R_n^m(rho) * sqrt(2) cos/sin(m theta)
  (no sqrt(2) for m=0), which makes the polynomials orthonormal with weight
  1/pi over the unit disk.
- Grids are unit-disk grids: a G x G array of pixel centers covering
  [-1, 1]^2, with the disk inscribed (aperture diameter = G pixels).

Evaluation is vectorized: radial polynomials are built from precomputed
integer coefficient tables, and `zernike_bank` shares the rho-power table
across modes, which is what every hot loop in the package calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "ZernikePolynomial",
    "noll_to_nm",
    "zernike_eval",
    "zernike_bank",
    "unit_disk_grid",
    "disk_mask",
    "phase_from_coeffs",
    "projection_matrix",
]


def noll_to_nm(j: int) -> tuple[int, int]:
    """Map a Noll index j >= 1 to (n, m) with signed m.

    m > 0 means the cosine branch, m < 0 the sine branch, matching the
    convention that even j is cosine. Examples: 1 -> (0, 0), 2 -> (1, 1),
    3 -> (1, -1), 4 -> (2, 0), 11 -> (4, 0).
    """
    if not isinstance(j, (int, np.integer)) or isinstance(j, bool):
        raise InvalidArgument(f"Noll index must be an integer, got {j!r}")
    if j < 1:
        raise InvalidArgument(f"Noll index must be >= 1, got {j}")
    n = 0
    j1 = j - 1
    while j1 > n:
        n += 1
        j1 -= n
    m = (n % 2) + 2 * ((j1 + ((n + 1) % 2)) // 2)
    if m == 0:
        return n, 0
    # Even Noll index carries cos, odd carries sin.
    return n, m if (j % 2 == 0) else -m


@dataclass(frozen=True)
class ZernikePolynomial:
    """One polynomial identified by its Noll index.

    `azimuthal_order` is |m|; `branch` is "cos", "sin", or "none" (m = 0).
    """

    noll_index: int
    radial_order: int
    azimuthal_order: int
    branch: str

    @classmethod
    def from_noll(cls, j: int) -> "ZernikePolynomial":
        n, m = noll_to_nm(j)
        branch = "none" if m == 0 else ("cos" if m > 0 else "sin")
        return cls(noll_index=j, radial_order=n, azimuthal_order=abs(m), branch=branch)

    @property
    def signed_m(self) -> int:
        if self.branch == "sin":
            return -self.azimuthal_order
        return self.azimuthal_order


@lru_cache(maxsize=512)
def _radial_coeffs(n: int, m_abs: int) -> tuple[tuple[int, int], ...]:
    """Coefficients of R_n^|m| as ((power, integer coefficient), ...)."""
    out = []
    for k in range((n - m_abs) // 2 + 1):
        c = (
            (-1) ** k
            * math.factorial(n - k)
            // (
                math.factorial(k)
                * math.factorial((n + m_abs) // 2 - k)
                * math.factorial((n - m_abs) // 2 - k)
            )
        )
        out.append((n - 2 * k, c))
    return tuple(out)


def _eval_single(j: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    n, m = noll_to_nm(j)
    m_abs = abs(m)
    rho2 = x * x + y * y
    rho = np.sqrt(rho2)
    rad = np.zeros_like(rho)
    for power, c in _radial_coeffs(n, m_abs):
        # powers share parity with m, so use rho2**(power//2) * rho**(power%2)
        rad += c * rho2 ** (power // 2) * (rho if power % 2 else 1.0)
    norm = math.sqrt(n + 1)
    if m == 0:
        return norm * rad
    theta = np.arctan2(y, x)
    ang = np.cos(m_abs * theta) if m > 0 else np.sin(m_abs * theta)
    return norm * math.sqrt(2.0) * rad * ang


def zernike_eval(j: int, x, y) -> np.ndarray:
    """Evaluate the Noll-indexed polynomial at points (x, y).

    Points may lie anywhere; values outside the unit disk follow the
    polynomial continuation (callers mask as needed). Shapes broadcast.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    return _eval_single(int(j), x, y)


def zernike_bank(num_modes: int, x, y) -> np.ndarray:
    """Evaluate modes j = 1..num_modes at shared points.

    Returns an array of shape (num_modes,) + points_shape. The rho-power
    table is shared across modes, which matters when num_modes ~ 36 and the
    point set is a full grid.
    """
    if num_modes < 1:
        raise InvalidArgument(f"num_modes must be >= 1, got {num_modes}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    rho2 = x * x + y * y
    rho = np.sqrt(rho2)
    theta = np.arctan2(y, x)

    max_n = max(noll_to_nm(j)[0] for j in range(1, num_modes + 1))
    # rho^p for p = 0..max_n
    pows = np.empty((max_n + 1,) + x.shape)
    pows[0] = 1.0
    if max_n >= 1:
        pows[1] = rho
    for p in range(2, max_n + 1):
        pows[p] = pows[p - 1] * rho

    # cos/sin(m theta) for the m values in play
    m_values = sorted({abs(noll_to_nm(j)[1]) for j in range(1, num_modes + 1)} - {0})
    cos_t = {m: np.cos(m * theta) for m in m_values}
    sin_t = {m: np.sin(m * theta) for m in m_values}

    out = np.empty((num_modes,) + x.shape)
    for j in range(1, num_modes + 1):
        n, m = noll_to_nm(j)
        rad = np.zeros_like(rho)
        for power, c in _radial_coeffs(n, abs(m)):
            rad += c * pows[power]
        if m == 0:
            out[j - 1] = math.sqrt(n + 1) * rad
        elif m > 0:
            out[j - 1] = math.sqrt(2 * (n + 1)) * rad * cos_t[m]
        else:
            out[j - 1] = math.sqrt(2 * (n + 1)) * rad * sin_t[-m]
    return out


def unit_disk_grid(grid_px: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pixel-center coordinates and inscribed-disk mask for a G x G grid.

    Returns (X, Y, mask). Coordinates run over (-1, 1) at pixel centers;
    mask is True where x^2 + y^2 <= 1.
    """
    if grid_px < 2:
        raise InvalidArgument(f"grid_px must be >= 2, got {grid_px}")
    c = (2.0 * (np.arange(grid_px) + 0.5) / grid_px) - 1.0
    X, Y = np.meshgrid(c, c, indexing="xy")
    mask = (X * X + Y * Y) <= 1.0
    return X, Y, mask


@lru_cache(maxsize=64)
def _disk_cache(grid_px: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X, Y, mask = unit_disk_grid(grid_px)
    X.setflags(write=False)
    Y.setflags(write=False)
    mask.setflags(write=False)
    return X, Y, mask


def disk_mask(grid_px: int) -> np.ndarray:
    """Inscribed-disk boolean mask for a G x G grid (cached, read-only)."""
    return _disk_cache(grid_px)[2]


@lru_cache(maxsize=32)
def _bank_on_grid(num_modes: int, grid_px: int) -> np.ndarray:
    X, Y, mask = _disk_cache(grid_px)
    bank = zernike_bank(num_modes, X, Y)
    bank *= mask  # zero outside the aperture
    bank.setflags(write=False)
    return bank


def phase_from_coeffs(coeffs, grid_px: int) -> np.ndarray:
    """Render sum_j a_j Z_j on a G x G unit-disk grid (zero off-disk).

    `coeffs` is indexed from j=1 at position 0. Accepts a single coefficient
    vector (N,) or a batch (..., N); returns (..., G, G).
    """
    a = np.asarray(coeffs, dtype=float)
    if a.shape[-1] < 1:
        raise InvalidArgument("coefficient vector must have at least one mode")
    bank = _bank_on_grid(a.shape[-1], grid_px)
    flat = bank.reshape(a.shape[-1], -1)
    out = a @ flat
    return out.reshape(a.shape[:-1] + (grid_px, grid_px))


@lru_cache(maxsize=16)
def projection_matrix(num_modes: int, grid_px: int) -> np.ndarray:
    """Least-squares projector from disk pixels onto modes 1..num_modes.

    Returns P of shape (num_modes, n_disk_pixels) such that a = P @ phi[mask]
    is the LS fit. Discrete LS (pseudo-inverse of the design matrix) rather
    than plain quadrature sums: on a pixel grid the modes are only
    approximately orthogonal, and quadrature sums leak piston into the
    higher modes badly enough to corrupt variance estimates.
    """
    X, Y, mask = _disk_cache(grid_px)
    bank = zernike_bank(num_modes, X[mask], Y[mask])  # (N, npix)
    P = np.linalg.pinv(bank.T)
    P.setflags(write=False)
    return P


def project_phase(phase: np.ndarray, num_modes: int) -> np.ndarray:
    """LS-fit Zernike coefficients of one or more phase maps.

    `phase` is (..., G, G); values off the disk are ignored. Returns
    coefficients (..., num_modes) indexed from j=1.
    """
    phase = np.asarray(phase, dtype=float)
    g = phase.shape[-1]
    if phase.shape[-2] != g:
        raise InvalidArgument("phase maps must be square")
    mask = disk_mask(g)
    P = projection_matrix(num_modes, g)
    flat = phase.reshape(-1, g * g)[:, mask.ravel()]
    out = flat @ P.T
    return out.reshape(phase.shape[:-2] + (num_modes,))

"""Spatial correlation of Zernike coefficients across a scene.

A point at field position x (measured in aperture diameters, s = (x-x')/D)
sees the phase averaged over its own shifted aperture, so the coefficients
of two points are correlated. With a_i(x) = (1/pi) * integral over the unit
disk of phi(x*D + (D/2) rho) Z_i(rho), the Kolmogorov structure function
gives

    E[a_i(0) a_j(s)] = -(3.44 / pi^2) * (D/r0)^(5/3)
                       * integral X_ij(t) |s + t|^(5/3) d^2 t,

where X_ij is the cross-correlation of the windowed modes (in half-disk
coordinates t = (rho' - rho)/2, support |t| <= 1). The sigma^2 terms of the
phase covariance integrate to zero against any zero-mean mode, which is why
piston is excluded everywhere here.

Numerics:
- X_ij comes from one FFT cross-correlation of edge-antialiased mode windows
  (G samples across the aperture, midpoint rule; the disk edge, not the rule
  order, limits accuracy, so boundary cells get analytic coverage weights).
- Near field |s| <= ~3: FFT convolution of X_ij with |t|^(5/3) on a fine
  grid, evaluated anywhere by cubic interpolation.
- Far field: |s + t|^(5/3) Taylor-expanded to 4th order in t against the
  moments of X_ij. Tilt correlations decay only as s^(-1/3), so the far tail
  cannot be truncated to zero.
- Exact-path evaluator (`_direct_values`): plain summation over the X grid
  for arbitrary lag lists; slower but assumption-free, used for convergence
  checks and as the test oracle for the fast path.

Kernels are computed at D/r0 = 1 and normalized by the zero-lag diagonal, so
they are independent of turbulence strength and cacheable per (i, j, grid).
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage, signal

from .errors import FormatError, InvalidArgument
from .turbulence import STRUCTURE_CONST, NollMatrix, noll_covariance
from .zernike import zernike_bank, zernike_eval

__all__ = [
    "CorrelationKernel",
    "CorrelationSpec",
    "LagGrid",
    "build_autocorrelation",
    "build_cross_correlation",
    "build_correlation_spec",
    "energy_metrics",
    "build_tensor_slices",
    "TensorSlices",
    "EnergyCurves",
    "save_kernel",
    "load_kernel",
]

log = logging.getLogger(__name__)

_PREF = -(STRUCTURE_CONST / 2.0) / np.pi**2

# Near-field fine grid half extent (s units) and the far-field switchover.
_FINE_EXTENT = 3.25
_FAR_START = 2.75


@dataclass(frozen=True)
class LagGrid:
    """Cartesian lag grid: symmetric, centered, `step_s` pitch in s units."""

    step_s: float
    half_extent_s: float

    def __post_init__(self):
        if self.step_s <= 0 or self.half_extent_s <= 0:
            raise InvalidArgument("lag grid step and extent must be positive")
        if self.half_extent_s < self.step_s:
            raise InvalidArgument("lag grid extent smaller than one step")

    def axis(self) -> np.ndarray:
        n = int(math.floor(self.half_extent_s / self.step_s + 1e-9))
        return np.arange(-n, n + 1) * self.step_s


@dataclass(frozen=True)
class CorrelationKernel:
    """Normalized correlation of modes (i, j) on a lag grid.

    values[iy, ix] is E[a_i(0) a_j(s)] / sqrt(Var(a_i) Var(a_j)) at
    s = (lags_x[ix], lags_y[iy]); strength-independent by the normalization.
    """

    mode_i: int
    mode_j: int
    lags_x: np.ndarray = field(repr=False)
    lags_y: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    quadrature_px: int
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.values.shape != (len(self.lags_y), len(self.lags_x)):
            raise InvalidArgument("kernel values shape does not match lag axes")


@dataclass(frozen=True)
class CorrelationSpec:
    """Everything the field sampler needs: per-mode kernels + mixing matrix.

    Kernels cover modes 1..N (index 0, piston, is None). The lag grid spans
    1.5x the image s-extent so the circulant embedding never folds an
    in-image separation onto a wrong lag.
    """

    num_modes: int
    d_over_r0: float
    kernels: tuple  # tuple[CorrelationKernel | None, ...]
    noll: NollMatrix
    step_s: float
    half_extent_s: float
    build_method: str = "quadrature"

    def __post_init__(self):
        if len(self.kernels) != self.num_modes:
            raise InvalidArgument("kernel count must equal num_modes")


# ---------------------------------------------------------------------------
# mode windows and their cross-correlation


@lru_cache(maxsize=8)
def _coverage(grid_px: int) -> np.ndarray:
    """Fraction of each cell inside the unit disk (4x4 subsampling at edge)."""
    g = grid_px
    c = (2.0 * (np.arange(g) + 0.5) / g) - 1.0
    X, Y = np.meshgrid(c, c)
    r = np.hypot(X, Y)
    half_diag = math.sqrt(2.0) / g
    cover = (r <= 1.0).astype(float)
    edge = np.abs(r - 1.0) <= half_diag
    if np.any(edge):
        sub = (np.arange(4) + 0.5) / 4.0 - 0.5
        dx, dy = np.meshgrid(sub * 2.0 / g, sub * 2.0 / g)
        ex = X[edge][:, None] + dx.ravel()[None, :]
        ey = Y[edge][:, None] + dy.ravel()[None, :]
        cover[edge] = np.mean(ex * ex + ey * ey <= 1.0, axis=1)
    cover.setflags(write=False)
    return cover


@lru_cache(maxsize=8)
def _mode_windows(num_modes: int, grid_px: int) -> np.ndarray:
    """W(rho) Z_i(rho) on the unit-disk grid with edge coverage weights.

    The far tails of the correlation integrals are controlled by the low
    moments of these windows, and pixel-sum errors there get amplified by
    |s|^(5/3) into spurious slow tails (a residual piston squares into
    r^(5/3) growth, a residual tilt moment into an r^(-1/3) plateau). Each
    window is corrected inside span{W, W x, W y} so its discrete moments of
    degree <= 1 equal the exact disk values.
    """
    g = grid_px
    c = (2.0 * (np.arange(g) + 0.5) / g) - 1.0
    X, Y = np.meshgrid(c, c)
    bank = zernike_bank(num_modes, X, Y)
    bank *= _coverage(g)[None, :, :]
    d2 = (2.0 / g) ** 2
    basis = np.stack([bank[0], bank[0] * X, bank[0] * Y])
    probe = np.stack([np.ones_like(X), X, Y])
    system = np.einsum("bij,aij->ba", probe, basis) * d2
    for k in range(1, bank.shape[0]):
        want = np.array([0.0, _disk_moments(k + 1)[1, 0], _disk_moments(k + 1)[0, 1]])
        have = np.einsum("ij,bij->b", bank[k], probe) * d2
        coef = np.linalg.solve(system, want - have)
        bank[k] += np.einsum("a,aij->ij", coef, basis)
    bank.setflags(write=False)
    return bank


@lru_cache(maxsize=128)
def _cross_corr(i: int, j: int, grid_px: int) -> np.ndarray:
    """X_ij on a (2G-1)^2 grid; after axis relabel the pitch is 1/G in t.

    X_ij(tau) = integral h_i(rho) h_j(rho + tau) d^2 rho with rho-pitch 2/G;
    as a function of t = tau/2 the same array has pitch 1/G and support
    |t| <= 1.
    """
    n = max(i, j)
    bank = _mode_windows(n, grid_px)
    hi = bank[i - 1]
    hj = bank[j - 1]
    d = 2.0 / grid_px
    # d*d is the rho-pitch area element of the inner integral; the extra 4 is
    # the Jacobian of the tau -> t = tau/2 relabel, so consumers may integrate
    # over t with the plain (1/G)^2 element.
    x = signal.fftconvolve(hj, hi[::-1, ::-1]) * (d * d * 4.0)
    x.setflags(write=False)
    return x


def _t_axis(grid_px: int) -> np.ndarray:
    n = grid_px - 1
    return np.arange(-n, n + 1) / grid_px


# ---------------------------------------------------------------------------
# exact-path evaluation (assumption-free, any lag list)


def _direct_values(i: int, j: int, sx: np.ndarray, sy: np.ndarray, grid_px: int) -> np.ndarray:
    """E[a_i(0) a_j(s)] at D/r0=1 by direct summation over the X_ij grid."""
    x = _cross_corr(i, j, grid_px)
    t = _t_axis(grid_px)
    TX, TY = np.meshgrid(t, t)
    out = np.empty(sx.shape, dtype=float)
    flat_x = x.ravel()
    txf = TX.ravel()
    tyf = TY.ravel()
    d2 = (1.0 / grid_px) ** 2
    # chunk the lag list so the (n_lags, n_grid) distance matrix stays small
    sxf = sx.ravel()
    syf = sy.ravel()
    res = np.empty(sxf.shape)
    chunk = max(1, int(2e7) // flat_x.size)
    for a in range(0, sxf.size, chunk):
        b = min(a + chunk, sxf.size)
        dist = np.hypot(sxf[a:b, None] + txf[None, :], syf[a:b, None] + tyf[None, :])
        res[a:b] = (dist ** (5.0 / 3.0)) @ flat_x
    out.flat = _PREF * d2 * res
    return out


# ---------------------------------------------------------------------------
# fast path: near-field FFT grid + far-field moment expansion


@lru_cache(maxsize=128)
def _near_grid(i: int, j: int, grid_px: int) -> tuple[np.ndarray, float, float]:
    """Unnormalized kernel on a fine Cartesian grid covering |s|<=_FINE_EXTENT.

    Returns (values, pitch, half_extent). FFT convolution of X_ij with
    |t|^(5/3) on pitch 1/G.
    """
    g = grid_px
    x = _cross_corr(i, j, g)
    pitch = 1.0 / g
    n_out = int(round(_FINE_EXTENT * g))
    # kernel |t|^(5/3) must cover |s + t| with |s| <= extent, |t| <= 1
    n_k = n_out + g + 2
    ax = np.arange(-n_k, n_k + 1) * pitch
    KX, KY = np.meshgrid(ax, ax)
    K = np.hypot(KX, KY) ** (5.0 / 3.0)
    # integral X(t) K(s + t) dt is a cross-correlation: convolve with flip
    conv = signal.fftconvolve(K, x[::-1, ::-1], mode="same")
    vals = _PREF * pitch * pitch * conv
    n_c = n_k - n_out
    vals = vals[n_c : n_c + 2 * n_out + 1, n_c : n_c + 2 * n_out + 1]
    vals.setflags(write=False)
    return vals, pitch, n_out * pitch


_BINOM56 = (1.0, 5.0 / 6.0, -5.0 / 72.0, 35.0 / 1296.0, -455.0 / 31104.0)


@lru_cache(maxsize=64)
def _disk_moments(j: int, max_deg: int = 4) -> np.ndarray:
    """m[a, b] = integral of Z_j rx^a ry^b over the unit disk.

    Polar product rule: Gauss-Legendre radially, uniform angularly; both are
    exact for the polynomial integrands here, unlike the Cartesian pixel grid
    whose edge error is amplified by the far expansion for high orders.
    """
    nodes, weights = np.polynomial.legendre.leggauss(24)
    r = 0.5 * (nodes + 1.0)
    wr = 0.5 * weights * r
    n_th = 256
    th = np.arange(n_th) * (2.0 * np.pi / n_th)
    X = r[:, None] * np.cos(th)[None, :]
    Y = r[:, None] * np.sin(th)[None, :]
    z = zernike_eval(j, X, Y) * wr[:, None] * (2.0 * np.pi / n_th)
    m = np.zeros((max_deg + 1, max_deg + 1))
    for a in range(max_deg + 1):
        for b in range(max_deg + 1 - a):
            m[a, b] = float(np.sum(z * X**a * Y**b))
    m.setflags(write=False)
    return m


@lru_cache(maxsize=512)
def _far_moments(i: int, j: int) -> dict:
    """Moments of the stored X_ij array needed by the far expansion.

    T[(q, a, b)] = integral Y(t) |t|^(2q) tx^a ty^b dt for Y(t) = 4 X(2t),
    the axis-relabelled array consumers integrate against. Expanding the
    t = (u - rho)/2 monomials factorizes every moment into products of
    one-aperture disk moments, so the zero-mean cancellations (the i >= 2
    modes integrate to zero against the aperture) hold exactly instead of
    up to grid error; residual grid error there grows like r^(5/3) and
    ruins high-order tails.
    """
    mi = _disk_moments(i)
    mj = _disk_moments(j)
    T = {}
    for q in range(0, 3):
        max_p = 4 - 2 * q
        for p in range(0, max_p + 1):
            for a in range(0, p + 1):
                b = p - a
                acc = 0.0
                for e in range(q + 1):
                    p1 = 2 * e + a
                    p2 = 2 * (q - e) + b
                    part = 0.0
                    for al in range(p1 + 1):
                        for ga in range(p2 + 1):
                            sgn = -1.0 if ((p1 - al) + (p2 - ga)) % 2 else 1.0
                            part += (
                                math.comb(p1, al)
                                * math.comb(p2, ga)
                                * sgn
                                * mj[al, ga]
                                * mi[p1 - al, p2 - ga]
                            )
                    acc += math.comb(q, e) * part
                T[(q, a, b)] = acc * 0.5 ** (2 * q + p)
    return T


def _far_values(i: int, j: int, sx: np.ndarray, sy: np.ndarray, grid_px: int) -> np.ndarray:
    """Far-field kernel values via the moment expansion (|s| >~ 2.5)."""
    T = _far_moments(i, j)
    r = np.hypot(sx, sy)
    r = np.where(r == 0, 1.0, r)
    cx = sx / r
    cy = sy / r
    acc = np.zeros_like(r)
    # |s + t|^(5/3) = r^(5/3) (1 + u)^(5/6), u = (|t|^2 + 2 s.t)/r^2; group
    # by powers u^k -> terms |t|^(2q) (s_hat . t)^p / r^(k+q), p = k - q.
    for k in range(0, 5):
        for q in range(0, k + 1):
            if k + q > 4:
                continue
            p = k - q
            c = _BINOM56[k] * math.comb(k, q) * 2.0**p
            s_term = np.zeros_like(r)
            for a in range(0, p + 1):
                s_term += math.comb(p, a) * cx**a * cy ** (p - a) * T[(q, a, p - a)]
            acc += c * s_term / r ** (k + q)
    return _PREF * r ** (5.0 / 3.0) * acc


def _kernel_values(i: int, j: int, sx, sy, grid_px: int) -> np.ndarray:
    """Unnormalized kernel at arbitrary lags: near-grid interp + far blend."""
    sx = np.asarray(sx, dtype=float)
    sy = np.asarray(sy, dtype=float)
    sx, sy = np.broadcast_arrays(sx, sy)
    vals, pitch, half = _near_grid(i, j, grid_px)
    r = np.hypot(sx, sy)
    out = np.empty(sx.shape)

    near = r < _FINE_EXTENT
    if np.any(near):
        n = (vals.shape[0] - 1) // 2
        rows = sy[near] / pitch + n
        cols = sx[near] / pitch + n
        out[near] = ndimage.map_coordinates(
            vals, np.vstack([rows, cols]), order=3, mode="nearest"
        )
    far = ~near
    if np.any(far):
        out[far] = _far_values(i, j, sx[far], sy[far], grid_px)
    # blend across the overlap so the splice is continuous
    band = (r >= _FAR_START) & near
    if np.any(band):
        w = (r[band] - _FAR_START) / (_FINE_EXTENT - _FAR_START)
        out[band] = (1 - w) * out[band] + w * _far_values(
            i, j, sx[band], sy[band], grid_px
        )
    return out


@lru_cache(maxsize=128)
def _zero_lag(i: int, grid_px: int) -> float:
    z = np.zeros(1)
    return float(_direct_values(i, i, z, z, grid_px)[0])


def _convergence_warnings(i: int, j: int, grid_px: int) -> tuple[str, ...]:
    """Doubling check at probe lags; a warning string if change > 1e-3."""
    probes = np.array([0.0, 0.5, 1.0, 2.0])
    zeros = np.zeros_like(probes)
    a = _direct_values(i, j, probes, zeros, grid_px)
    b = _direct_values(i, j, probes, zeros, 2 * grid_px)
    scale = max(abs(_zero_lag(i, grid_px)), abs(_zero_lag(j, grid_px)))
    rel = float(np.max(np.abs(a - b)) / scale)
    if rel > 1e-3:
        msg = f"quadrature change {rel:.2e} on doubling {grid_px}->{2 * grid_px}"
        log.warning("kernel (%d,%d): %s", i, j, msg)
        return (msg,)
    return ()


def _build_kernel(
    i: int, j: int, lags_x: np.ndarray, lags_y: np.ndarray, grid_px: int, check: bool
) -> CorrelationKernel:
    SX, SY = np.meshgrid(lags_x, lags_y)
    vals = _kernel_values(i, j, SX, SY, grid_px)
    norm = math.sqrt(_zero_lag(i, grid_px) * _zero_lag(j, grid_px))
    vals = vals / norm
    warnings = _convergence_warnings(i, j, grid_px) if check else ()
    return CorrelationKernel(
        mode_i=i,
        mode_j=j,
        lags_x=np.asarray(lags_x, dtype=float),
        lags_y=np.asarray(lags_y, dtype=float),
        values=vals,
        quadrature_px=grid_px,
        warnings=warnings,
    )


def _resolve_lags(lag_grid) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(lag_grid, LagGrid):
        ax = lag_grid.axis()
        return ax, ax
    if isinstance(lag_grid, tuple) and len(lag_grid) == 2:
        lx = np.asarray(lag_grid[0], dtype=float)
        ly = np.asarray(lag_grid[1], dtype=float)
        if lx.ndim != 1 or ly.ndim != 1:
            raise InvalidArgument("lag axes must be 1-D arrays")
        return lx, ly
    raise InvalidArgument("lag_grid must be a LagGrid or a pair of 1-D axes")


def build_autocorrelation(
    i: int, config, lag_grid, *, quadrature_px: int | None = None, check: bool = True
) -> CorrelationKernel:
    """Correlation of mode i with itself across displacements.

    Piston is rejected: a constant phase offset has no imaging effect and its
    covariance integral diverges with the outer scale.
    """
    if i < 2:
        raise InvalidArgument(f"mode index must be >= 2 (piston excluded), got {i}")
    if i > config.num_modes:
        raise InvalidArgument(f"mode {i} exceeds num_modes {config.num_modes}")
    g = quadrature_px or config.phase_grid_px
    lx, ly = _resolve_lags(lag_grid)
    _check_covers_image(config, lx, ly)
    return _build_kernel(i, i, lx, ly, g, check)


def build_cross_correlation(
    i: int, j: int, config, lag_grid, *, quadrature_px: int | None = None, check: bool = False
) -> CorrelationKernel:
    """Correlation of distinct modes (i, j) across displacements.

    Feeds the approximation-error metrics and test oracles only; the sampler
    deliberately drops cross terms at nonzero lag and restores the zero-lag
    coupling by mixing.
    """
    if i == j:
        raise InvalidArgument("cross-correlation requires i != j")
    if min(i, j) < 2:
        raise InvalidArgument("mode indices must be >= 2 (piston excluded)")
    g = quadrature_px or config.phase_grid_px
    lx, ly = _resolve_lags(lag_grid)
    return _build_kernel(i, j, lx, ly, g, check)


def _check_covers_image(config, lx: np.ndarray, ly: np.ndarray) -> None:
    ext = _image_extent_s(config)
    if lx.max() < ext - 1e-9 or ly.max() < ext - 1e-9:
        raise InvalidArgument(
            f"lag grid extent ({lx.max():.3g}, {ly.max():.3g}) s-units does not "
            f"cover the image extent {ext:.3g}"
        )


def _image_extent_s(config) -> float:
    return max(config.image_width, config.image_height) * config.pixel_step_s


def build_correlation_spec(
    config,
    *,
    cache_dir: str | Path | None = None,
    check: bool = True,
    cover_extra_s: float = 0.0,
) -> CorrelationSpec:
    """Build the sampler's per-mode kernels on the image-matched lag grid.

    The lag grid pitch equals the image pixel pitch in s units and the grid
    spans 1.5x the image extent on each side of zero. cover_extra_s widens
    the covered extent (frozen-flow buffers sweep beyond the image).
    """
    if cover_extra_s < 0:
        raise InvalidArgument("cover_extra_s must be >= 0")
    step = config.pixel_step_s
    ext = 1.5 * (_image_extent_s(config) + cover_extra_s)
    grid = LagGrid(step_s=step, half_extent_s=ext)
    ax = grid.axis()
    g = config.phase_grid_px
    cache = Path(cache_dir) if cache_dir else _default_cache_dir()
    kernels: list[CorrelationKernel | None] = [None]
    do_check = check
    for i in range(2, config.num_modes + 1):
        k = _cached_kernel(i, i, ax, ax, g, cache, do_check)
        do_check = False  # one doubling check per spec build is plenty
        kernels.append(k)
    noll = noll_covariance(config.num_modes, config.d_over_r0)
    return CorrelationSpec(
        num_modes=config.num_modes,
        d_over_r0=config.d_over_r0,
        kernels=tuple(kernels),
        noll=noll,
        step_s=step,
        half_extent_s=float(ax.max()),
    )


# ---------------------------------------------------------------------------
# disk cache

_MAGIC = b"TSKR"
_VERSION = 1


def _default_cache_dir() -> Path | None:
    import os

    env = os.environ.get("TURBSIM_CACHE")
    if env == "":
        return None
    if env:
        return Path(env)
    return Path.home() / ".cache" / "turbsim"


def save_kernel(kernel: CorrelationKernel, path: str | Path) -> None:
    """Write a kernel to the flat binary cache format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = kernel.values.shape
    header = _MAGIC + struct.pack(
        "<IIIIII", _VERSION, kernel.mode_i, kernel.mode_j, h, w, kernel.quadrature_px
    )
    body = np.ascontiguousarray(kernel.values, dtype="<f8").tobytes()
    ax = np.ascontiguousarray(kernel.lags_x, dtype="<f8").tobytes()
    ay = np.ascontiguousarray(kernel.lags_y, dtype="<f8").tobytes()
    path.write_bytes(header + ay + ax + body)


def load_kernel(path: str | Path) -> CorrelationKernel:
    """Read a kernel written by save_kernel."""
    raw = Path(path).read_bytes()
    if len(raw) < 28 or raw[:4] != _MAGIC:
        raise FormatError(f"not a kernel cache file: {path}")
    version, i, j, h, w, g = struct.unpack("<IIIIII", raw[4:28])
    if version != _VERSION:
        raise FormatError(f"unsupported kernel cache version {version}")
    need = 28 + 8 * (h + w + h * w)
    if len(raw) != need:
        raise FormatError(f"kernel cache truncated: {len(raw)} != {need} bytes")
    off = 28
    ly = np.frombuffer(raw, dtype="<f8", count=h, offset=off).copy()
    off += 8 * h
    lx = np.frombuffer(raw, dtype="<f8", count=w, offset=off).copy()
    off += 8 * w
    vals = np.frombuffer(raw, dtype="<f8", count=h * w, offset=off).reshape(h, w).copy()
    return CorrelationKernel(
        mode_i=i, mode_j=j, lags_x=lx, lags_y=ly, values=vals, quadrature_px=g
    )


def _cache_key(i: int, j: int, lx: np.ndarray, ly: np.ndarray, g: int) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(np.ascontiguousarray(lx, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(ly, dtype="<f8").tobytes())
    return f"tskr_i{i}_j{j}_G{g}_{h.hexdigest()[:16]}.bin"


def _cached_kernel(
    i: int, j: int, lx: np.ndarray, ly: np.ndarray, g: int, cache: Path | None, check: bool
) -> CorrelationKernel:
    if cache is None:
        return _build_kernel(i, j, lx, ly, g, check)
    path = cache / _cache_key(i, j, lx, ly, g)
    if path.exists():
        try:
            k = load_kernel(path)
            if k.values.shape == (len(ly), len(lx)):
                return k
        except FormatError:
            log.warning("ignoring unreadable kernel cache %s", path)
    k = _build_kernel(i, j, lx, ly, g, check)
    try:
        save_kernel(k, path)
    except OSError as exc:  # cache is best-effort
        log.warning("could not write kernel cache %s: %s", path, exc)
    return k


# ---------------------------------------------------------------------------
# approximation-quality energy metrics


@dataclass(frozen=True)
class TensorSlices:
    """A_ij(s) sampled on a polar lag set (radii x angles), modes 2..N.

    values[(i, j)] has shape (n_radii, n_angles) and holds raw covariance
    values (coefficient units, not normalized): the energy metrics weigh
    modes against each other, so every slice must stay on the common scale.
    Symmetric in (i, j) storage: only i <= j is stored.
    """

    num_modes: int
    radii: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)
    values: dict = field(repr=False)
    approx: bool = False

    def get(self, i: int, j: int) -> np.ndarray:
        if (i, j) in self.values:
            return self.values[(i, j)]
        return self.values[(j, i)]


def build_tensor_slices(
    config,
    radii,
    *,
    n_angles: int = 64,
    approx: bool = False,
    quadrature_px: int | None = None,
) -> TensorSlices:
    """Sample raw A_ij slices (exact) or the sampler's implied version.

    The approximation keeps only same-mode correlation across space and
    restores zero-lag coupling by mixing: A~_s = L diag(rho_ii(s)) L^T with
    rho the normalized autocorrelations and L L^T the zero-lag matrix.
    Exact slices evaluate the double integral for every pair.
    """
    g = quadrature_px or config.phase_grid_px
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or np.any(radii < 0):
        raise InvalidArgument("radii must be a 1-D non-negative array")
    if n_angles < 1:
        raise InvalidArgument("n_angles must be >= 1")
    angles = np.arange(n_angles) * (2.0 * np.pi / n_angles)
    SX = radii[:, None] * np.cos(angles)[None, :]
    SY = radii[:, None] * np.sin(angles)[None, :]
    n = config.num_modes

    values: dict = {}
    if approx:
        # normalized autocorrelations mixed through the zero-lag factor;
        # using the quadrature zero-lag matrix (not the closed form) makes
        # the approx slices match the exact ones at s=0 identically
        z = np.zeros(1)
        A0 = np.empty((n - 1, n - 1))
        for a in range(2, n + 1):
            for b in range(a, n + 1):
                v = float(_direct_values(a, b, z, z, g)[0])
                A0[a - 2, b - 2] = v
                A0[b - 2, a - 2] = v
        try:
            Lm = np.linalg.cholesky(A0)
        except np.linalg.LinAlgError:
            eps = 1e-12 * np.trace(A0) / (n - 1)
            Lm = np.linalg.cholesky(A0 + eps * np.eye(n - 1))
        rho = np.empty((n - 1,) + SX.shape)
        for i in range(2, n + 1):
            rho[i - 2] = _kernel_values(i, i, SX, SY, g) / _zero_lag(i, g)
        for a in range(n - 1):
            for b in range(a, n - 1):
                acc = np.zeros(SX.shape)
                for k in range(0, min(a, b) + 1):
                    acc += Lm[a, k] * Lm[b, k] * rho[k]
                values[(a + 2, b + 2)] = acc
    else:
        for a in range(2, n + 1):
            for b in range(a, n + 1):
                values[(a, b)] = _kernel_values(a, b, SX, SY, g)
    return TensorSlices(
        num_modes=n, radii=radii, angles=angles, values=values, approx=approx
    )


@dataclass(frozen=True)
class EnergyCurves:
    """Cumulative angular-integrated energy of the correlation tensor.

    full/approx are E(s) and its sampler-implied counterpart; residual
    accumulates |tr(A^T A) - tr(A~^T A~)| pointwise over the lag plane, so
    it measures net energy mismatch rather than pointwise tensor error.
    Modes up to `excluded_below` are left out of the traces (piston never
    enters; tilts are excluded by convention because they dominate the
    scale and their autocorrelations are carried over exactly anyway).
    """

    s: np.ndarray = field(repr=False)
    full: np.ndarray = field(repr=False)
    approx: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    excluded_below: int = 4


def energy_metrics(
    spec_full: TensorSlices, spec_approx: TensorSlices, s_max: float | None = None
) -> EnergyCurves:
    """Cumulative trace-energy curves comparing exact and sampled statistics.

    E(s) accumulates tr(A(s')^T A(s')) over the polar area element s' ds' dth
    out to s; the residual curve accumulates |tr(A^T A) - tr(A~^T A~)| with
    the absolute value taken before the angular integral, so it starts at
    exactly zero (mixing reproduces zero-lag statistics identically) and
    flattens once the correlations have decayed.
    """
    if spec_full.radii.shape != spec_approx.radii.shape or not np.allclose(
        spec_full.radii, spec_approx.radii
    ):
        raise InvalidArgument("full/approx slices use different radial grids")
    if len(spec_full.angles) != len(spec_approx.angles):
        raise InvalidArgument("full/approx slices use different angular grids")
    if spec_full.num_modes != spec_approx.num_modes:
        raise InvalidArgument("full/approx slices use different mode counts")
    radii = spec_full.radii
    if s_max is not None:
        keep = radii <= s_max + 1e-12
        radii = radii[keep]
    n = spec_full.num_modes
    nr = len(radii)
    na = len(spec_full.angles)
    t_full = np.zeros((nr, na))
    t_appr = np.zeros((nr, na))
    for i in range(4, n + 1):
        for j in range(i, n + 1):
            w = 1.0 if i == j else 2.0  # symmetric off-diagonal pairs
            af = spec_full.get(i, j)[:nr]
            aa = spec_approx.get(i, j)[:nr]
            t_full += w * af * af
            t_appr += w * aa * aa
    dth = 2.0 * np.pi / na

    # cumulative polar integral: angles summed, then trapezoid in s of
    # y(s') s' ds'. A grid that starts above zero gets the inner disk
    # filled in with its first sample held constant.
    def cumulate(y):
        yr = np.sum(y, axis=1) * radii * dth
        out = np.concatenate([[0.0], np.cumsum((yr[1:] + yr[:-1]) * np.diff(radii) / 2)])
        if radii[0] > 0:
            out += np.sum(y[0]) * dth * radii[0] ** 2 / 2
        return out

    return EnergyCurves(
        s=radii,
        full=cumulate(t_full),
        approx=cumulate(t_appr),
        residual=cumulate(np.abs(t_full - t_appr)),
    )

"""PSF synthesis and the low-rank phase-to-space rendering path.

A pixel's PSF is the Fraunhofer intensity of its aperture phase:
|FFT(P e^{-j phi})|^2, padded 4x so the Airy core is well resolved, cropped
to K x K and normalized to unit sum. Rendering a frame exactly would need
one such PSF per pixel (gather mode, the oracle here). The fast path
projects every PSF onto a small PCA basis {mean, phi_1..phi_M} so the frame
becomes M spatially invariant convolutions weighted by per-pixel
coefficients beta, and beta itself is predicted from the Zernike vector by
ridge regression on quadratic features (PSF intensity is quadratic in the
aperture field to leading order, so [a, upper-tri(a a^T)] captures the bulk
of the map).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import FormatError, InvalidArgument
from .fieldgen import ZernikeField
from .turbulence import noll_covariance
from .zernike import disk_mask, phase_from_coeffs

__all__ = [
    "PSFBasis",
    "RenderedFrame",
    "psf_from_phase",
    "p2s_fit",
    "render_p2s",
    "render_exact",
    "displacement_map",
    "tilt_shift_constant",
    "basis_matches_config",
    "save_basis",
    "load_basis",
]

PAD_FACTOR = 4
STRENGTH_REUSE_BAND = 0.25


def basis_matches_config(basis: "PSFBasis", config) -> bool:
    """Whether a fitted basis may render under `config`.

    The kernels and the regression depend on mode count, kernel size, and
    turbulence strength; image dimensions do not matter. Strength may drift
    within the +-25% band (relative to the requested config) before the
    regression's operating point is considered stale.
    """
    if (basis.num_modes, basis.kernel_px) != (config.num_modes, config.psf_kernel_px):
        return False
    if config.d_over_r0 == 0 or basis.d_over_r0 == 0:
        return basis.d_over_r0 == config.d_over_r0
    rel = abs(basis.d_over_r0 - config.d_over_r0) / config.d_over_r0
    return rel <= STRENGTH_REUSE_BAND


@lru_cache(maxsize=16)
def _pupil(grid_px: int) -> np.ndarray:
    m = disk_mask(grid_px).astype(float)
    m.setflags(write=False)
    return m


def _psf_batch(phases: np.ndarray, grid_px: int, kernel_px: int) -> np.ndarray:
    """PSFs for a batch of phase maps (..., G, G) -> (..., K, K), unit sum."""
    g = grid_px
    n_fft = PAD_FACTOR * g
    if kernel_px > n_fft:
        raise InvalidArgument(
            f"psf kernel {kernel_px} exceeds padded transform size {n_fft}"
        )
    pupil = _pupil(g)
    field = pupil * np.exp(-1j * phases)
    padded = np.zeros(phases.shape[:-2] + (n_fft, n_fft), dtype=complex)
    padded[..., :g, :g] = field
    spec = np.fft.fft2(padded)
    psf = np.abs(np.fft.fftshift(spec, axes=(-2, -1))) ** 2
    c = n_fft // 2
    h = kernel_px // 2
    crop = psf[..., c - h : c + h + 1, c - h : c + h + 1]
    s = crop.sum(axis=(-2, -1), keepdims=True)
    return crop / s


def psf_from_phase(phase: np.ndarray, config, kernel_px: int | None = None) -> np.ndarray:
    """K x K PSF of one aperture phase map (radians, off-disk ignored)."""
    k = kernel_px or config.psf_kernel_px
    if k % 2 == 0 or k < 1:
        raise InvalidArgument(f"psf kernel size must be odd and positive, got {k}")
    phase = np.asarray(phase, dtype=float)
    g = config.phase_grid_px
    if phase.shape != (g, g):
        raise InvalidArgument(
            f"phase must be ({g}, {g}) to match phase_grid_px, got {phase.shape}"
        )
    return _psf_batch(phase[None], g, k)[0]


def airy_psf(config, kernel_px: int | None = None) -> np.ndarray:
    """Diffraction-limited PSF (zero phase)."""
    g = config.phase_grid_px
    return psf_from_phase(np.zeros((g, g)), config, kernel_px)


@lru_cache(maxsize=16)
def _tilt_constant_cached(grid_px: int, kernel_px: int) -> tuple[float, float]:
    """Measured centroid shift in PSF pixels per unit tilt coefficient.

    Returns (per a2 along x, per a3 along y), signed. Linearity is exact for
    pure tilt, so two sample points pin the slope.
    """
    from .config import OpticalConfig

    cfg = OpticalConfig(phase_grid_px=grid_px, psf_kernel_px=kernel_px)
    k = kernel_px
    ax = np.arange(k) - k // 2

    def centroid(p):
        return float((p.sum(0) * ax).sum()), float((p.sum(1) * ax).sum())

    coeffs = np.zeros(3)
    slopes = []
    for mode in (1, 2):  # a2 (x-tilt), a3 (y-tilt)
        c = coeffs.copy()
        c[mode] = 1.0
        p = psf_from_phase(phase_from_coeffs(c, grid_px), cfg, k)
        cx, cy = centroid(p)
        slopes.append(cx if mode == 1 else cy)
    return slopes[0], slopes[1]


def tilt_shift_constant(config) -> tuple[float, float]:
    """Image shift (PSF pixels) per unit a2 along x and per unit a3 along y."""
    return _tilt_constant_cached(config.phase_grid_px, config.psf_kernel_px)


@dataclass(frozen=True)
class PSFBasis:
    """Mean PSF + M orthonormal kernels + the Zernike-to-beta regression.

    Kernels are orthonormal under the pixel dot product. The regression maps
    standardized quadratic features of the non-piston coefficients to
    mean-removed basis coefficients. residual_energy is the PCA energy
    fraction outside the kept M components over the training set.
    """

    mean_psf: np.ndarray = field(repr=False)
    kernels: np.ndarray = field(repr=False)  # (M, K, K)
    weights: np.ndarray = field(repr=False)  # (n_features, M)
    feat_mean: np.ndarray = field(repr=False)
    feat_scale: np.ndarray = field(repr=False)
    ridge_lambda: float
    num_modes: int
    d_over_r0: float
    n_samples: int
    residual_energy: float
    config_hash: str = ""

    @property
    def n_components(self) -> int:
        return self.kernels.shape[0]

    @property
    def kernel_px(self) -> int:
        return self.kernels.shape[1]

    def features(self, a: np.ndarray) -> np.ndarray:
        """Quadratic feature vector(s) of coefficient vector(s) (..., N)."""
        a = np.asarray(a, dtype=float)
        v = a[..., 1:]  # piston carries nothing
        n = v.shape[-1]
        iu, ju = np.triu_indices(n)
        quad = v[..., iu] * v[..., ju]
        return np.concatenate([v, quad], axis=-1)

    def map_coeffs(self, a: np.ndarray) -> np.ndarray:
        """Predicted beta for coefficient vector(s): (..., N) -> (..., M)."""
        f = (self.features(a) - self.feat_mean) / self.feat_scale
        return f @ self.weights

    def project_psf(self, psf: np.ndarray) -> np.ndarray:
        """Exact beta of (a batch of) PSFs by orthonormal projection."""
        k = self.kernel_px
        flat = np.asarray(psf).reshape(-1, k * k)
        centered = flat - self.mean_psf.ravel()
        return centered @ self.kernels.reshape(self.n_components, -1).T

    def reconstruct(self, beta: np.ndarray) -> np.ndarray:
        """PSF(s) from beta: mean + sum beta_m phi_m."""
        k = self.kernel_px
        out = beta @ self.kernels.reshape(self.n_components, -1)
        return (out + self.mean_psf.ravel()).reshape(
            np.asarray(beta).shape[:-1] + (k, k)
        )


def p2s_fit(
    config,
    n_samples: int = 2048,
    n_components: int = 32,
    rng: np.random.Generator | None = None,
    *,
    ridge_lambda: float = 1e-3,
    holdout_fraction: float = 0.1,
) -> PSFBasis:
    """Learn the PSF basis and the coefficient regression for a config.

    Draws n_samples Zernike vectors from the aperture statistics, renders
    their exact PSFs, PCA-extracts mean + top components, and ridge-fits the
    quadratic-feature regression on the training split. Held-out mean
    relative L2 of the mapping is measured on the last 10% of draws and
    readable via validation_error().
    """
    M = int(n_components)
    if M < 1:
        raise InvalidArgument("n_components must be >= 1")
    if n_samples < 20 * M:
        raise InvalidArgument(
            f"n_samples ({n_samples}) must be at least 20x components ({20 * M})"
        )
    rng = rng or np.random.default_rng(0)
    g, k, n = config.phase_grid_px, config.psf_kernel_px, config.num_modes

    if config.d_over_r0 == 0:
        mean = airy_psf(config)
        kernels = mean[None] / math.sqrt(float((mean * mean).sum()))
        nf = (n - 1) + (n - 1) * n // 2
        return PSFBasis(
            mean_psf=mean,
            kernels=kernels,
            weights=np.zeros((nf, 1)),
            feat_mean=np.zeros(nf),
            feat_scale=np.ones(nf),
            ridge_lambda=ridge_lambda,
            num_modes=n,
            d_over_r0=0.0,
            n_samples=n_samples,
            residual_energy=0.0,
            config_hash=config.hash(),
        )

    noll = noll_covariance(n, config.d_over_r0)
    draws = rng.standard_normal((n_samples, n))
    coeffs = draws @ noll.cholesky.T

    psfs = np.empty((n_samples, k, k))
    chunk = max(1, 2**24 // (PAD_FACTOR * g) ** 2)
    for a in range(0, n_samples, chunk):
        b = min(a + chunk, n_samples)
        phases = phase_from_coeffs(coeffs[a:b], g)
        psfs[a:b] = _psf_batch(phases, g, k)

    flat = psfs.reshape(n_samples, -1)
    mean = flat.mean(axis=0)
    centered = flat - mean
    # economy SVD: components are right singular vectors
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    energy = svals**2
    rank = int((energy > energy[0] * 1e-12).sum()) if energy.size else 0
    m_eff = min(M, max(rank, 1))
    if m_eff < M:
        import logging

        logging.getLogger(__name__).warning(
            "PCA rank %d below requested %d components; reducing", rank, M
        )
    kernels = vt[:m_eff]
    residual = float(energy[m_eff:].sum() / energy.sum()) if energy.sum() > 0 else 0.0

    beta = centered @ kernels.T  # exact projections of the training set

    basis_stub = PSFBasis(
        mean_psf=mean.reshape(k, k),
        kernels=kernels.reshape(m_eff, k, k),
        weights=np.zeros((1, 1)),
        feat_mean=np.zeros(1),
        feat_scale=np.ones(1),
        ridge_lambda=ridge_lambda,
        num_modes=n,
        d_over_r0=config.d_over_r0,
        n_samples=n_samples,
        residual_energy=residual,
        config_hash=config.hash(),
    )
    feats = basis_stub.features(coeffs)
    n_hold = max(1, int(holdout_fraction * n_samples))
    tr = slice(0, n_samples - n_hold)
    ho = slice(n_samples - n_hold, n_samples)

    f_mean = feats[tr].mean(axis=0)
    f_scale = feats[tr].std(axis=0)
    f_scale[f_scale < 1e-12] = 1.0
    ft = (feats[tr] - f_mean) / f_scale
    lam = ridge_lambda * ft.shape[0]
    gram = ft.T @ ft + lam * np.eye(ft.shape[1])
    weights = np.linalg.solve(gram, ft.T @ beta[tr])

    basis = PSFBasis(
        mean_psf=mean.reshape(k, k),
        kernels=kernels.reshape(m_eff, k, k),
        weights=weights,
        feat_mean=f_mean,
        feat_scale=f_scale,
        ridge_lambda=ridge_lambda,
        num_modes=n,
        d_over_r0=config.d_over_r0,
        n_samples=n_samples,
        residual_energy=residual,
        config_hash=config.hash(),
    )
    # held-out mapping quality: mean relative L2 on reconstructed PSFs
    pred = basis.map_coeffs(coeffs[ho])
    true_psf = flat[ho]
    pred_psf = basis.reconstruct(pred).reshape(pred.shape[0], -1)
    rel = np.linalg.norm(pred_psf - true_psf, axis=1) / np.linalg.norm(true_psf, axis=1)
    object.__setattr__(basis, "_validation_rel_l2", float(rel.mean()))
    return basis


def validation_error(basis: PSFBasis) -> float | None:
    """Held-out mean relative L2 of the coefficient mapping, if measured."""
    return getattr(basis, "_validation_rel_l2", None)


@dataclass(frozen=True)
class RenderedFrame:
    """One rendered frame plus the coefficient planes that produced it."""

    image: np.ndarray = field(repr=False)
    beta: np.ndarray | None = field(repr=False)
    seed: int = 0
    config_hash: str = ""
    render_mode: str = "p2s"


def _reflect_pad(img: np.ndarray, margin: int) -> np.ndarray:
    return np.pad(img, margin, mode="reflect")


def _as_gray_channels(image: np.ndarray) -> list[np.ndarray]:
    image = np.asarray(image, dtype=float)
    if image.ndim == 2:
        return [image]
    if image.ndim == 3 and image.shape[2] in (3, 4):
        return [image[:, :, c] for c in range(min(image.shape[2], 3))]
    raise InvalidArgument(f"image must be HxW or HxWx3, got {image.shape}")


def _stack_channels(channels: list[np.ndarray], like: np.ndarray) -> np.ndarray:
    if np.asarray(like).ndim == 2:
        return channels[0]
    return np.stack(channels, axis=2)


def render_p2s(
    image: np.ndarray,
    field_or_beta,
    basis: PSFBasis,
    config,
    *,
    seed: int = 0,
) -> RenderedFrame:
    """Render through the basis: M invariant convolutions + pointwise mixing.

    `field_or_beta` is a ZernikeField (betas predicted by the regression) or
    precomputed beta planes (H, W, M). Boundaries are reflect-padded so the
    exact gather path sees identical neighborhoods.
    """
    if isinstance(field_or_beta, ZernikeField):
        if field_or_beta.num_modes != basis.num_modes:
            raise InvalidArgument("field mode count does not match basis")
        if not basis_matches_config(basis, config):
            raise InvalidArgument(
                "basis geometry or strength is incompatible with this config"
            )
        beta = basis.map_coeffs(field_or_beta.a)
    else:
        beta = np.asarray(field_or_beta, dtype=float)
    channels = _as_gray_channels(image)
    H, W = channels[0].shape
    if beta.shape[:2] != (H, W) or beta.shape[2] != basis.n_components:
        raise InvalidArgument(
            f"beta planes {beta.shape} do not match image {H}x{W} "
            f"and basis M={basis.n_components}"
        )
    k = basis.kernel_px
    margin = k // 2
    out_channels = []
    for ch in channels:
        padded = _reflect_pad(ch, margin)
        acc = signal.fftconvolve(padded, basis.mean_psf, mode="valid")
        for m in range(basis.n_components):
            conv = signal.fftconvolve(padded, basis.kernels[m], mode="valid")
            acc += beta[:, :, m] * conv
        out_channels.append(np.clip(acc, 0.0, 1.0))
    return RenderedFrame(
        image=_stack_channels(out_channels, image),
        beta=beta,
        seed=seed,
        config_hash=config.hash(),
        render_mode="p2s",
    )


def project_field_betas(zfield: ZernikeField, basis: PSFBasis, config) -> np.ndarray:
    """Exact beta planes: per-pixel PSF, orthonormally projected.

    As slow as exact rendering; this is the decomposition-fidelity reference
    (isolates basis truncation error from regression error).
    """
    H, W, n = zfield.a.shape
    g, k = config.phase_grid_px, config.psf_kernel_px
    beta = np.empty((H, W, basis.n_components))
    flat_a = zfield.a.reshape(H * W, n)
    chunk = max(1, 2**24 // (PAD_FACTOR * g) ** 2)
    for s in range(0, H * W, chunk):
        e = min(s + chunk, H * W)
        phases = phase_from_coeffs(flat_a[s:e], g)
        psfs = _psf_batch(phases, g, k)
        beta.reshape(H * W, -1)[s:e] = basis.project_psf(psfs)
    return beta


def render_exact(
    image: np.ndarray, zfield: ZernikeField, config, *, seed: int = 0
) -> RenderedFrame:
    """Gather-mode exact render: every output pixel uses its own PSF.

    The reference implementation for rendering fidelity; cost scales with
    H*W PSF transforms.
    """
    channels = _as_gray_channels(image)
    H, W = channels[0].shape
    if zfield.a.shape[:2] != (H, W):
        raise InvalidArgument(
            f"field geometry {zfield.a.shape[:2]} does not match image {H}x{W}"
        )
    g, k = config.phase_grid_px, config.psf_kernel_px
    margin = k // 2
    flat_a = zfield.a.reshape(H * W, -1)
    padded = [np.ascontiguousarray(_reflect_pad(ch, margin)) for ch in channels]
    wins = [np.lib.stride_tricks.sliding_window_view(p, (k, k)) for p in padded]
    out = [np.empty((H, W)) for _ in channels]
    chunk_rows = max(1, (2**24 // (PAD_FACTOR * g) ** 2) // W)
    for r0 in range(0, H, chunk_rows):
        r1 = min(r0 + chunk_rows, H)
        phases = phase_from_coeffs(flat_a[r0 * W : r1 * W], g)
        psfs = _psf_batch(phases, g, k).reshape(r1 - r0, W, k, k)
        flipped = psfs[:, :, ::-1, ::-1]
        for ch_i, wv in enumerate(wins):
            out[ch_i][r0:r1] = np.einsum(
                "hwkl,hwkl->hw", wv[r0:r1], flipped, optimize=True
            )
    out = [np.clip(o, 0.0, 1.0) for o in out]
    return RenderedFrame(
        image=_stack_channels(out, image),
        beta=None,
        seed=seed,
        config_hash=config.hash(),
        render_mode="exact",
    )


def displacement_map(zfield: ZernikeField, config) -> np.ndarray:
    """Apparent image shift per pixel (dx, dy in PSF pixels) from the tilts."""
    cx, cy = tilt_shift_constant(config)
    out = np.empty(zfield.a.shape[:2] + (2,))
    out[:, :, 0] = cx * zfield.a[:, :, 1]
    out[:, :, 1] = cy * zfield.a[:, :, 2]
    return out


# ---------------------------------------------------------------------------
# basis serialization

_MAGIC = b"TSPB"
_VERSION = 1


def save_basis(basis: PSFBasis, path: str | Path) -> None:
    """Write the basis; floats stored f64 so orthonormality survives exactly."""
    m = basis.n_components
    k = basis.kernel_px
    nf = basis.weights.shape[0]
    hash_bytes = basis.config_hash.encode()[:16].ljust(16, b"\0")
    header = _MAGIC + struct.pack(
        "<IIIIdIIdd",
        _VERSION,
        m,
        k,
        nf,
        basis.ridge_lambda,
        basis.num_modes,
        basis.n_samples,
        basis.d_over_r0,
        basis.residual_energy,
    )
    parts = [header, hash_bytes]
    for arr in (
        basis.mean_psf,
        basis.kernels,
        basis.weights,
        basis.feat_mean,
        basis.feat_scale,
    ):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_basis(path: str | Path) -> PSFBasis:
    """Read a basis written by save_basis."""
    raw = Path(path).read_bytes()
    head = struct.calcsize("<IIIIdIIdd")
    if len(raw) < 4 + head + 16 or raw[:4] != _MAGIC:
        raise FormatError(f"not a basis file: {path}")
    version, m, k, nf, lam, n_modes, n_samp, dr0, resid = struct.unpack(
        "<IIIIdIIdd", raw[4 : 4 + head]
    )
    if version != _VERSION:
        raise FormatError(f"unsupported basis version {version}")
    off = 4 + head
    config_hash = raw[off : off + 16].rstrip(b"\0").decode()
    off += 16
    sizes = [k * k, m * k * k, nf * m, nf, nf]
    need = off + 8 * sum(sizes)
    if len(raw) != need:
        raise FormatError(f"basis file truncated: {len(raw)} != {need} bytes")
    arrs = []
    for s in sizes:
        arrs.append(np.frombuffer(raw, dtype="<f8", count=s, offset=off).copy())
        off += 8 * s
    return PSFBasis(
        mean_psf=arrs[0].reshape(k, k),
        kernels=arrs[1].reshape(m, k, k),
        weights=arrs[2].reshape(nf, m),
        feat_mean=arrs[3],
        feat_scale=arrs[4],
        ridge_lambda=lam,
        num_modes=n_modes,
        d_over_r0=dr0,
        n_samples=n_samp,
        residual_energy=resid,
        config_hash=config_hash,
    )

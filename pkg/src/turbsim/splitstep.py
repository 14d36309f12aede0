"""Split-step wave propagation oracle.

Kolmogorov phase screens + angular-spectrum Fresnel stepping on a fixed
grid, used as the statistical ground truth for the dense-field sampler and
as the runtime baseline. A Gaussian-apodized beam (Rayleigh range far beyond
the path, so quasi-collimated) is launched analytically at the first screen
plane and stepped numerically through the remaining path: exactly one
counted propagation leg per screen.

Screens use FFT filtering of white noise by sqrt(PSD) with the DC bin
zeroed, plus a sparse-spectrum low-frequency completion: the FFT grid cannot
represent power below its frequency step, and that band carries most of the
aperture tilt variance (the deficit decays only as (aperture/extent)^(1/3),
so no affordable grid escapes it). The completion draws a few hundred random
low frequencies importance-sampled from the spectrum (radial density
~ kappa^(-2/3), integrable at zero, needing no inner cutoff) as explicit
cosines; every aperture statistic is then unbiased in expectation. Pass
lowband=None for the bare FFT generator.

Aperture statistics are read through windows of the propagated field:
projecting a window displaced by d samples every screen displaced by the
same d, which is precisely the rigid-displacement correlation model the
sampler uses, so oracle and kernels are directly comparable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.fft import dctn, idctn

from .errors import InvalidArgument
from .zernike import project_phase

__all__ = [
    "PhaseScreen",
    "PropagationPlan",
    "LowBand",
    "FftCounter",
    "fft_counter",
    "make_screen",
    "make_screens",
    "build_plan",
    "angular_spectrum_step",
    "propagate_point",
    "vacuum_field",
    "unwrap_phase",
    "splitstep_zernike_stats",
    "splitstep_benchmark",
    "ZernikeStats",
]


class FftCounter:
    """Counts propagation legs so benchmarks can assert the expected work."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


fft_counter = FftCounter()


@dataclass(frozen=True)
class LowBand:
    """Sparse-spectrum completion below the FFT grid's frequency step."""

    n_components: int = 192
    cutoff_bins: float = 3.0
    coarse_px: int = 48

    def __post_init__(self):
        if self.n_components < 1:
            raise InvalidArgument("lowband needs at least one component")
        if self.cutoff_bins <= 0:
            raise InvalidArgument("lowband cutoff must be positive")


@dataclass(frozen=True)
class PhaseScreen:
    """One turbulent phase plane (radians) with its generation metadata."""

    values: np.ndarray = field(repr=False)
    pitch_m: float
    r0_m: float
    z_m: float = 0.0
    seed: int = 0

    @property
    def size_px(self) -> int:
        return self.values.shape[0]


def _fft_screen_pair(
    r0_m: float, size_px: int, pitch_m: float, rng: np.random.Generator, cutoff_bins: float
) -> tuple[np.ndarray, np.ndarray]:
    """Two independent FFT screens (Re/Im of one filtered complex pass)."""
    S = size_px
    fx = np.fft.fftfreq(S, d=pitch_m)
    KX, KY = np.meshgrid(fx, fx)
    kk = np.hypot(KX, KY)
    dk = 1.0 / (S * pitch_m)
    filt = np.zeros((S, S))
    hi = kk >= cutoff_bins * dk - 1e-12 * dk
    filt[hi] = np.sqrt(0.023 * r0_m ** (-5.0 / 3.0) * kk[hi] ** (-11.0 / 3.0)) * dk
    filt[0, 0] = 0.0
    w = rng.standard_normal((S, S)) + 1j * rng.standard_normal((S, S))
    g = np.fft.ifft2(filt * w) * (S * S)
    return np.ascontiguousarray(g.real), np.ascontiguousarray(g.imag)


def _lowband_component(
    r0_m: float,
    size_px: int,
    pitch_m: float,
    rng: np.random.Generator,
    band: LowBand,
) -> np.ndarray:
    """Sparse-cosine low band, evaluated coarse and bicubically upsampled.

    Frequencies kappa_q = B_c u^3 (u uniform) realize the importance density
    p(kappa) ~ Phi(kappa) kappa^2; weights make each aperture statistic
    unbiased. Components are band-limited to B_c, far below the coarse
    grid's Nyquist, so the upsample is faithful.
    """
    S = size_px
    bc = band.cutoff_bins / (S * pitch_m)
    Q = band.n_components
    u = rng.random(Q)
    kap = bc * np.maximum(u, 1e-12) ** 3
    ang = 2.0 * np.pi * rng.random(Q)
    psi = 2.0 * np.pi * rng.random(Q)
    wq = 0.023 * r0_m ** (-5.0 / 3.0) * kap ** (-2.0) * 6.0 * np.pi * bc ** (1.0 / 3.0) / Q
    amp = np.sqrt(2.0 * wq)

    C = min(band.coarse_px, S)
    coords = (np.arange(C) + 0.5) * (S / C) - 0.5  # coarse centers, fine-px units
    x = coords * pitch_m
    phase_x = np.outer(kap * np.cos(ang), x)  # (Q, C)
    phase_y = np.outer(kap * np.sin(ang), x)
    # cos(2 pi (kx X + ky Y) + psi) accumulated over components
    low_c = np.einsum(
        "q,qyx->yx",
        amp,
        np.cos(2.0 * np.pi * (phase_y[:, :, None] + phase_x[:, None, :]) + psi[:, None, None]),
    )
    if C == S:
        low = low_c
    else:
        # map fine pixel centers into coarse index coordinates
        fine = (np.arange(S) - coords[0]) * (C / S)
        gy, gx = np.meshgrid(fine, fine, indexing="ij")
        low = ndimage.map_coordinates(low_c, [gy, gx], order=3, mode="nearest")
    low -= low.mean()
    return low


def make_screen(
    r0_m: float,
    size_px: int,
    pitch_m: float,
    rng: np.random.Generator,
    *,
    lowband: LowBand | None = LowBand(),
    z_m: float = 0.0,
    seed: int = 0,
) -> PhaseScreen:
    """Generate one phase screen (see module docstring for the method)."""
    return next(
        make_screens(1, r0_m, size_px, pitch_m, rng, lowband=lowband, z_m=z_m, seed=seed)
    )


def make_screens(
    count: int,
    r0_m: float,
    size_px: int,
    pitch_m: float,
    rng: np.random.Generator,
    *,
    lowband: LowBand | None = LowBand(),
    z_m: float = 0.0,
    seed: int = 0,
):
    """Yield `count` independent screens, two per FFT pass."""
    if r0_m <= 0 or pitch_m <= 0:
        raise InvalidArgument("r0 and pitch must be positive")
    S = size_px
    if S < 2 or (S & (S - 1)) != 0:
        raise InvalidArgument(f"screen size must be a power of two, got {S}")
    cutoff = lowband.cutoff_bins if lowband else 1.0
    produced = 0
    while produced < count:
        a, b = _fft_screen_pair(r0_m, S, pitch_m, rng, cutoff)
        for base in (a, b):
            if produced >= count:
                break
            if lowband is not None:
                base = base + _lowband_component(r0_m, S, pitch_m, rng, lowband)
                base -= base.mean()
            yield PhaseScreen(
                values=base, pitch_m=pitch_m, r0_m=r0_m, z_m=z_m, seed=seed
            )
            produced += 1


@dataclass(frozen=True)
class PropagationPlan:
    """Geometry of one split-step path.

    Screens sit at z_screens (distances from the source); leg i propagates
    from screen i to screen i+1 (the last leg reaches the aperture plane).
    The launch at the first screen plane is analytic, so the number of
    counted legs equals the number of screens. r0_partition composes to the
    path r0 by the plain 5/3-power sum.
    """

    num_screens: int
    r0_partition: tuple
    z_screens: tuple
    leg_distances: tuple
    grid_px: int
    pitch_m: float
    wavelength_m: float
    path_length_m: float
    aperture_diameter_m: float
    beam_waist_m: float

    def __post_init__(self):
        if self.num_screens < 1:
            raise InvalidArgument("plan needs at least one screen")
        if len(self.r0_partition) != self.num_screens:
            raise InvalidArgument("r0 partition length must equal screen count")
        if len(self.z_screens) != self.num_screens:
            raise InvalidArgument("screen position count must equal screen count")
        if len(self.leg_distances) != self.num_screens:
            raise InvalidArgument("one propagation leg per screen is required")
        total = sum(self.leg_distances) + self.z_screens[0]
        if abs(total - self.path_length_m) > 1e-6 * self.path_length_m:
            raise InvalidArgument("legs plus first-screen offset must span the path")
        dz_max = max(self.leg_distances)
        limit = self.grid_px * self.pitch_m**2 / self.wavelength_m
        if dz_max > limit:
            good = math.sqrt(self.wavelength_m * dz_max / self.grid_px)
            raise InvalidArgument(
                f"angular-spectrum sampling violated: leg {dz_max:.3g} m exceeds "
                f"S*pitch^2/lambda = {limit:.3g} m; use pitch >= {good:.3e} m "
                f"or a larger grid"
            )

    @property
    def composite_r0_m(self) -> float:
        return float(sum(r ** (-5.0 / 3.0) for r in self.r0_partition) ** (-3.0 / 5.0))


def build_plan(
    config,
    *,
    num_screens: int = 5,
    grid_px: int = 512,
    pitch_m: float | None = None,
    beam_waist_m: float | None = None,
) -> PropagationPlan:
    """Equal-strength partition, screens at the segment midpoints."""
    if config.d_over_r0 <= 0:
        raise InvalidArgument("split-step oracle needs d_over_r0 > 0")
    L = config.path_length_m
    M = num_screens
    r0 = config.r0_m
    r0_i = r0 * M ** (3.0 / 5.0)
    z = tuple(L * (i - 0.5) / M for i in range(1, M + 1))
    legs = tuple(
        (z[i + 1] - z[i] if i + 1 < M else L - z[i]) for i in range(M)
    )
    if pitch_m is None:
        pitch_m = config.aperture_diameter_m / 72.0
    if beam_waist_m is None:
        beam_waist_m = 2.5 * config.aperture_diameter_m
    return PropagationPlan(
        num_screens=M,
        r0_partition=(r0_i,) * M,
        z_screens=z,
        leg_distances=legs,
        grid_px=grid_px,
        pitch_m=pitch_m,
        wavelength_m=config.wavelength_m,
        path_length_m=L,
        aperture_diameter_m=config.aperture_diameter_m,
        beam_waist_m=beam_waist_m,
    )


def _grid_coords(plan: PropagationPlan) -> np.ndarray:
    S = plan.grid_px
    return (np.arange(S) - S / 2 + 0.5) * plan.pitch_m


@lru_cache(maxsize=8)
def _freq_sq(grid_px: int, pitch_m: float) -> np.ndarray:
    f = np.fft.fftfreq(grid_px, d=pitch_m)
    FX, FY = np.meshgrid(f, f)
    out = FX * FX + FY * FY
    out.setflags(write=False)
    return out


def angular_spectrum_step(
    field_z: np.ndarray, pitch_m: float, wavelength_m: float, dz_m: float
) -> np.ndarray:
    """One Fresnel transfer-function leg; increments the work counter."""
    fft_counter.count += 1
    f2 = _freq_sq(field_z.shape[-1], pitch_m)
    tf = np.exp(-1j * np.pi * wavelength_m * dz_m * f2)
    return np.fft.ifft2(np.fft.fft2(field_z) * tf)


def _gaussian_beam(plan: PropagationPlan, z_m: float, center_m: float = 0.0) -> np.ndarray:
    """Analytic Gaussian-beam field at distance z (waist at the source).

    Quasi-collimated by construction (waist ~ apertures, Rayleigh range many
    times the path), so it doubles as the free-space reference.
    """
    lam = plan.wavelength_m
    w0 = plan.beam_waist_m
    zr = np.pi * w0 * w0 / lam
    x = _grid_coords(plan) - center_m
    X, Y = np.meshgrid(x, _grid_coords(plan))
    r2 = X * X + Y * Y
    w = w0 * math.sqrt(1.0 + (z_m / zr) ** 2)
    k = 2.0 * np.pi / lam
    gouy = math.atan2(z_m, zr)
    amp = (w0 / w) * np.exp(-r2 / (w * w))
    if z_m == 0:
        return amp.astype(complex)
    R = z_m * (1.0 + (zr / z_m) ** 2)
    return amp * np.exp(1j * (k * r2 / (2.0 * R) - gouy))


def propagate_point(
    plan: PropagationPlan, source_offset_m: float = 0.0, screens: tuple = ()
) -> np.ndarray:
    """Complex field at the aperture plane after all screens and legs.

    `screens` must match the plan's screen count, size and pitch; an empty
    tuple propagates vacuum. The launch at the first screen plane is the
    analytic beam, then one numerical leg per screen.
    """
    if screens and len(screens) != plan.num_screens:
        raise InvalidArgument(
            f"plan expects {plan.num_screens} screens, got {len(screens)}"
        )
    for sc in screens:
        if sc.size_px != plan.grid_px or abs(sc.pitch_m - plan.pitch_m) > 1e-12:
            raise InvalidArgument("screen grid does not match the plan grid")
    u = _gaussian_beam(plan, plan.z_screens[0], source_offset_m)
    for i in range(plan.num_screens):
        if screens:
            u = u * np.exp(-1j * screens[i].values)
        u = angular_spectrum_step(u, plan.pitch_m, plan.wavelength_m, plan.leg_distances[i])
    return u


@lru_cache(maxsize=4)
def vacuum_field(plan: PropagationPlan) -> np.ndarray:
    """The zero-screen propagation for this plan (cached; phase reference)."""
    out = propagate_point(plan, 0.0, ())
    out.setflags(write=False)
    return out


def unwrap_phase(wrapped: np.ndarray) -> np.ndarray:
    """2-D least-squares phase unwrapping (DCT Poisson solve, Neumann BC)."""
    psi = np.asarray(wrapped, dtype=float)
    M, N = psi.shape

    def wrap(d):
        return (d + np.pi) % (2.0 * np.pi) - np.pi

    dx = wrap(np.diff(psi, axis=1))
    dy = wrap(np.diff(psi, axis=0))
    rho = np.zeros((M, N))
    rho[:, :-1] += dx
    rho[:, 1:] -= dx
    rho[:-1, :] += dy
    rho[1:, :] -= dy
    rho_hat = dctn(rho, type=2, norm="ortho")
    ii = 2.0 * np.cos(np.pi * np.arange(M) / M) - 2.0
    jj = 2.0 * np.cos(np.pi * np.arange(N) / N) - 2.0
    denom = ii[:, None] + jj[None, :]
    denom[0, 0] = 1.0
    phi_hat = rho_hat / denom
    phi_hat[0, 0] = 0.0
    return idctn(phi_hat, type=2, norm="ortho")


@dataclass(frozen=True)
class ZernikeStats:
    """Monte-Carlo aperture statistics extracted from propagated fields."""

    covariance: np.ndarray = field(repr=False)
    covariance_sigma: np.ndarray = field(repr=False)
    tilt_s: np.ndarray = field(repr=False)
    tilt_corr: np.ndarray = field(repr=False)
    n_trials: int
    num_modes: int


def _window_slices(plan: PropagationPlan, offset_px: tuple[int, int], win_px: int):
    S = plan.grid_px
    oy, ox = offset_px
    y0 = S // 2 - win_px // 2 + oy
    x0 = S // 2 - win_px // 2 + ox
    if y0 < 0 or x0 < 0 or y0 + win_px > S or x0 + win_px > S:
        raise InvalidArgument("aperture window leaves the propagation grid")
    return slice(y0, y0 + win_px), slice(x0, x0 + win_px)


def _window_coeffs(ratio: np.ndarray, sy: slice, sx: slice, num_modes: int) -> np.ndarray:
    phase = unwrap_phase(np.angle(ratio[sy, sx]))
    return project_phase(phase, num_modes)


def splitstep_zernike_stats(
    plan: PropagationPlan,
    config,
    n_trials: int,
    *,
    s_values: tuple = (),
    rng: np.random.Generator | None = None,
    n_var_windows: int = 4,
    n_batches: int = 20,
    lowband: LowBand | None = LowBand(),
) -> ZernikeStats:
    """Project propagated apertures onto Zernike modes, Monte-Carlo style.

    Per trial, fresh screens are propagated once and the aperture disk is
    read out at several displaced windows: extra windows sharpen the
    covariance estimate (correlated but unbiased), and window pairs separated
    by s aperture diameters give the spatial tilt correlation samples.
    covariance_sigma is a batch-means standard error per entry.
    """
    if n_trials < 500:
        raise InvalidArgument("oracle statistics need n_trials >= 500")
    if config.d_over_r0 > 8:
        raise InvalidArgument(
            "phase unwrapping is unreliable beyond d_over_r0 = 8; "
            "bound the oracle to gentler turbulence"
        )
    rng = rng or np.random.default_rng(0)
    n = config.num_modes
    win = int(round(plan.aperture_diameter_m / plan.pitch_m))
    vac = vacuum_field(plan)

    # variance windows: center plus a ring well clear of the beam edge
    var_offsets = [(0, 0)]
    ring = int(round(win * 1.05))
    for kx, ky in ((1, 0), (-1, 0), (0, 1)):
        if len(var_offsets) >= n_var_windows:
            break
        var_offsets.append((ky * ring, kx * ring))
    var_slices = [_window_slices(plan, off, win) for off in var_offsets]

    s_values = tuple(float(s) for s in s_values)
    pair_slices = []
    for s in s_values:
        dpx = int(round(s * plan.aperture_diameter_m / plan.pitch_m))
        a = _window_slices(plan, (0, -dpx // 2), win)
        b = _window_slices(plan, (0, dpx - dpx // 2), win)
        pair_slices.append((a, b))

    cov_batches = np.zeros((n_batches, n, n))
    batch_counts = np.zeros(n_batches)
    tilt_acc = np.zeros((len(s_values), 2))
    tilt_cnt = 0

    batch_of = np.minimum(
        (np.arange(n_trials) * n_batches) // n_trials, n_batches - 1
    )
    uniform = len(set(plan.r0_partition)) == 1
    for t in range(n_trials):
        if uniform:
            screens = list(
                make_screens(
                    plan.num_screens,
                    plan.r0_partition[0],
                    plan.grid_px,
                    plan.pitch_m,
                    rng,
                    lowband=lowband,
                )
            )
        else:
            screens = [
                next(
                    make_screens(1, r0_i, plan.grid_px, plan.pitch_m, rng, lowband=lowband, z_m=z_i)
                )
                for r0_i, z_i in zip(plan.r0_partition, plan.z_screens)
            ]
        u = propagate_point(plan, 0.0, tuple(screens))
        ratio = u * np.conj(vac)
        b = batch_of[t]
        for sy, sx in var_slices:
            c = _window_coeffs(ratio, sy, sx, n)
            cov_batches[b] += np.outer(c, c)
            batch_counts[b] += 1
        for idx, (wa, wb) in enumerate(pair_slices):
            ca = _window_coeffs(ratio, wa[0], wa[1], n)
            cb = _window_coeffs(ratio, wb[0], wb[1], n)
            tilt_acc[idx, 0] += ca[1] * cb[1]
            tilt_acc[idx, 1] += ca[2] * cb[2]
        tilt_cnt += 1

    per_batch = cov_batches / batch_counts[:, None, None]
    cov = cov_batches.sum(axis=0) / batch_counts.sum()
    sigma = per_batch.std(axis=0, ddof=1) / math.sqrt(n_batches)
    tilt = tilt_acc / max(tilt_cnt, 1)
    return ZernikeStats(
        covariance=cov,
        covariance_sigma=sigma,
        tilt_s=np.asarray(s_values),
        tilt_corr=tilt,
        n_trials=n_trials,
        num_modes=n,
    )


def splitstep_benchmark(
    plan: PropagationPlan,
    grid_sizes: list,
    *,
    rng: np.random.Generator | None = None,
    batch: int = 16,
) -> list[dict]:
    """Per-frame wall time for a W x H grid of independent point sources.

    Each point costs one full propagation (num_screens legs); points are
    batched through the FFTs for a fair optimized baseline. Returns one row
    per size with timing and the leg-counter reading.
    """
    rng = rng or np.random.default_rng(0)
    rows = []
    for size in grid_sizes:
        if isinstance(size, (tuple, list)):
            W, H = size
        else:
            W = H = int(size)
        if W * H > 64 * 64:
            raise InvalidArgument("split-step point grids beyond 64x64 are unreasonable")
        screens = [
            next(make_screens(1, r0_i, plan.grid_px, plan.pitch_m, rng, z_m=z_i))
            for r0_i, z_i in zip(plan.r0_partition, plan.z_screens)
        ]
        phase_stack = np.stack([np.exp(-1j * s.values) for s in screens])
        n_points = W * H
        fft_counter.reset()
        t0 = time.perf_counter()
        done = 0
        launch = _gaussian_beam(plan, plan.z_screens[0], 0.0)
        while done < n_points:
            nb = min(batch, n_points - done)
            u = np.broadcast_to(launch, (nb,) + launch.shape).copy()
            for i in range(plan.num_screens):
                u *= phase_stack[i]
                f2 = _freq_sq(plan.grid_px, plan.pitch_m)
                tf = np.exp(
                    -1j * np.pi * plan.wavelength_m * plan.leg_distances[i] * f2
                )
                u = np.fft.ifft2(np.fft.fft2(u, axes=(-2, -1)) * tf, axes=(-2, -1))
                fft_counter.count += nb
            done += nb
        elapsed = time.perf_counter() - t0
        rows.append(
            {
                "points": n_points,
                "width": W,
                "height": H,
                "seconds_per_frame": elapsed,
                "seconds_per_point": elapsed / n_points,
                "legs_counted": fft_counter.count,
                "expected_legs": plan.num_screens * n_points,
            }
        )
    return rows

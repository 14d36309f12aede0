"""Dense per-pixel Zernike coefficient fields.

Two-step sampling: draw N independent unit-variance homogeneous Gaussian
fields whose spatial autocorrelations match the per-mode kernels (FFT
filtering of white noise on a padded circulant grid), then mix per pixel
with the Cholesky factor of the zero-lag covariance. The result reproduces
zero-lag statistics exactly and same-mode spatial decay exactly; cross-mode
decay at nonzero lag is the approximation this whole approach trades for
O(N HW log HW) sampling.

Temporal evolution: AR(1) on the pre-mixing fields (stationary marginals by
construction), or frozen flow (crop a drifting window from one oversized
field buffer).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .correlation import CorrelationSpec, build_correlation_spec
from .errors import FormatError, InvalidArgument
from .zernike import phase_from_coeffs

__all__ = [
    "ZernikeField",
    "SamplerState",
    "make_sampler",
    "sample_independent_fields",
    "mix_fields",
    "next_frame_ar",
    "next_frame_frozen",
    "BufferExhausted",
    "save_field",
    "load_field",
]


log = logging.getLogger(__name__)


class BufferExhausted(Exception):
    """Frozen-flow sweep ran past the oversized buffer; caller regenerates."""


@dataclass(frozen=True)
class ZernikeField:
    """Per-pixel Zernike coefficients a[H][W][N] (phase radians).

    Index 0 of the last axis is piston and is identically zero. frame_index
    and seed identify the draw; config_hash ties the field to the geometry
    it was sampled for.
    """

    a: np.ndarray = field(repr=False)
    seed: int
    frame_index: int
    config_hash: str = ""

    def __post_init__(self):
        if self.a.ndim != 3:
            raise InvalidArgument("coefficient tensor must be (H, W, N)")

    @property
    def num_modes(self) -> int:
        return self.a.shape[2]

    def phase_at(self, row: int, col: int, grid_px: int) -> np.ndarray:
        """Aperture phase map of one pixel's coefficient vector."""
        return phase_from_coeffs(self.a[row, col], grid_px)


def _sqrt_psd(
    spec: CorrelationSpec, shape: tuple[int, int], need: tuple[int, int]
) -> np.ndarray:
    """Per-mode sqrt spectral density on the padded circulant grid.

    Each kernel is extended to the torus as lay(c) = K w2 + c (1 - w2): exact
    inside the lag rectangle observable in the (H, W) crop (`need`), cosine
    tapered toward a constant c outside. Any c keeps in-crop lags exact, so c
    is chosen per mode to minimize the clamped negative mass; slowly decaying
    kernels keep their long-range plateau as a shared DC component instead of
    having it ring negative across a hard cutoff. Clamped mass must stay
    under 1% of total energy.
    """
    P, Q = shape
    n = spec.num_modes
    # single precision: the filter loop runs in complex64 and per-sample
    # rounding sits orders of magnitude below every field statistic
    out = np.empty((n, P, Q), np.float32)
    out[0] = 0.0  # piston never sampled
    B = None
    for i in range(1, n):
        k = spec.kernels[i]
        kw, one_minus_w2 = _layout_parts(
            k.values, k.lags_x, k.lags_y, spec.step_s, P, Q, need[0], need[1]
        )
        A = np.fft.fft2(kw).real
        if B is None:
            # geometry-only term, identical for every mode on this grid
            B = np.fft.fft2(one_minus_w2).real
        c = _best_tail_constant(A, B)
        lam = A + c * B
        neg = -lam[lam < 0].sum()
        tot = np.abs(lam).sum()
        frac = neg / tot if tot > 0 else 0.0
        if frac > 0.01:
            raise InvalidArgument(
                f"mode {i + 1} kernel spectrum has {frac:.1%} negative "
                "energy; lag grid too small for this correlation length"
            )
        log.debug("mode %d tail constant %.4f clamped fraction %.2e", i + 1, c, frac)
        np.maximum(lam, 0.0, out=lam)
        # clamping bleeds a little mass out of the variance; rescale so the
        # realized zero lag is exactly 1 and mixing reproduces it exactly
        m = lam.mean()
        if m > 0:
            lam /= m
        out[i] = np.sqrt(lam)
    return out


def _taper_axis(n_torus: int, n_need: int, n_tab: int) -> tuple[np.ndarray, np.ndarray]:
    """Signed torus lags and taper weights for one axis.

    Weight is 1 for |lag| < n_need (exact zone), raised-cosine down to 0 at
    the edge of the usable extent (half torus or tabulation, whichever ends
    first), 0 beyond.
    """
    lag = np.arange(n_torus)
    lag = np.where(lag <= (n_torus - 1) // 2, lag, lag - n_torus)
    a = np.abs(lag)
    flat = n_need - 1
    edge = min((n_torus - 1) // 2, n_tab)
    if edge <= flat:
        w = (a <= edge).astype(float)
    else:
        t = np.clip((a - flat) / (edge - flat), 0.0, 1.0)
        w = 0.5 * (1.0 + np.cos(np.pi * t))
        w[a >= edge] = 0.0
    return lag, w


def _layout_parts(
    values: np.ndarray,
    lags_x: np.ndarray,
    lags_y: np.ndarray,
    step: float,
    P: int,
    Q: int,
    need_h: int,
    need_w: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Kernel-times-taper term and its complement mask, wraparound order.

    The torus layout is lay(c) = K w2 + c (1 - w2) with w2 the separable
    taper; both pieces are returned so the spectrum is affine in c.
    """
    ix = np.rint(lags_x / step).astype(int)
    iy = np.rint(lags_y / step).astype(int)
    lag_x, wx = _taper_axis(Q, need_w, int(ix.max()))
    lag_y, wy = _taper_axis(P, need_h, int(iy.max()))
    kw = np.zeros((P, Q))
    rows = np.nonzero(wy > 0)[0]
    cols = np.nonzero(wx > 0)[0]
    sub = values[np.ix_(lag_y[rows] + int(iy.max()), lag_x[cols] + int(ix.max()))]
    kw[np.ix_(rows, cols)] = sub * (wy[rows][:, None] * wx[cols][None, :])
    return kw, 1.0 - np.outer(wy, wx)


def _best_tail_constant(A: np.ndarray, B: np.ndarray) -> float:
    """Tail constant minimizing clamped mass of lam = A + c B.

    The mass sum(max(-(A + cB), 0)) is piecewise linear and convex in c, so
    the minimum sits on a breakpoint c = -A/B; a sort plus prefix sums finds
    the first point where the subgradient turns non-negative.
    """
    a = A.ravel()
    b = B.ravel()
    live = np.abs(b) > 1e-12 * np.abs(b).max()
    a = a[live]
    b = b[live]
    if a.size == 0:
        return 0.0
    t = -a / b
    order = np.argsort(t)
    bs = b[order]
    # derivative of the clamped mass just right of breakpoint k:
    # -(sum of positive b with t > t_k) - (sum of negative b with t <= t_k)
    pos_suffix = np.cumsum(np.where(bs > 0, bs, 0.0)[::-1])[::-1]
    neg_prefix = np.cumsum(np.where(bs < 0, bs, 0.0))
    pos_after = np.concatenate([pos_suffix[1:], [0.0]])
    grad = -(pos_after + neg_prefix)
    k = int(np.searchsorted(grad >= 0, True))
    k = min(k, t.size - 1)
    return float(np.clip(t[order][k], -1.0, 2.0))


@dataclass
class SamplerState:
    """Mutable sampling state: spectra, RNG, and temporal-mode carry-over.

    Exactly one temporal mode is active. AR carries the previous pre-mixing
    fields; frozen flow carries one oversized buffer and a velocity (s units
    per frame). The RNG is counter-based (Philox) so streams are reproducible
    and cheap to split.
    """

    spec: CorrelationSpec
    height: int
    width: int
    seed: int
    sqrt_psd: np.ndarray = field(repr=False)
    rng: np.random.Generator = field(repr=False)
    mode: str = "ar"
    alpha: float = 0.95
    prev_fields: np.ndarray | None = field(default=None, repr=False)
    velocity: tuple[float, float] = (0.0, 0.0)
    plan_frames: int = 64
    buffer: np.ndarray | None = field(default=None, repr=False)
    buffer_frames: int = 0
    frame_index: int = 0
    config_hash: str = ""

    def __post_init__(self):
        if self.mode not in ("ar", "frozen"):
            raise InvalidArgument(f"temporal mode must be 'ar' or 'frozen', got {self.mode}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgument(f"AR coefficient must be in [0, 1], got {self.alpha}")
        if np.any(self.sqrt_psd < 0):
            raise InvalidArgument("spectral amplitudes must be non-negative")


def _pad_shape(spec: CorrelationSpec, H: int, W: int) -> tuple[int, int]:
    from scipy.fft import next_fast_len

    margin = int(round(spec.half_extent_s / spec.step_s))
    if margin < max(H, W):
        raise InvalidArgument(
            f"image {H}x{W} exceeds the kernel lag extent "
            f"({margin} px); rebuild the correlation spec for this image size"
        )
    # P/2 >= H-1 keeps every in-image separation on a true (unfolded) lag
    return next_fast_len(H + margin), next_fast_len(W + margin)


def make_sampler(
    config,
    *,
    seed: int,
    mode: str = "ar",
    alpha: float = 0.95,
    velocity: tuple[float, float] = (0.25, 0.0),
    plan_frames: int = 64,
    spec: CorrelationSpec | None = None,
    cache_dir=None,
) -> SamplerState:
    """Build a SamplerState for a config (kernels, spectra, Philox stream).

    Frozen flow sweeps an oversized buffer, so its kernels are tabulated on
    a correspondingly wider lag grid; plan_frames sets the sweep horizon a
    single buffer must cover (the buffer is oversized 2x beyond it).
    """
    if plan_frames < 1:
        raise InvalidArgument("plan_frames must be >= 1")
    if spec is None:
        extra = 0.0
        if mode == "frozen":
            step = config.pixel_step_s
            span_y = np.ceil(abs(velocity[0]) * plan_frames / step) * step
            span_x = np.ceil(abs(velocity[1]) * plan_frames / step) * step
            extra = 2.0 * float(max(span_y, span_x))
        spec = build_correlation_spec(config, cache_dir=cache_dir, cover_extra_s=extra)
    H, W = config.image_height, config.image_width
    shape = _pad_shape(spec, H, W)
    sqrt_psd = _sqrt_psd(spec, shape, (H, W))
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    return SamplerState(
        spec=spec,
        height=H,
        width=W,
        seed=int(seed),
        sqrt_psd=sqrt_psd,
        rng=rng,
        mode=mode,
        alpha=float(alpha),
        velocity=tuple(float(v) for v in velocity),
        plan_frames=int(plan_frames),
        config_hash=config.hash(),
    )


def _draw_fields(
    sqrt_psd: np.ndarray, H: int, W: int, rng: np.random.Generator
) -> np.ndarray:
    """N independent unit-variance correlated fields, cropped to H x W.

    Noise is drawn directly in the frequency domain: the DFT of complex
    white Gaussian noise is itself complex white Gaussian scaled by
    sqrt(P*Q), so no forward transform is ever computed. One complex
    draw serves two consecutive modes: filtering by a real even spectrum
    keeps Re and Im parts jointly Gaussian with zero cross-covariance, so
    taking Re for one mode and Im for the next yields independent fields
    while halving the noise volume.
    """
    from scipy.fft import ifft

    n, P, Q = sqrt_psd.shape
    sq = sqrt_psd.astype(np.float32, copy=False)
    out = np.empty((n, H, W), np.float32)
    out[0] = 0.0
    # Re(IFFT(sqrt(PSD) . F)) with F = sqrt(P*Q) w, w unit complex white
    # noise, has autocovariance exactly IFFT(PSD) under numpy's FFT
    # conventions; unit variance follows from kernel(0) = 1. The scale is
    # applied once on the cropped block, and the inverse transform is
    # split per axis so the second pass only touches the H kept rows.
    noise = np.empty((P, 2 * Q), np.float32)
    i = 1
    while i < n:
        rng.standard_normal(out=noise, dtype=np.float32)
        f = noise.view(np.complex64)
        t = ifft(sq[i] * f, axis=0, overwrite_x=True)
        g = ifft(t[:H], axis=1, overwrite_x=True)
        out[i] = g.real[:, :W]
        if i + 1 < n:
            if np.array_equal(sq[i + 1], sq[i]):
                g2 = g
            else:
                t2 = ifft(sq[i + 1] * f, axis=0, overwrite_x=True)
                g2 = ifft(t2[:H], axis=1, overwrite_x=True)
            out[i + 1] = g2.imag[:, :W]
        i += 2
    out[1:] *= np.float32(np.sqrt(P * Q))
    return out


def sample_independent_fields(
    spec_or_state, H: int, W: int, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Draw the N pre-mixing fields f_i[H][W] (piston plane zero).

    Accepts either a SamplerState (uses its spectra and RNG) or a
    CorrelationSpec plus an explicit rng.
    """
    if isinstance(spec_or_state, SamplerState):
        st = spec_or_state
        if (H, W) != (st.height, st.width):
            raise InvalidArgument("H, W must match the sampler state geometry")
        return _draw_fields(st.sqrt_psd, H, W, rng or st.rng)
    spec = spec_or_state
    if rng is None:
        raise InvalidArgument("an rng is required when sampling from a bare spec")
    shape = _pad_shape(spec, H, W)
    sqrt_psd = _sqrt_psd(spec, shape, (H, W))
    return _draw_fields(sqrt_psd, H, W, rng)


def mix_fields(fields: np.ndarray, cholesky: np.ndarray) -> np.ndarray:
    """Pointwise mixing a[x] = L f[x]; returns (H, W, N).

    Exactly linear in the input fields; one matrix product over the stacked
    pixel axis.
    """
    fields = np.asarray(fields)
    if fields.ndim != 3:
        raise InvalidArgument("fields must be (N, H, W)")
    n, H, W = fields.shape
    L = np.asarray(cholesky)
    if L.shape != (n, n):
        raise InvalidArgument(
            f"cholesky factor shape {L.shape} does not match field count {n}"
        )
    flat = fields.reshape(n, H * W)
    if flat.dtype == np.float32 and L.dtype != np.float32:
        L = L.astype(np.float32)
    mixed = L @ flat
    return np.ascontiguousarray(mixed.T.reshape(H, W, n))


def _mixed_frame(state: SamplerState, fields: np.ndarray) -> ZernikeField:
    a = mix_fields(fields, state.spec.noll.cholesky)
    return ZernikeField(
        a=a,
        seed=state.seed,
        frame_index=state.frame_index,
        config_hash=state.config_hash,
    )


def next_frame_ar(state: SamplerState, rng: np.random.Generator | None = None) -> ZernikeField:
    """Advance the AR(1) stream one frame and return the mixed field.

    f <- alpha f_prev + sqrt(1 - alpha^2) g keeps every frame marginally
    identical to a fresh draw; alpha=1 freezes, alpha=0 gives independence.
    """
    if state.mode != "ar":
        raise InvalidArgument("sampler state is not in AR mode")
    rng = rng or state.rng
    if state.prev_fields is None:
        f = _draw_fields(state.sqrt_psd, state.height, state.width, rng)
    elif state.alpha == 1.0:
        f = state.prev_fields
    else:
        g = _draw_fields(state.sqrt_psd, state.height, state.width, rng)
        beta = float(np.sqrt(1.0 - state.alpha**2))
        f = state.alpha * state.prev_fields + beta * g
    state.prev_fields = f
    frame = _mixed_frame(state, f)
    state.frame_index += 1
    return frame


def _fill_frozen_buffer(state: SamplerState, frames: int) -> None:
    vy, vx = state.velocity
    step = state.spec.step_s
    span_y = int(np.ceil(abs(vy) * frames / step))
    span_x = int(np.ceil(abs(vx) * frames / step))
    H = state.height + 2 * span_y  # 2x oversize: requested sweep, doubled
    W = state.width + 2 * span_x
    margin = int(round(state.spec.half_extent_s / step))
    if max(H, W) > margin:
        raise InvalidArgument(
            f"frozen-flow sweep needs a {H}x{W} buffer, beyond the kernel lag "
            f"extent ({margin} px); reduce velocity or frame budget"
        )
    from scipy.fft import next_fast_len

    shape = (next_fast_len(H + margin), next_fast_len(W + margin))
    sqrt_psd = _sqrt_psd(state.spec, shape, (H, W))
    state.buffer = _draw_fields(sqrt_psd, H, W, state.rng)
    state.buffer_frames = 2 * frames
    state.frame_index = 0


def next_frame_frozen(
    state: SamplerState,
    rng: np.random.Generator | None = None,
    *,
    plan_frames: int | None = None,
) -> ZernikeField:
    """Crop the drifting window out of the frozen buffer and mix it.

    The buffer covers twice the plan's sweep; running past it raises
    BufferExhausted so the caller can regenerate with a fresh buffer.
    """
    if state.mode != "frozen":
        raise InvalidArgument("sampler state is not in frozen-flow mode")
    if state.buffer is None:
        _fill_frozen_buffer(state, plan_frames or state.plan_frames)
    vy, vx = state.velocity
    step = state.spec.step_s
    oy = int(round(vy * state.frame_index / step))
    ox = int(round(vx * state.frame_index / step))
    _, BH, BW = state.buffer.shape
    y0 = (BH - state.height) // 2 + oy
    x0 = (BW - state.width) // 2 + ox
    if y0 < 0 or x0 < 0 or y0 + state.height > BH or x0 + state.width > BW:
        raise BufferExhausted(
            f"frame {state.frame_index} sweeps outside the frozen buffer"
        )
    crop = state.buffer[:, y0 : y0 + state.height, x0 : x0 + state.width]
    frame = _mixed_frame(state, crop)
    state.frame_index += 1
    return frame


def reset_frozen(state: SamplerState, plan_frames: int | None = None) -> None:
    """Regenerate the frozen buffer for a new sweep length."""
    state.buffer = None
    _fill_frozen_buffer(state, plan_frames or state.plan_frames)


# ---------------------------------------------------------------------------
# field dumps

_MAGIC = b"TSZF"
_VERSION = 1


def save_field(zf: ZernikeField, path: str | Path) -> None:
    """Write a coefficient field dump (f32, little-endian)."""
    H, W, n = zf.a.shape
    header = _MAGIC + struct.pack(
        "<IIIIQI", _VERSION, H, W, n, zf.seed & 0xFFFFFFFFFFFFFFFF, zf.frame_index
    )
    Path(path).write_bytes(header + np.ascontiguousarray(zf.a, dtype="<f4").tobytes())


def load_field(path: str | Path) -> ZernikeField:
    """Read a coefficient field dump written by save_field."""
    raw = Path(path).read_bytes()
    if len(raw) < 32 or raw[:4] != _MAGIC:
        raise FormatError(f"not a field dump: {path}")
    version, H, W, n, seed, frame = struct.unpack("<IIIIQI", raw[4:32])
    if version != _VERSION:
        raise FormatError(f"unsupported field dump version {version}")
    need = 32 + 4 * H * W * n
    if len(raw) != need:
        raise FormatError(f"field dump truncated: {len(raw)} != {need} bytes")
    a = (
        np.frombuffer(raw, dtype="<f4", count=H * W * n, offset=32)
        .reshape(H, W, n)
        .astype(np.float64)
    )
    return ZernikeField(a=a, seed=seed, frame_index=frame)

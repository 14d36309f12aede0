"""Session and batch orchestration on top of the core stages.

SimSession owns exactly one active config, a sampler, and a cache of fitted
PSF bases keyed by the config fields a basis actually depends on; dataset
generation composes the same stages deterministically (one seed per
sequence, derived from the dataset seed).
"""

from __future__ import annotations

import json
import shutil
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .config import OpticalConfig
from .errors import InvalidArgument
from .fieldgen import (
    SamplerState,
    ZernikeField,
    make_sampler,
    next_frame_ar,
    next_frame_frozen,
    save_field,
)
from .images import load_image, save_image, test_pattern
from .psf import (
    PSFBasis,
    RenderedFrame,
    basis_matches_config,
    displacement_map,
    p2s_fit,
    psf_from_phase,
    render_p2s,
)
from .zernike import phase_from_coeffs

__all__ = [
    "SimSession",
    "DatasetManifest",
    "generate_dataset",
    "bench_fieldgen",
    "basis_seed",
]

_BASIS_SEED_SALT = 0x5EED_BA51


def basis_seed(dataset_seed: int) -> int:
    """Deterministic basis-fit seed derived from a dataset/session seed."""
    return (int(dataset_seed) ^ _BASIS_SEED_SALT) & 0xFFFFFFFF


def _basis_signature(config: OpticalConfig) -> tuple:
    """Config fields a fitted basis depends on, strength excluded."""
    return (config.num_modes, config.psf_kernel_px, config.phase_grid_px)


def basis_compatible(basis: PSFBasis, config: OpticalConfig) -> bool:
    """Reuse policy: exact geometry match, strength within the +-25% band."""
    return basis_matches_config(basis, config)


@dataclass
class SimSession:
    """One interactive simulation: config, sampler, basis cache, source.

    The frame counter is monotone across config changes; every frame is
    rendered under exactly one config snapshot. Basis entries are keyed by
    the geometry signature and checked against the strength band on lookup.
    """

    config: OpticalConfig
    seed: int = 0
    session_id: str = "default"
    mode: str = "ar"
    alpha: float = 0.95
    velocity: tuple = (0.25, 0.0)
    source: np.ndarray | None = None
    sampler: SamplerState | None = dc_field(default=None, repr=False)
    basis_cache: dict = dc_field(default_factory=dict, repr=False)
    frame_counter: int = 0
    config_epoch: int = 0
    perf_ms: dict = dc_field(default_factory=dict)
    last_field: ZernikeField | None = dc_field(default=None, repr=False)
    _frame_times: list = dc_field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.source is None:
            self.source = self._scaled_test_pattern()

    def _scaled_test_pattern(self) -> np.ndarray:
        return test_pattern(self.config.image_height, self.config.image_width)

    # -- configuration ------------------------------------------------------

    def update_config(self, **updates) -> OpticalConfig:
        """Apply a partial update atomically; sampler rebuilds on next frame."""
        new = self.config.with_updates(**updates)
        if new != self.config:
            self.config = new
            self.config_epoch += 1
            self.sampler = None
            if self.source is not None and self.source.shape[:2] != (
                new.image_height,
                new.image_width,
            ):
                self.source = self._scaled_test_pattern()
        return self.config

    def set_source(self, image: np.ndarray) -> None:
        img = np.asarray(image, dtype=float)
        if img.ndim not in (2, 3):
            raise InvalidArgument("source image must be HxW or HxWx3")
        h, w = img.shape[:2]
        if (h, w) != (self.config.image_height, self.config.image_width):
            self.update_config(image_height=h, image_width=w)
        self.source = np.clip(img, 0.0, 1.0)

    # -- basis management ---------------------------------------------------

    def compatible_basis(self) -> PSFBasis | None:
        entry = self.basis_cache.get(_basis_signature(self.config))
        if entry is not None and basis_compatible(entry, self.config):
            return entry
        return None

    def adopt_basis(self, basis: PSFBasis) -> None:
        self.basis_cache[_basis_signature(self.config)] = basis

    def ensure_basis(self, *, n_samples: int = 2048, n_components: int = 32) -> PSFBasis:
        """Return a compatible basis, fitting one synchronously if needed."""
        found = self.compatible_basis()
        if found is not None:
            return found
        rng = np.random.Generator(np.random.Philox(key=np.uint64(basis_seed(self.seed))))
        basis = p2s_fit(
            self.config, n_samples=n_samples, n_components=n_components, rng=rng
        )
        self.adopt_basis(basis)
        return basis

    # -- frame loop ----------------------------------------------------------

    def _ensure_sampler(self) -> SamplerState:
        if self.sampler is None or self.sampler.config_hash != self.config.hash():
            self.sampler = make_sampler(
                self.config,
                seed=self.seed + 7919 * self.config_epoch,
                mode=self.mode,
                alpha=self.alpha,
                velocity=self.velocity,
            )
        return self.sampler

    def next_field(self) -> ZernikeField:
        state = self._ensure_sampler()
        t0 = time.perf_counter()
        if self.mode == "frozen":
            zf = next_frame_frozen(state)
        else:
            zf = next_frame_ar(state)
        self.perf_ms["fieldgen"] = 1e3 * (time.perf_counter() - t0)
        self.last_field = zf
        return zf

    def next_frame(self) -> RenderedFrame:
        basis = self.ensure_basis()
        zf = self.next_field()
        t0 = time.perf_counter()
        frame = render_p2s(self.source, zf, basis, self.config, seed=self.seed)
        self.perf_ms["render"] = 1e3 * (time.perf_counter() - t0)
        self.frame_counter += 1
        now = time.perf_counter()
        self._frame_times.append(now)
        self._frame_times = [t for t in self._frame_times if now - t <= 2.0]
        return frame

    # -- panels ---------------------------------------------------------------

    def psf_grid(self, n: int = 8) -> np.ndarray:
        """(n*K, n*K) mosaic of exact PSFs at n x n subsampled pixels.

        Tiles are max-normalized for display. Uses the latest field, drawing
        one if none exists yet.
        """
        if n < 1 or n > 16:
            raise InvalidArgument("psf grid size must be in [1, 16]")
        zf = self.last_field if self.last_field is not None else self.next_field()
        H, W, _ = zf.a.shape
        k = self.config.psf_kernel_px
        rows = [int((i + 0.5) * H / n) for i in range(n)]
        cols = [int((j + 0.5) * W / n) for j in range(n)]
        mosaic = np.zeros((n * k, n * k))
        for gi, i in enumerate(rows):
            for gj, j in enumerate(cols):
                phase = phase_from_coeffs(zf.a[i, j], self.config.phase_grid_px)
                p = psf_from_phase(phase, self.config)
                peak = p.max()
                if peak > 0:
                    p = p / peak
                mosaic[gi * k : (gi + 1) * k, gj * k : (gj + 1) * k] = p
        return mosaic

    def displacement_rows(self, step: int = 16) -> dict:
        """Decimated displacement field as JSON-ready rows [x, y, dx, dy]."""
        if step < 1:
            raise InvalidArgument("step must be >= 1")
        zf = self.last_field if self.last_field is not None else self.next_field()
        disp = displacement_map(zf, self.config)
        rows = []
        H, W = disp.shape[:2]
        for y in range(step // 2, H, step):
            for x in range(step // 2, W, step):
                rows.append(
                    [x, y, round(float(disp[y, x, 0]), 4), round(float(disp[y, x, 1]), 4)]
                )
        return {"width": W, "height": H, "step": step, "rows": rows}

    def stats(self) -> dict:
        window = self._frame_times
        fps = 0.0
        if len(window) >= 2:
            span = window[-1] - window[0]
            fps = (len(window) - 1) / span if span > 0 else 0.0
        return {
            "frame_counter": self.frame_counter,
            "fps": round(fps, 2),
            "stage_ms": {k: round(v, 2) for k, v in self.perf_ms.items()},
            "config_hash": self.config.hash(),
        }


@dataclass(frozen=True)
class DatasetManifest:
    """What a generation run produced; written as manifest.json."""

    format_version: int
    config_hash: str
    entries: tuple
    errors: tuple

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "config_hash": self.config_hash,
            "entries": [dict(e) for e in self.entries],
            "errors": [dict(e) for e in self.errors],
        }


def generate_dataset(
    config: OpticalConfig,
    image_paths,
    frames: int,
    out_dir,
    seed: int,
    *,
    save_fields: bool = False,
    mode: str = "ar",
    alpha: float = 0.95,
    velocity: tuple = (0.25, 0.0),
    basis: PSFBasis | None = None,
    log=None,
) -> DatasetManifest:
    """Render `frames` distorted frames per input image, deterministically.

    Sequence k uses seed + k (unique per sequence); the basis fit derives
    its own seed from the dataset seed. Inputs that fail to read become
    error entries instead of aborting the run.
    """
    if frames < 1:
        raise InvalidArgument("frames must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    errors = []
    image_paths = [Path(p) for p in image_paths]
    if not image_paths:
        raise InvalidArgument("at least one input image is required")

    if basis is None:
        rng = np.random.Generator(np.random.Philox(key=np.uint64(basis_seed(seed))))
        basis = p2s_fit(config, rng=rng)

    for idx, src_path in enumerate(image_paths):
        seq_seed = seed + idx
        seq_dir = out / f"seq_{idx:04d}"
        try:
            image = load_image(src_path)
        except Exception as exc:
            errors.append({"input": str(src_path), "error": str(exc)})
            continue
        h, w = image.shape[:2]
        seq_config = config.with_updates(image_height=h, image_width=w)
        seq_dir.mkdir(parents=True, exist_ok=True)
        clean_path = seq_dir / ("clean" + src_path.suffix.lower())
        shutil.copyfile(src_path, clean_path)
        sampler = make_sampler(
            seq_config, seed=seq_seed, mode=mode, alpha=alpha, velocity=velocity
        )
        for k in range(frames):
            t0 = time.perf_counter()
            if mode == "frozen":
                zf = next_frame_frozen(sampler, plan_frames=frames)
            else:
                zf = next_frame_ar(sampler)
            gen_ms = 1e3 * (time.perf_counter() - t0)
            frame = render_p2s(image, zf, basis, seq_config, seed=seq_seed)
            save_image(seq_dir / f"frame_{k:05d}.png", frame.image)
            if save_fields:
                save_field(zf, seq_dir / f"field_{k:05d}.tszf")
            if log is not None:
                log.info(
                    "seq %d frame %d fieldgen %.1f ms", idx, k, gen_ms
                )
        entries.append(
            {
                "clean": str(clean_path.relative_to(out)),
                "sequence_dir": str(seq_dir.relative_to(out)),
                "frames": frames,
                "seed": seq_seed,
                "config_hash": seq_config.hash(),
            }
        )

    manifest = DatasetManifest(
        format_version=1,
        config_hash=config.hash(),
        entries=tuple(entries),
        errors=tuple(errors),
    )
    for e in entries:
        if not (out / e["clean"]).exists():
            raise InvalidArgument(f"manifest references a missing file: {e['clean']}")
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def bench_fieldgen(config: OpticalConfig, sizes, *, frames: int = 3, seed: int = 0):
    """Per-frame dense-field generation timings (sampling + mixing only)."""
    sizes = list(sizes)
    if not sizes:
        raise InvalidArgument("sizes list is empty")
    rows = []
    for size in sizes:
        if isinstance(size, (tuple, list)):
            w, h = size
        else:
            w = h = int(size)
        if w * h > 4096 * 4096:
            raise InvalidArgument("sizes beyond 4096x4096 are not supported")
        cfg = config.with_updates(image_width=w, image_height=h)
        sampler = make_sampler(cfg, seed=seed)
        next_frame_ar(sampler)  # pull one-time spectra/plan costs forward
        t0 = time.perf_counter()
        for _ in range(frames):
            next_frame_ar(sampler)
        per = (time.perf_counter() - t0) / frames
        rows.append(
            {
                "width": w,
                "height": h,
                "pixels": w * h,
                "seconds_per_frame": per,
                "num_modes": cfg.num_modes,
            }
        )
    return rows

"""Optical and simulation configuration.

One frozen dataclass carries every knob the simulator needs. JSON files use
the same field names, which embed units (aperture_diameter_m) so a config
file can never be misread in the wrong unit; unknown keys are rejected
outright to fail fast on typos.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .errors import InvalidArgument
from .turbulence import fried_from_cn2

__all__ = ["OpticalConfig", "load_config", "default_config"]


@dataclass(frozen=True)
class OpticalConfig:
    """Imaging geometry, turbulence strength, and grid geometry.

    d_over_r0 is the canonical strength knob; cn2 is an optional convenience
    and must agree with d_over_r0 when given. phase_grid_px is the aperture
    sampling used for PSFs and quadrature; psf_kernel_px is the rendered PSF
    crop (odd).
    """

    aperture_diameter_m: float = 0.1
    wavelength_m: float = 525e-9
    path_length_m: float = 1000.0
    focal_length_m: float = 1.0
    d_over_r0: float = 2.0
    cn2: float | None = None
    num_modes: int = 36
    image_width: int = 256
    image_height: int = 256
    scene_width_m: float = 2.0
    psf_kernel_px: int = 33
    phase_grid_px: int = 64

    def __post_init__(self):
        if self.aperture_diameter_m <= 0:
            raise InvalidArgument("aperture_diameter_m must be positive")
        if self.wavelength_m <= 0:
            raise InvalidArgument("wavelength_m must be positive")
        if self.path_length_m <= 0:
            raise InvalidArgument("path_length_m must be positive")
        if self.focal_length_m <= 0:
            raise InvalidArgument("focal_length_m must be positive")
        if self.d_over_r0 < 0:
            raise InvalidArgument("d_over_r0 must be >= 0")
        if self.num_modes < 3:
            raise InvalidArgument("num_modes must be >= 3")
        if self.image_width < 1 or self.image_height < 1:
            raise InvalidArgument("image dimensions must be positive")
        if self.scene_width_m <= 0:
            raise InvalidArgument("scene_width_m must be positive")
        if self.psf_kernel_px < 1 or self.psf_kernel_px % 2 == 0:
            raise InvalidArgument("psf_kernel_px must be odd and positive")
        if self.phase_grid_px < 32:
            raise InvalidArgument("phase_grid_px must be >= 32")
        if self.cn2 is not None:
            if self.cn2 <= 0:
                raise InvalidArgument("cn2 must be positive when given")
            r0 = fried_from_cn2(self.cn2, self.wavelength_m, self.path_length_m)
            implied = self.aperture_diameter_m / r0
            if self.d_over_r0 == 0 or abs(implied - self.d_over_r0) > 1e-9 * max(
                self.d_over_r0, 1e-30
            ):
                raise InvalidArgument(
                    f"cn2 implies d_over_r0 = {implied!r}, config says "
                    f"{self.d_over_r0!r} (must agree to 1e-9 relative)"
                )

    # -- derived geometry ---------------------------------------------------

    @property
    def r0_m(self) -> float:
        """Fried parameter implied by the strength knob (inf at zero)."""
        if self.d_over_r0 == 0:
            return float("inf")
        return self.aperture_diameter_m / self.d_over_r0

    @property
    def pixel_step_s(self) -> float:
        """Scene pixel pitch in aperture-diameter units (the s coordinate)."""
        return (self.scene_width_m / self.image_width) / self.aperture_diameter_m

    @property
    def diffraction_cutoff_cyc_m(self) -> float:
        """Image-plane OTF cutoff D / (lambda f) in cycles per meter."""
        return self.aperture_diameter_m / (self.wavelength_m * self.focal_length_m)

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["cn2"] is None:
            del d["cn2"]
        return d

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "OpticalConfig":
        if not isinstance(data, dict):
            raise InvalidArgument("config must be a JSON object")
        fields = set(cls.__dataclass_fields__)
        unknown = set(data) - fields
        if unknown:
            raise InvalidArgument(
                f"unknown config keys: {sorted(unknown)} (valid: {sorted(fields)})"
            )
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidArgument(f"bad config value types: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "OpticalConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def hash(self) -> str:
        """Stable content hash: equal configs hash equal, any change differs."""
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]

    def with_updates(self, **kwargs) -> "OpticalConfig":
        """Copy with fields replaced; validation reruns on the copy."""
        return replace(self, **kwargs)


def load_config(path: str | Path) -> OpticalConfig:
    """Read and validate a JSON config file."""
    p = Path(path)
    if not p.exists():
        raise InvalidArgument(f"config file not found: {p}")
    return OpticalConfig.from_json(p.read_text())


def default_config(**overrides) -> OpticalConfig:
    """The reference desk-scale setup; overrides go through validation."""
    return OpticalConfig(**overrides)

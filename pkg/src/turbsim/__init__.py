"""Dense-field simulation of imaging through atmospheric turbulence.

Per-pixel Zernike coefficient fields with the right aperture statistics and
spatial correlation, rendered through a low-rank PSF basis, validated
against analytic theory and a split-step wave-optics oracle.
"""

from .config import OpticalConfig, default_config, load_config
from .correlation import (
    CorrelationKernel,
    CorrelationSpec,
    LagGrid,
    build_autocorrelation,
    build_correlation_spec,
    build_cross_correlation,
    build_tensor_slices,
    energy_metrics,
    load_kernel,
    save_kernel,
)
from .errors import FormatError, InvalidArgument, NumericError, TurbsimError
from .fieldgen import (
    BufferExhausted,
    SamplerState,
    ZernikeField,
    load_field,
    make_sampler,
    mix_fields,
    next_frame_ar,
    next_frame_frozen,
    reset_frozen,
    sample_independent_fields,
    save_field,
)
from .images import decode_image, encode_png, load_image, save_image, test_pattern
from .pipeline import DatasetManifest, SimSession, bench_fieldgen, generate_dataset
from .psf import (
    PSFBasis,
    RenderedFrame,
    airy_psf,
    displacement_map,
    load_basis,
    p2s_fit,
    project_field_betas,
    psf_from_phase,
    render_exact,
    render_p2s,
    save_basis,
    tilt_shift_constant,
    validation_error,
)
from .splitstep import (
    PhaseScreen,
    PropagationPlan,
    build_plan,
    make_screen,
    make_screens,
    propagate_point,
    splitstep_benchmark,
    splitstep_zernike_stats,
    unwrap_phase,
)
from .statval import (
    OTFCurve,
    StructureCurve,
    TiltStatsCurve,
    empirical_otf,
    empirical_structure_function,
    empirical_tilt_stats,
    save_curve_csv,
    theoretical_otf,
    theoretical_structure_function,
    theoretical_tilt_stats,
)
from .turbulence import (
    NollMatrix,
    cn2_from_fried,
    fried_from_cn2,
    noll_covariance,
    structure_function,
)
from .zernike import (
    ZernikePolynomial,
    noll_to_nm,
    phase_from_coeffs,
    project_phase,
    zernike_bank,
    zernike_eval,
)

__version__ = "0.1.0"

__all__ = [
    "OpticalConfig",
    "default_config",
    "load_config",
    "CorrelationKernel",
    "CorrelationSpec",
    "LagGrid",
    "build_autocorrelation",
    "build_correlation_spec",
    "build_cross_correlation",
    "build_tensor_slices",
    "energy_metrics",
    "load_kernel",
    "save_kernel",
    "TurbsimError",
    "InvalidArgument",
    "NumericError",
    "FormatError",
    "BufferExhausted",
    "SamplerState",
    "ZernikeField",
    "make_sampler",
    "mix_fields",
    "next_frame_ar",
    "next_frame_frozen",
    "reset_frozen",
    "sample_independent_fields",
    "save_field",
    "load_field",
    "decode_image",
    "encode_png",
    "load_image",
    "save_image",
    "test_pattern",
    "DatasetManifest",
    "SimSession",
    "bench_fieldgen",
    "generate_dataset",
    "PSFBasis",
    "RenderedFrame",
    "airy_psf",
    "displacement_map",
    "p2s_fit",
    "project_field_betas",
    "psf_from_phase",
    "render_exact",
    "render_p2s",
    "save_basis",
    "load_basis",
    "tilt_shift_constant",
    "validation_error",
    "PhaseScreen",
    "PropagationPlan",
    "build_plan",
    "make_screen",
    "make_screens",
    "propagate_point",
    "splitstep_benchmark",
    "splitstep_zernike_stats",
    "unwrap_phase",
    "OTFCurve",
    "StructureCurve",
    "TiltStatsCurve",
    "empirical_otf",
    "empirical_structure_function",
    "empirical_tilt_stats",
    "save_curve_csv",
    "theoretical_otf",
    "theoretical_structure_function",
    "theoretical_tilt_stats",
    "NollMatrix",
    "cn2_from_fried",
    "fried_from_cn2",
    "noll_covariance",
    "structure_function",
    "ZernikePolynomial",
    "noll_to_nm",
    "phase_from_coeffs",
    "project_phase",
    "zernike_bank",
    "zernike_eval",
    "__version__",
]

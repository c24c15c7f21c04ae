"""Noise spectra of periodically modulated linearized optomechanical systems."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ContractError,
    ModeReferenceError,
    ModSpecError,
    NumericalError,
    ResolutionError,
    ValidationError,
)
from .model import (  # noqa: E402
    HamiltonianFourierSeries,
    ModeSpec,
    ModulationSpec,
    NoiseModel,
    build_fourier_series,
    drift_matrix,
    noise_matrix,
)
from .results import SpectrumResult  # noqa: E402
from .transfer import (  # noqa: E402
    TruncatedTransferMatrix,
    assemble_inverse,
    invert,
    standard_spectrum_oracle,
    transfer_matrix,
    translation_residual,
)
from .spectra import (  # noqa: E402
    DetectionSpec,
    heterodyne_cross,
    heterodyne_spectrum,
    homodyne_spectrum,
    resolution_check,
    sideband_ratio,
    spectral_component,
    spectrum_floquet,
    spectrum_shifted,
)
from .iterative import iterative_spectrum  # noqa: E402
from .presets import HybridTrapPreset, ProbePreset, fig2a, fig2c, fig3  # noqa: E402

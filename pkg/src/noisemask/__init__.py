"""Mask-shape estimation from the homodyne noise of multimode twin beams."""

from .basis import (
    FieldProfile,
    ModeBasis,
    ModeIndex,
    TransverseGrid,
    default_grid,
    even_mode_sequence,
    gram_matrix,
    hermite_gauss,
    inner_product,
    make_grid,
)
from .errors import (
    BoundaryExtremumError,
    ConfigError,
    DegenerateLOError,
    DegenerateParameterization,
    InvalidArgument,
    NoSignalError,
)
from .mask import BinarySquare, OverlapSet, Phase, Soft, expansion_coeffs, masked_lo, square_lo
from .montecarlo import McRun, sample_difference_signal, sample_single_signal, validate_variance_of_variance
from .noise_model import Strategy, delta_t2, m_nq, m_sb, m_tb, sensitivity
from .protocol import (
    TransmissionCurve,
    derivative_wrt_T,
    estimate_shape,
    fig2_table,
    fig3_curve,
    locate_optimum,
    scan_displacement,
)
from .state import ClassicalMixture, Coherent, PhaseSensitive, StateSpec, Thermal, TwinBeam

__version__ = "0.1.0"

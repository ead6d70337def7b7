"""Simulation and reconstruction of phase-controlled nuclear forward scattering."""

__version__ = "0.1.0"

from .errors import InsufficientStatistics, InvalidArgument, ResolutionError  # noqa: E402
from .constants import CONSTANTS, doppler_detuning  # noqa: E402
from .signal import SignalEnvelope, TimeGrid, convolve, default_grid  # noqa: E402
from .absorber import NuclearLine, TransmissionModel, multiline_transmission  # noqa: E402
from .pulse import MotionProfile, canonical_motion, shape_double_pulse  # noqa: E402
from .tls import TlsParams, coherence_response, crossover_time, output_field  # noqa: E402
from .experiment import (  # noqa: E402
    ExperimentConfig,
    Spectrum2D,
    bin_to_spectrum,
    expected_intensity,
    inject_dead_time,
    sample_events,
)
from .reconstruction import (  # noqa: E402
    EAParams,
    fit_motion_evolutionary,
    fit_noise_parameter,
    fit_scale,
    poisson_log_likelihood,
)
from .stability import allan_curve, allan_deviation, bin_events, sliding_deviations  # noqa: E402

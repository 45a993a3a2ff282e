"""Simulation and reconstruction of multimode squeezing in an SU(1,1) interferometer."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    DataFormatError,
    DegenerateDataError,
    DimensionError,
    TruncationError,
)
from .hg_modes import (  # noqa: E402
    AngularGrid,
    ModeBasis,
    OverlapMatrix,
    default_grid,
    hermite_gauss_basis,
    make_grid,
    overlap_matrix,
    width_schedule,
)
from .gaussian_core import (  # noqa: E402
    Fringe,
    InterferometerModel,
    QuadratureState,
    SchmidtSpectrum,
    StageParams,
    calibrate_r0,
    ground_truth_squeezing,
    output_photons,
    phase_scan,
    propagate_quadratures,
)
from .frame_synth import AcquisitionConfig, FrameEnsemble, acquire_ensemble, load_ensemble, save_ensemble  # noqa: E402
from .recon import (  # noqa: E402
    CovarianceMap,
    ModeReconstruction,
    decompose,
    estimate_covariance,
    match_sign_and_pair,
    normalize_covariance,
)
from .squeezing import (  # noqa: E402
    SqueezingReport,
    TripleDataset,
    aggregate,
    compare_to_truth,
    estimate_uncertainty,
    extract_squeezing,
)

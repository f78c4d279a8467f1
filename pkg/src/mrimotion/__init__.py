"""Simulation, metrics and statistics for MRI motion-artifact correction studies."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .volume import (  # noqa: E402
    RoiSpec,
    Volume,
    VolumeMeta,
    load_volume,
    normalize_max,
    resolve_roi,
    save_volume,
)
from .spectral import KSpaceVolume, focal_frequency_loss, forward_transform, inverse_transform  # noqa: E402
from .motion import (  # noqa: E402
    CorruptionRecord,
    SeverityProfile,
    apply_record,
    perturb_phase,
    severity_params,
    simulate_pair,
    undersample,
)
from .metrics import MetricRow, cnr, fid, psnr, snr, ssim  # noqa: E402
from .perceptual import (  # noqa: E402
    ConvStage,
    FeatureExtractor,
    LossWeights,
    composite_loss,
    deep_tap_extractor,
    extract_features,
    feature_distance,
    motion_perceptual_loss,
)
from .phantom import shepp_logan_volume  # noqa: E402

"""Snowfall and wet-ground augmentation for clear-weather LiDAR sweeps."""

from .beam_occlusion import BeamHit, FieldGeometry, occlusion_angles, occlusion_sweep, particles_in_beam
from .calibration import (
    LinearRangeModel,
    apply_calibration,
    estimate_power_and_noise,
    invert_calibration,
)
from .dror import DrorConfig, classify_snowfall, dror_filter
from .echo_model import (
    SPEED_OF_LIGHT,
    EchoProfile,
    EchoTerm,
    echo_lobe,
    max_peak,
    pulse,
    xi,
)
from .errors import (
    CalibrationFormatError,
    ConfigurationError,
    EstimationError,
    SamplingError,
    SnowlidarError,
    SweepFormatError,
    SweepRecordError,
    TotalInternalReflection,
)
from .pointcloud import (
    LaserCalibration,
    LidarPoint,
    PointCloud,
    SensorCalibration,
    assign_layers,
    read_calibration,
    read_sweep,
    write_calibration,
    write_sweep,
)
from .snow_sampling import (
    ParticleField,
    expected_particle_count,
    sample_field,
    size_distribution,
    slab_density,
)
from .snowfall import (
    LABEL_ATTENUATED,
    LABEL_DROPPED,
    LABEL_NAMES,
    LABEL_SCATTERED,
    LABEL_UNCHANGED,
    AugmentationResult,
    FrameStats,
    PipelineConfig,
    augment_snow,
    beam_profile,
    layer_field_seed,
)
from .wet_ground import (
    FresnelPower,
    GroundPlane,
    WetParams,
    augment_wet,
    blend_weight,
    fit_ground_plane,
    fresnel_power,
    sample_water_depth,
    snell,
    t_total,
    wet_reflectivity,
)
from .cli import RunConfig, dump_profile, run_batch

__version__ = "0.1.0"

__all__ = [
    "AugmentationResult",
    "BeamHit",
    "CalibrationFormatError",
    "ConfigurationError",
    "DrorConfig",
    "EchoProfile",
    "EchoTerm",
    "EstimationError",
    "FieldGeometry",
    "FrameStats",
    "FresnelPower",
    "GroundPlane",
    "LABEL_ATTENUATED",
    "LABEL_DROPPED",
    "LABEL_NAMES",
    "LABEL_SCATTERED",
    "LABEL_UNCHANGED",
    "LaserCalibration",
    "LidarPoint",
    "LinearRangeModel",
    "ParticleField",
    "PipelineConfig",
    "PointCloud",
    "RunConfig",
    "SPEED_OF_LIGHT",
    "SamplingError",
    "SensorCalibration",
    "SnowlidarError",
    "SweepFormatError",
    "SweepRecordError",
    "TotalInternalReflection",
    "WetParams",
    "apply_calibration",
    "assign_layers",
    "augment_snow",
    "augment_wet",
    "beam_profile",
    "blend_weight",
    "classify_snowfall",
    "dror_filter",
    "dump_profile",
    "echo_lobe",
    "estimate_power_and_noise",
    "expected_particle_count",
    "fit_ground_plane",
    "fresnel_power",
    "invert_calibration",
    "layer_field_seed",
    "max_peak",
    "occlusion_angles",
    "occlusion_sweep",
    "particles_in_beam",
    "pulse",
    "read_calibration",
    "read_sweep",
    "run_batch",
    "sample_field",
    "sample_water_depth",
    "size_distribution",
    "slab_density",
    "snell",
    "t_total",
    "wet_reflectivity",
    "write_calibration",
    "write_sweep",
    "xi",
]

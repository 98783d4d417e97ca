"""Map-aided train localization with a one-dimensional particle filter."""

__version__ = "0.1.0"

from .exceptions import *  # noqa: F401,F403
from .geometry import (Orientation, PlaneCurve, arc_length, curvature_at, fit_spline,
                       rdp_indices, rotation_matrix, simplify_rdp, to_inertial, to_sensor,
                       wrap_angle)
from .track_map import FEATURES, MapFeatures, TrackMap, build_map, lookup, orientation_at
from .imu import (BiasState, ImuLog, ImuPreprocessor, ImuSample, ZvuConfig, apply_bias,
                  compensate_gravity, detect_standstill, update_bias)
from .gnss import GnssSample, align_to_steps, outage_windows
from .pf import (FilterConfig, Measurement, ParticleFilter, ParticleSet, PositionEstimate, Prior,
                 effective_sample_size, estimate, initialize, predict, resample,
                 run_particle_filter, weight)
from .ekf import (EkfConfig, EkfState, ExtendedKalmanFilter, ekf_map_match, ekf_predict,
                  ekf_update_gnss, run_ekf)
from .scenario import (Leg, Scenario, ScenarioSpec, Segment, SensorSpec, TrackSpec, TripSpec,
                       VelocityProfile, build_scenario, generate_track, generate_truth,
                       preset_scenarios, preset_spec, synthesize_sensors)
from .evaluation import ErrorSeries, compute_errors, error_cdf, quantile, report, sigma3
from .config import RunManifest, derive_seed, load_filter_config

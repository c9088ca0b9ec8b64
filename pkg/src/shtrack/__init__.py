"""Pose and shape tracking of star-convex 3D objects with spherical harmonics and a UKF."""
from .geometry import CuboidShape, MeshShape, ShShape, SphereShape, VoxelGrid, iou, tessellate
from .harness import ScenarioConfig, generate_frame, load_config, replay, run_simulation
from .sh import Rotation3, ShCoefficients, eval_series, fit_coefficients, rotate_coefficients, rotation_operator
from .tracking import RotationInput, TrackerConfig, TrackState, initialize_belief, process_frame
from .ukf import GaussianBelief, UkfParams

__version__ = "0.1.0"

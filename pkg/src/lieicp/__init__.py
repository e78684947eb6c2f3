"""Rigid point-cloud registration: ICP, tensor-shape variants and Lie-algebra scores."""

from .core import (PointCloud, RigidTransform, apply_transform, axis_angle_rotation, compose, invert,
                   mrms, mse, rotation_geodesic_error)
from .dataset import (NoiseSpec, Scenario, add_noise, load_cloud, make_rotated_scenario, punch_hole,
                      read_manifest, save_cloud, subsample_step, write_manifest)
from .lie import AffinePlus, GaussianModel, LogEmbedding, embed, exp_embedding, log_embedding
from .matching import MatchSet
from .pipeline import ALGORITHMS, RegistrationConfig, RunReport, register
from .similarity import WeightSchedule
from .solver import horn_solve
from .voting import tensor_field

__version__ = "0.1.0"

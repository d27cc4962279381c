"""Point cloud registration with hybrid (salient + non-salient) patch nodes."""
from .core import PointCloud, RigidTransform, SpatialIndex, grid_downsample, random_transform, rotation_about_axis
from .features import FeatureSet, compute_descriptors, estimate_normals
from .io import load_cloud, load_transform, save_cloud, save_transform
from .patch_matching import dual_class_match, point_to_node_group, top_k_matches
from .point_matching import mutual_top_k, sinkhorn
from .registration import RegistrationFailure, lgr, ransac, weighted_svd
from .sampler import HybridNodes, SamplerConfig, hybrid_points, iss_saliency
from .spectral import SMConfig, spectral_filter
from .harness import Config, run_pipeline, synth_pair

__version__ = "0.1.0"

"""LiDAR + camera beacon detection with fuzzy-logic confidence fusion.

A desk-scale perception pipeline: intensity-based LiDAR clustering, a
20-feature linear SVM beacon classifier, a small neural network that maps
camera bounding boxes into the LiDAR's polar frame, and Mamdani fuzzy
fusion of the two detection streams.  A synthetic scene generator provides
labeled data for training and evaluation.
"""

from .records import Detection, TruthObject
from .point_cloud import LidarPoint, PointCloud, PreprocessConfig
from .clustering import Cluster, ClusterConfig, FrontGuardRegion
from .features import FeatureVector, FeatureNormalizer, RegionConfig
from .classifier import LinearSvmModel, SigmoidConfig
from .camera_map import BoundingBox, MapperNetwork, RegressionBaselines
from .fusion import FusionConfig, FuzzySystem

__version__ = "0.1.0"

__all__ = [
    "Detection",
    "TruthObject",
    "LidarPoint",
    "PointCloud",
    "PreprocessConfig",
    "Cluster",
    "ClusterConfig",
    "FrontGuardRegion",
    "FeatureVector",
    "FeatureNormalizer",
    "RegionConfig",
    "LinearSvmModel",
    "SigmoidConfig",
    "BoundingBox",
    "MapperNetwork",
    "RegressionBaselines",
    "FusionConfig",
    "FuzzySystem",
    "__version__",
]

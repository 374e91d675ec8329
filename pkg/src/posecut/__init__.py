"""Outlier-robust multi-session pose-graph optimization.

Landmark (loop-closure) edges are filtered by pairwise consistency and by a
support-weighted minimum-cost multicut before Levenberg-Marquardt
optimization.
"""

from posecut.errors import PosecutError
from posecut.geometry import Pose2, Pose3
from posecut.kernels import BACKEND
from posecut.posegraph import Edge, NodeId, PoseGraph

__version__ = "0.1.0"

__all__ = ["BACKEND", "Edge", "NodeId", "PoseGraph", "Pose2", "Pose3", "PosecutError", "__version__"]

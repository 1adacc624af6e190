"""Fruit diameter estimation from aligned RGB-D frames.

Six estimators (three on the 2D mask, three on the back-projected point
cloud), percentile depth filtering, and an evaluation harness for error
sweeps and detection metrics.
"""
from .dataset import (AnnotatedFruit, DetectionRecord, Frame, Ripeness, fallback_segment, load_detections,
                      load_manifest, write_detections, write_manifest)
from .errors import *  # noqa: F401,F403
from .estimators2d import (BoundingBox, CircleFit, FruitMask, HoughConfig, estimate_2d_bbox, estimate_2d_hough,
                           estimate_2d_lseg)
from .estimators3d import (RansacConfig, SphereFit, estimate_3d_lseg, lsq_sphere_fit, ransac_sphere,
                           sphere_from_4_points)
from .filtering import DEFAULT_RETENTION_GRID, RetentionRange, filter_by_depth_percentile, mean_depth
from .geometry import CameraIntrinsics, FruitPointCloud, back_project, pixel_to_metric, project
from .kernels import BACKEND
from .metrics import MatchResult, detection_metrics, iou, match_detections
from .stats import QuartileSummary, quartile_summary
from .sweep import Estimator, SizeErrorRecord, SweepConfig, run_size_sweep, summarize
from .synthetic import SceneSpec, generate_synthetic_scene, write_synthetic_dataset

__version__ = "0.1.0"

"""Ellipse-based pig detection pipeline: label rendering, discriminative pixel
embeddings, HDBSCAN instance clustering, ellipse extraction and panoptic-quality
evaluation on synthetic pen scenes."""

from .clustering import ClusterAssignment, ClusterParams, cluster_masked_embedding, hdbscan
from .embedding import (DiscriminativeParams, EmbeddingField, LossValue, OptimizerSettings,
                        binary_ce, categorical_ce, discriminative_gradient,
                        discriminative_loss, optimize_embedding)
from .geometry import Ellipse, FitError, Grid, contains, ellipse_iou, fit_ellipse, scale
from .labelgen import (LabelImage, Scene, blob_search, ellipses_from_categorical,
                       extract_gt_ellipses, render_binary, render_bodypart,
                       render_categorical, render_instance)
from .metrics import (EvalReport, MatchResult, detection_scores, ellipse_match,
                      jaccard_accuracy, match_segments, orientation_accuracy,
                      panoptic_quality)
from .pipeline import PipelineConfig
from .scenegen import SceneSpec, generate_scene, generate_suite

__version__ = "0.1.0"

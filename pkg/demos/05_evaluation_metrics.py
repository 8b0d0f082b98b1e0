"""Panoptic quality, detection scores, Jaccard and orientation on small examples."""
import numpy as np

from ellipseg.geometry import Ellipse
from ellipseg.metrics import (MatchResult, detection_scores, ellipse_match, jaccard_accuracy,
                              match_segments, orientation_accuracy, panoptic_quality)

# one true positive at IoU 0.8, one false positive, one false negative
gt = np.zeros((4, 10), int)
pred = np.zeros((4, 10), int)
gt[0, 0:5] = 1
pred[0, 0:4] = 1
pred[2, 0:3] = 2
gt[3, 6:9] = 2
m = match_segments(pred, gt)
print(f"TP {m.n_tp}  FP {m.n_fp}  FN {m.n_fn}  matched IoU {m.tp_pairs[0][2]}")
print(f"PQ {panoptic_quality(m)}  (precision, recall, F1) {detection_scores(m)}")
print(f"binary Jaccard {jaccard_accuracy(pred > 0, gt > 0, 'binary'):.3f}")

# ellipse-level matching and heading check
truth = [Ellipse(20, 20, 10, 4, 0.3, head_sign=1), Ellipse(50, 30, 9, 5, 2.0, head_sign=-1)]
guess = [Ellipse(21, 20, 10, 4, 0.35, head_sign=1), Ellipse(50, 31, 9, 5, 2.0, head_sign=1)]
em = ellipse_match(guess, truth, (50, 70))
print(f"\nellipse matches {[(p, g, round(iou, 3)) for p, g, iou in em.tp_pairs]}")
print(f"orientation accuracy {orientation_accuracy(guess, truth, em)}")
print(f"nothing matched: PQ {panoptic_quality(MatchResult())}, orientation "
      f"{orientation_accuracy(guess, truth, MatchResult())}")

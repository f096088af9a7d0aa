"""Fruit/background separation and dark candidate detection.

The fruit is isolated with a grow-cut cellular automaton seeded
automatically (image border = background, central square = fruit). Dark
candidate regions are found by counting how many of three intensity
thresholds each pixel falls under, keeping pixels dark at ``min_layers``
of them, and growing that marker through high-gradient pixels.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _backend
from .errors import ParameterError
from .imaging import EIGHT, connected_components

UNLABELED = 0
FOREGROUND = 1
BACKGROUND = 2

DEFAULT_THRESHOLDS = (30, 50, 65)


@dataclass
class GrowCutResult:
    labels: np.ndarray  # int8, UNLABELED / FOREGROUND / BACKGROUND
    strength: np.ndarray
    passes: int
    converged: bool

    @property
    def mask(self):
        return self.labels == FOREGROUND


def auto_seed(image, border=2, core_fraction=0.25):
    """Border ring as background seeds, centred square core as foreground."""
    h, w = image.shape[:2]
    if border < 1:
        raise ParameterError(f"border must be >= 1, got {border}")
    if not 0 < core_fraction < 1:
        raise ParameterError(f"core_fraction must be in (0, 1), got {core_fraction}")
    side = int(round(core_fraction * min(w, h)))
    if side < 1:
        raise ParameterError("core rectangle is empty for this image size")
    x0 = (w - side) // 2
    y0 = (h - side) // 2
    if x0 < border or y0 < border or x0 + side > w - border or y0 + side > h - border:
        raise ParameterError(
            f"{w}x{h} image too small for border {border} and a {side}-pixel core")
    seeds = np.zeros((h, w), dtype=np.int8)
    seeds[:border, :] = BACKGROUND
    seeds[-border:, :] = BACKGROUND
    seeds[:, :border] = BACKGROUND
    seeds[:, -border:] = BACKGROUND
    seeds[y0:y0 + side, x0:x0 + side] = FOREGROUND
    return seeds


def grow_cut_full(image, seeds, max_iters=None):
    """Run grow-cut and return the final automaton state.

    Strength of seeds starts at 1, of everything else at 0. In each pass every
    cell is attacked by its four Von Neumann neighbours q with force
    ``(1 - |C_p - C_q| / max_norm) * strength_q``; the strongest attack that
    beats the cell's own strength wins (ties go to the first neighbour in
    up/down/left/right order). All cells read the previous pass's state.
    """
    seeds = np.asarray(seeds)
    h, w = image.shape[:2]
    if seeds.shape != (h, w):
        raise ParameterError(f"seed shape {seeds.shape} does not match image {(h, w)}")
    if not (seeds == FOREGROUND).any() or not (seeds == BACKGROUND).any():
        raise ParameterError("need at least one foreground and one background seed")
    if max_iters is None:
        max_iters = w + h
    if image.ndim == 2:
        features = image.astype(np.float64)[:, :, None]
        max_norm = 255.0
    else:
        features = image.astype(np.float64)
        max_norm = 255.0 * np.sqrt(3.0)
    features = np.ascontiguousarray(features)
    labels = np.ascontiguousarray(seeds, dtype=np.int8).copy()
    strength = np.where(labels != UNLABELED, 1.0, 0.0)
    passes = _backend.growcut(features, labels, strength, max_norm, int(max_iters))
    # A final pass that changed nothing proves the fixpoint.
    converged = passes < max_iters or _is_fixpoint(features, labels, strength, max_norm)
    labels[labels == UNLABELED] = BACKGROUND
    return GrowCutResult(labels=labels, strength=strength, passes=passes,
                         converged=converged)


def _is_fixpoint(features, labels, strength, max_norm):
    lab = labels.copy()
    st = strength.copy()
    _backend.growcut(features, lab, st, max_norm, 1)
    return np.array_equal(lab, labels) and np.array_equal(st, strength)


def grow_cut(image, seeds, max_iters=None):
    """Foreground mask after grow-cut; unlabeled survivors count as background."""
    return grow_cut_full(image, seeds, max_iters).mask


def multi_threshold(image, thresholds=DEFAULT_THRESHOLDS):
    """Per pixel, the number of thresholds the intensity falls strictly below."""
    thresholds = tuple(int(t) for t in thresholds)
    if any(not 1 <= t <= 255 for t in thresholds):
        raise ParameterError(f"thresholds must lie in [1, 255]: {thresholds}")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ParameterError(f"thresholds must be strictly ascending: {thresholds}")
    counts = np.zeros(image.shape, dtype=np.uint8)
    for t in thresholds:
        counts += image < t
    return counts


def marker_from_layers(layers, min_layers=2):
    if not 1 <= min_layers <= 3:
        raise ParameterError(f"min_layers must be in [1, 3], got {min_layers}")
    return layers >= min_layers


def layers_to_image(layers):
    """Scale layer counts 0..3 to 0..255 for viewing."""
    return (layers.astype(np.uint16) * 85).clip(0, 255).astype(np.uint8)


def gradient_refine(marker, gradient, grad_threshold=40):
    """Grow the marker through 8-neighbours with gradient >= grad_threshold."""
    if marker.shape != gradient.shape:
        raise ParameterError("marker and gradient shapes differ")
    marker = np.asarray(marker, dtype=bool)
    if not marker.any():
        return marker.copy()
    admissible = marker | (gradient >= grad_threshold)
    return ndimage.binary_propagation(marker, structure=EIGHT, mask=admissible)


def detect_candidates(fruit, refined, min_area=20):
    """Connected candidate regions of ``refined`` that lie on the fruit."""
    if fruit.shape != refined.shape:
        raise ParameterError("fruit and refined masks differ in shape")
    return connected_components(np.logical_and(fruit, refined), min_area)

"""End-to-end detection and feature extraction on scene images."""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .descriptors import BLOCK_ORDER, BlockKind, extract_all
from .errors import DataFormatError, DescriptorError
from .imaging import load_image, median_filter, sobel_magnitude, to_grayscale
from .labels import ClassLabel
from .segmentation import (auto_seed, detect_candidates, gradient_refine, grow_cut_full,
                           marker_from_layers, multi_threshold)
from .synthgen import read_manifest

log = logging.getLogger(__name__)


class StageError(Exception):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Detection:
    gray: np.ndarray
    filtered: np.ndarray
    fruit: np.ndarray
    layers: np.ndarray
    marker: np.ndarray
    gradient: np.ndarray
    refined: np.ndarray
    candidates: list
    growcut_passes: int
    growcut_converged: bool


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def detect(image, config=None):
    """Median filter, grow-cut fruit mask, multi-threshold marker, gradient
    refinement and connected candidates restricted to the fruit."""
    config = config or PipelineConfig()
    filtered_in = _stage("median", median_filter, image, config.median_radius)
    gray = to_grayscale(image)
    filtered = to_grayscale(filtered_in)
    seeds = _stage("seed", auto_seed, filtered_in, config.growcut_border, config.growcut_core)
    gc = _stage("growcut", grow_cut_full, filtered_in, seeds,
                config.growcut_max_iters or None)
    fruit = gc.mask
    layers = _stage("threshold", multi_threshold, filtered, config.thresholds)
    # thresholds only make sense on the fruit; the background is dark too
    marker = _stage("marker", marker_from_layers, layers, config.min_layers) & fruit
    gradient = _stage("gradient", sobel_magnitude, filtered)
    refined = _stage("refine", gradient_refine, marker, gradient, config.grad_threshold)
    candidates = _stage("candidates", detect_candidates, fruit, refined, config.min_area)
    return Detection(gray=gray, filtered=filtered, fruit=fruit, layers=layers, marker=marker,
                     gradient=gradient, refined=refined, candidates=candidates,
                     growcut_passes=gc.passes, growcut_converged=gc.converged)


def match_truth(candidates, truth_mask):
    """Index of the candidate overlapping the truth mask most, or None."""
    best, best_overlap = None, 0
    for i, cand in enumerate(candidates):
        x0, y0, w, h = cand.bbox
        overlap = int((cand.mask & truth_mask[y0:y0 + h, x0:x0 + w]).sum())
        if overlap > best_overlap:
            best, best_overlap = i, overlap
    return best


@dataclass
class FeatureRow:
    sample_id: str
    apple_id: str
    view_id: str
    label: object  # ClassLabel or None
    values: np.ndarray


def featurize_scene(image, truth_mask, config, label=None, sample_id="", apple_id="",
                    view_id=""):
    """Detect, pick the candidate matching the truth mask, and extract it.

    Returns a FeatureRow, or None when nothing usable was found.
    """
    det = detect(image, config)
    idx = match_truth(det.candidates, truth_mask)
    if idx is None:
        log.warning("%s: no candidate overlaps the ground truth", sample_id)
        return None
    try:
        vec = extract_all(det.candidates[idx], config.descriptor_config(), label, det.filtered)
    except DescriptorError as exc:
        log.warning("%s: %s", sample_id, exc)
        return None
    return FeatureRow(sample_id, apple_id, view_id, label, vec.as_array())


def featurize_corpus(corpus_dir, config=None, progress=None):
    """Feature rows for every scene listed in a corpus manifest, in manifest order.

    Returns (rows, skipped_count).
    """
    from .imaging import load_mask

    config = config or PipelineConfig()
    corpus = Path(corpus_dir)
    rows, skipped = [], 0
    manifest = read_manifest(corpus / "manifest.csv")
    for n, rec in enumerate(manifest):
        image = load_image(corpus / rec["image"])
        truth = load_mask(corpus / rec["truth"])
        row = featurize_scene(image, truth, config, ClassLabel.parse(rec["label"]),
                              rec["scene_id"], rec["apple_id"], rec["view_id"])
        if row is None:
            skipped += 1
        else:
            rows.append(row)
        if progress:
            progress(n + 1, len(manifest))
    return rows, skipped


# ------------------------------------------------------------ feature files

ID_COLUMNS = ("sample_id", "apple_id", "view_id", "label")


def feature_columns(layout):
    return [f"{BlockKind(kind).value}_{i + 1}" for kind, length in layout for i in range(length)]


def write_features(path, rows, layout):
    """One CSV line per FeatureRow: ids, label, then m_*, f_*, r_* values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ID_COLUMNS) + feature_columns(layout))
        for r in rows:
            label = r.label.value if r.label is not None else ""
            w.writerow([r.sample_id, r.apple_id, r.view_id, label]
                       + [repr(float(v)) for v in r.values])


def _layout_from_header(names):
    layout = []
    for name in names:
        prefix, _, idx = name.partition("_")
        try:
            kind = BlockKind(prefix)
            idx = int(idx)
        except ValueError:
            raise DataFormatError(f"unexpected feature column {name!r}") from None
        if layout and layout[-1][0] == kind:
            layout[-1][1] += 1
        else:
            if any(k == kind for k, _ in layout):
                raise DataFormatError(f"block {kind.value} columns are not contiguous")
            layout.append([kind, 1])
        if idx != layout[-1][1]:
            raise DataFormatError(f"feature column {name!r} out of sequence")
    layout = tuple((k, n) for k, n in layout)
    if tuple(k for k, _ in layout) != tuple(k for k in BLOCK_ORDER if k in dict(layout)):
        raise DataFormatError("feature blocks must appear in m, f, r order")
    return layout


def read_features(path):
    """Parse a feature CSV into (rows, layout); labels may be empty."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty feature file") from None
        if tuple(header[:len(ID_COLUMNS)]) != ID_COLUMNS:
            raise DataFormatError(f"{path}: header must start with {','.join(ID_COLUMNS)}")
        layout = _layout_from_header(header[len(ID_COLUMNS):])
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, "
                                      f"got {len(rec)}")
            try:
                label = ClassLabel.parse(rec[3]) if rec[3] else None
                values = np.array([float(v) for v in rec[len(ID_COLUMNS):]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(values)):
                raise DataFormatError(f"{path}:{lineno}: non-finite feature value")
            rows.append(FeatureRow(rec[0], rec[1], rec[2], label, values))
    return rows, layout


def rows_to_dataset(rows, layout):
    """Dataset for training or evaluation; every row needs a label."""
    from .classify import Dataset

    unlabeled = [r.sample_id for r in rows if r.label is None]
    if unlabeled:
        raise DataFormatError(f"{len(unlabeled)} rows have no label, e.g. {unlabeled[0]!r}")
    if not rows:
        raise DataFormatError("no feature rows")
    X = np.stack([r.values for r in rows])
    return Dataset(X, [r.label for r in rows], [r.apple_id for r in rows],
                   [r.view_id for r in rows], [r.sample_id for r in rows], layout)

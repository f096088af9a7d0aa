"""Classifiers over fused feature vectors and their evaluation.

Three classifiers share one interface: k-nearest neighbours with the fused
block distance, a one-vs-one polynomial-kernel SVM trained by SMO, and a
pooled-covariance linear discriminant. All of them work on z-scored
features; the normaliser is always fitted on the training split only.
"""

from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from . import _backend
from ._kernels_py import smo_bias
from .descriptors import BLOCK_ORDER, BlockKind, block_slices
from .errors import DataFormatError, ParameterError, TrainingError
from .labels import LABEL_ORDER, ClassLabel
from .synthgen import SplitMix64

MODEL_VERSION = 1
STD_FLOOR = 1e-9
KINDS = ("knn", "svm", "ldc")


# ------------------------------------------------------------------ dataset

@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus per-row label and provenance.

    ``layout`` is a tuple of (BlockKind, length) pairs describing the columns.
    """

    X: np.ndarray
    labels: tuple
    apple_ids: tuple
    view_ids: tuple = None
    sample_ids: tuple = None
    layout: tuple = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise ParameterError(f"feature matrix must be 2-D, got shape {X.shape}")
        n = X.shape[0]
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", tuple(ClassLabel.parse(l) for l in self.labels))
        object.__setattr__(self, "apple_ids", tuple(str(a) for a in self.apple_ids))
        views = self.view_ids if self.view_ids is not None else ("",) * n
        object.__setattr__(self, "view_ids", tuple(str(v) for v in views))
        ids = self.sample_ids if self.sample_ids is not None else tuple(str(i) for i in range(n))
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in ids))
        layout = self.layout if self.layout is not None else ((BlockKind.MULTIFRACTAL, X.shape[1]),)
        layout = tuple((BlockKind(k), int(m)) for k, m in layout)
        object.__setattr__(self, "layout", layout)
        if not (len(self.labels) == len(self.apple_ids) == len(self.view_ids)
                == len(self.sample_ids) == n):
            raise ParameterError("labels, ids and feature rows differ in count")
        if sum(m for _, m in layout) != X.shape[1]:
            raise ParameterError(f"layout {layout} does not cover {X.shape[1]} columns")

    def __len__(self):
        return self.X.shape[0]

    @property
    def y(self):
        """Labels as indices into LABEL_ORDER."""
        return np.array([LABEL_ORDER.index(l) for l in self.labels], dtype=np.int64)

    def subset(self, rows):
        rows = list(rows)
        pick = lambda seq: tuple(seq[i] for i in rows)
        return Dataset(self.X[rows], pick(self.labels), pick(self.apple_ids),
                       pick(self.view_ids), pick(self.sample_ids), self.layout)

    def select_blocks(self, kinds):
        """Keep only the given blocks, in canonical order."""
        kinds = {BlockKind(k) for k in kinds}
        slices = block_slices(self.layout)
        missing = kinds - set(slices)
        if missing:
            raise ParameterError(f"blocks not present: {sorted(k.value for k in missing)}")
        keep = [k for k in BLOCK_ORDER if k in kinds]
        cols = np.concatenate([np.arange(slices[k].start, slices[k].stop) for k in keep])
        layout = tuple((k, m) for k, m in self.layout if k in kinds)
        return replace(self, X=self.X[:, cols], layout=layout)


def split_drop_one_out(dataset, train_fraction=0.75, rng_seed=42):
    """Split by apple so that no apple contributes to both train and test.

    Apples are grouped by the set of classes their views carry, shuffled per
    group with the seeded generator and cut at ``round(fraction * count)``.
    """
    if not 0 < train_fraction < 1:
        raise ParameterError(f"train_fraction must be in (0, 1), got {train_fraction}")
    apples = {}
    for i, (a, lab) in enumerate(zip(dataset.apple_ids, dataset.labels)):
        apples.setdefault(a, []).append(i)
    for cls in LABEL_ORDER:
        n_cls = len({a for a, l in zip(dataset.apple_ids, dataset.labels) if l == cls})
        if 0 < n_cls < 2:
            raise ParameterError(f"class {cls.value} has fewer than 2 apples")
    if len(apples) < 2:
        raise ParameterError("need at least 2 apples to split")

    groups = {}
    for a in sorted(apples):
        key = tuple(sorted({LABEL_ORDER.index(dataset.labels[i]) for i in apples[a]}))
        groups.setdefault(key, []).append(a)
    rng = SplitMix64(rng_seed)
    train_apples = set()
    for key in sorted(groups):
        members = groups[key]
        order = np.argsort(rng.random(len(members)), kind="stable")
        n_train = int(np.floor(train_fraction * len(members) + 0.5))
        if len(members) >= 2:
            n_train = min(max(n_train, 1), len(members) - 1)
        train_apples.update(members[j] for j in order[:n_train])

    train_rows = [i for i, a in enumerate(dataset.apple_ids) if a in train_apples]
    test_rows = [i for i, a in enumerate(dataset.apple_ids) if a not in train_apples]
    return dataset.subset(train_rows), dataset.subset(test_rows)


# --------------------------------------------------------------- normaliser

@dataclass(frozen=True, eq=False)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.shape[0]:
            raise ParameterError(
                f"expected {self.mean.shape[0]} features, got {X.shape[-1]}")
        return (X - self.mean) / self.std


def fit_normalizer(train):
    X = train.X if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if X.shape[0] == 0:
        raise ParameterError("cannot fit a normaliser on an empty set")
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return Normalizer(mean=mean, std=std)


# ------------------------------------------------------------------- models

@dataclass(frozen=True, eq=False)
class SvmBinary:
    """One one-vs-one subproblem: ``positive`` vs ``negative`` class index."""

    positive: int
    negative: int
    support: np.ndarray  # (n_sv, d) normalised support vectors
    coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float
    alpha: np.ndarray = None  # full dual vector from training, not persisted
    gap: float = 0.0
    iterations: int = 0

    def decision(self, Z, degree, gamma):
        return _poly_kernel(Z, self.support, degree, gamma) @ self.coef + self.bias


@dataclass(frozen=True, eq=False)
class TrainedModel:
    kind: str
    layout: tuple
    classes: tuple  # indices into LABEL_ORDER seen in training
    normalizer: Normalizer
    params: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return self.normalizer.mean.shape[0]


def _poly_kernel(A, B, degree, gamma=1.0):
    return (gamma * (A @ B.T) + 1.0) ** degree


def _check_classes(dataset):
    classes = tuple(sorted(set(dataset.y.tolist())))
    if len(classes) < 2:
        raise ParameterError("training needs at least two classes")
    return classes


def train(kind, dataset, *, k=4, c=1.0, degree=3, gamma=0.0, tol=1e-3, max_passes=10,
          ridge=1e-6):
    """Fit a classifier on ``dataset``; see the module docstring.

    The SVM kernel is ``(gamma * x.z + 1) ** degree``; ``gamma=0`` means one
    over the feature count. Each binary subproblem may take at most
    ``max_passes * len(dataset)`` SMO steps.
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown classifier {kind!r}; expected one of {KINDS}")
    if len(dataset) == 0:
        raise ParameterError("empty training set")
    classes = _check_classes(dataset)
    norm = fit_normalizer(dataset)
    Z = norm.apply(dataset.X)
    y = dataset.y
    if kind == "knn":
        if not 1 <= k <= len(dataset):
            raise ParameterError(f"k must be in [1, {len(dataset)}], got {k}")
        params = {"k": int(k), "X": Z, "y": y}
    elif kind == "svm":
        if gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {gamma}")
        gamma = float(gamma) or 1.0 / Z.shape[1]
        params = _train_svm(Z, y, classes, c, degree, gamma, tol, max_passes * len(dataset))
    else:
        params = _train_ldc(Z, y, classes, ridge)
    return TrainedModel(kind=kind, layout=dataset.layout, classes=classes,
                        normalizer=norm, params=params)


def train_from_config(dataset, config):
    return train(config.classifier, dataset, k=config.knn_k, c=config.svm_c,
                 degree=config.svm_degree, gamma=config.svm_gamma, tol=config.svm_tol,
                 max_passes=config.svm_max_passes, ridge=config.ldc_ridge)


def svm_binary(Z, t, c=1.0, degree=3, tol=1e-3, max_iter=None, gamma=1.0):
    """Solve one binary SVM dual; ``t`` holds +1/-1 targets.

    Returns (alpha, bias, gap, iterations). Raises TrainingError when the
    KKT gap is still above ``tol`` after ``max_iter`` SMO steps.
    """
    if not c > 0:
        raise ParameterError(f"C must be positive, got {c}")
    if degree < 1:
        raise ParameterError(f"degree must be >= 1, got {degree}")
    t = np.asarray(t, dtype=np.float64)
    if max_iter is None:
        max_iter = 10 * t.shape[0]
    kmat = np.ascontiguousarray(_poly_kernel(Z, Z, degree, gamma))
    alpha, grad, iters, gap = _backend.smo_solve(kmat, np.ascontiguousarray(t), float(c),
                                                 float(tol), int(max_iter))
    if not gap < tol:
        raise TrainingError(f"SMO stopped after {iters} steps with KKT gap {gap:.3g} > {tol}")
    return alpha, smo_bias(alpha, grad, t, float(c)), float(gap), int(iters)


def _train_svm(Z, y, classes, c, degree, gamma, tol, max_iter):
    if max_iter < 1:
        raise ParameterError(f"max_passes must be >= 1, got {max_iter}")
    machines = []
    for pos, neg in combinations(classes, 2):
        rows = np.flatnonzero((y == pos) | (y == neg))
        t = np.where(y[rows] == pos, 1.0, -1.0)
        name = f"{LABEL_ORDER[pos].value} vs {LABEL_ORDER[neg].value}"
        try:
            alpha, bias, gap, iters = svm_binary(Z[rows], t, c, degree, tol, max_iter, gamma)
        except TrainingError as exc:
            raise TrainingError(f"{name}: {exc}") from None
        sv = alpha > 0
        machines.append(SvmBinary(positive=pos, negative=neg, support=Z[rows][sv],
                                  coef=alpha[sv] * t[sv], bias=bias, alpha=alpha,
                                  gap=gap, iterations=iters))
    return {"c": float(c), "degree": int(degree), "gamma": gamma, "machines": machines}


def _train_ldc(Z, y, classes, ridge):
    n, d = Z.shape
    means = np.stack([Z[y == cl].mean(axis=0) for cl in classes])
    centred = Z - means[np.searchsorted(classes, y)]
    dof = max(n - len(classes), 1)
    cov = centred.T @ centred / dof
    lam = ridge * np.trace(cov) / d
    if not lam > 0:
        lam = ridge
    cov[np.diag_indices(d)] += lam
    try:
        w = np.linalg.solve(cov, means.T).T  # (n_classes, d)
    except np.linalg.LinAlgError as exc:
        raise TrainingError(f"pooled covariance is singular: {exc}") from None
    priors = np.array([(y == cl).mean() for cl in classes])
    b = -0.5 * np.einsum("ij,ij->i", w, means) + np.log(priors)
    return {"ridge": float(ridge), "weights": w, "offsets": b}


# --------------------------------------------------------------- prediction

def _as_matrix(model, X):
    from .descriptors import FeatureVector

    if isinstance(X, FeatureVector):
        if X.layout != model.layout:
            raise ParameterError(f"vector layout {X.layout} does not match model {model.layout}")
        X = X.as_array()
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_features:
        raise ParameterError(f"model expects {model.n_features} features, got {X.shape[1]}")
    return X, single


def knn_vote(dists, labels, k):
    """Label index voted by the k nearest rows.

    Nearest first, equal distances in row order. Ties in the vote go to the
    class with the smaller summed neighbour distance, then to label order.
    """
    nearest = np.argsort(dists, kind="stable")[:k]
    counts = {}
    sums = {}
    for i in nearest:
        lab = int(labels[i])
        counts[lab] = counts.get(lab, 0) + 1
        sums[lab] = sums.get(lab, 0.0) + float(dists[i])
    return min(counts, key=lambda lab: (-counts[lab], sums[lab], lab))


def _fused_rows(Z, q, slices):
    total = np.zeros(Z.shape[0])
    for sl in slices:
        diff = Z[:, sl] - q[sl]
        total += np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return total


def predict_indices(model, X):
    """Predicted label indices (into LABEL_ORDER) for each row of ``X``."""
    X, _ = _as_matrix(model, X)
    Z = model.normalizer.apply(X)
    p = model.params
    if model.kind == "knn":
        slices = list(block_slices(model.layout).values())
        return np.array([knn_vote(_fused_rows(p["X"], q, slices), p["y"], p["k"]) for q in Z],
                        dtype=np.int64)
    if model.kind == "svm":
        return _svm_vote(model, Z)
    scores = Z @ p["weights"].T + p["offsets"]
    return np.asarray(model.classes, dtype=np.int64)[np.argmax(scores, axis=1)]


def _svm_vote(model, Z):
    degree = model.params["degree"]
    gamma = model.params["gamma"]
    votes = np.zeros((Z.shape[0], len(LABEL_ORDER)))
    strength = np.zeros_like(votes)
    rows = np.arange(Z.shape[0])
    for m in model.params["machines"]:
        f = m.decision(Z, degree, gamma)
        winner = np.where(f > 0, m.positive, m.negative)
        votes[rows, winner] += 1
        strength[rows, winner] += np.abs(f)
    out = np.empty(Z.shape[0], dtype=np.int64)
    for r in rows:
        out[r] = min(model.classes, key=lambda cl: (-votes[r, cl], -strength[r, cl], cl))
    return out


def predict(model, x):
    """Label for one vector, or a list of labels for a matrix."""
    X, single = _as_matrix(model, x)
    idx = predict_indices(model, X)
    labels = [LABEL_ORDER[i] for i in idx]
    return labels[0] if single else labels


# --------------------------------------------------------------- evaluation

def format_count_rate(count, total):
    """``49 (98%)`` style cell."""
    rate = 100.0 * count / total if total else 0.0
    return f"{count} ({round(rate, 2):g}%)"


@dataclass(frozen=True, eq=False)
class EvalReport:
    confusion: np.ndarray  # rows true class, columns predicted, LABEL_ORDER

    @property
    def counts(self):
        return self.confusion.sum(axis=1)

    @property
    def true_positives(self):
        return np.diag(self.confusion).copy()

    @property
    def tpr(self):
        counts = self.counts
        return np.where(counts > 0, self.true_positives / np.maximum(counts, 1), 0.0)

    @property
    def false_positives(self):
        return self.confusion.sum(axis=0) - self.true_positives

    @property
    def total(self):
        return int(self.confusion.sum())

    @property
    def accuracy(self):
        return float(self.true_positives.sum() / self.total) if self.total else 0.0

    def to_text(self):
        lines = [f"{'class':<8}{'n':>5}  {'TPR':<12}{'FPR':>5}"]
        for i, lab in enumerate(LABEL_ORDER):
            n = int(self.counts[i])
            lines.append(f"{lab.value:<8}{n:>5}  {format_count_rate(int(self.true_positives[i]), n):<12}"
                         f"{int(self.false_positives[i]):>5}")
        lines.append(f"accuracy {format_count_rate(int(self.true_positives.sum()), self.total)}")
        lines.append("")
        lines.append("confusion (rows true, columns predicted)")
        lines.append(" " * 8 + "".join(f"{lab.value:>8}" for lab in LABEL_ORDER))
        for i, lab in enumerate(LABEL_ORDER):
            lines.append(f"{lab.value:<8}" + "".join(f"{int(v):>8}" for v in self.confusion[i]))
        return "\n".join(lines) + "\n"

    def to_csv(self):
        lines = ["class,count,true_positive,tpr,false_positive"
                 + "".join(f",pred_{lab.value}" for lab in LABEL_ORDER)]
        for i, lab in enumerate(LABEL_ORDER):
            lines.append(f"{lab.value},{int(self.counts[i])},{int(self.true_positives[i])},"
                         f"{float(self.tpr[i])!r},{int(self.false_positives[i])}"
                         + "".join(f",{int(v)}" for v in self.confusion[i]))
        lines.append(f"all,{self.total},{int(self.true_positives.sum())},{self.accuracy!r},"
                     + ",".join("" for _ in range(len(LABEL_ORDER) + 1)))
        return "\n".join(lines) + "\n"


def confusion_matrix(true_idx, pred_idx):
    m = np.zeros((len(LABEL_ORDER), len(LABEL_ORDER)), dtype=np.int64)
    np.add.at(m, (np.asarray(true_idx), np.asarray(pred_idx)), 1)
    return m


def evaluate(model, test):
    if len(test) == 0:
        raise ParameterError("empty test set")
    if test.layout != model.layout:
        raise ParameterError(f"test layout {test.layout} does not match model {model.layout}")
    return EvalReport(confusion_matrix(test.y, predict_indices(model, test.X)))


# ------------------------------------------------------------------- fusion

FUSION_SUBSETS = (
    ("MD", (BlockKind.MULTIFRACTAL,)),
    ("MD+RD", (BlockKind.MULTIFRACTAL, BlockKind.RADON)),
    ("MD+RD+FD", (BlockKind.MULTIFRACTAL, BlockKind.RADON, BlockKind.FOURIER)),
)


@dataclass(frozen=True, eq=False)
class FusionTable:
    subsets: tuple  # subset names, column order
    kinds: tuple  # classifier kinds, row order
    accuracy: np.ndarray  # (len(kinds), len(subsets)), in percent

    def to_text(self):
        lines = [f"{'classifier':<12}" + "".join(f"{s:>10}" for s in self.subsets)]
        for kind, row in zip(self.kinds, self.accuracy):
            lines.append(f"{kind:<12}" + "".join(f"{v:>10.2f}" for v in row))
        return "\n".join(lines) + "\n"

    def to_csv(self):
        lines = ["classifier," + ",".join(self.subsets)]
        for kind, row in zip(self.kinds, self.accuracy):
            lines.append(kind + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def compare_fusions(train_set, test_set, kinds=KINDS, subsets=FUSION_SUBSETS, **params):
    """Accuracy (%) of each classifier on each block subset."""
    if train_set.layout != test_set.layout:
        raise ParameterError("train and test layouts differ")
    acc = np.zeros((len(kinds), len(subsets)))
    for j, (_, blocks) in enumerate(subsets):
        tr = train_set.select_blocks(blocks)
        te = test_set.select_blocks(blocks)
        for i, kind in enumerate(kinds):
            acc[i, j] = 100.0 * evaluate(train(kind, tr, **params), te).accuracy
    return FusionTable(subsets=tuple(s for s, _ in subsets), kinds=tuple(kinds), accuracy=acc)


# -------------------------------------------------------------- persistence

def _hex_row(values):
    return " ".join(float(v).hex() for v in np.ravel(values))


def _parse_hex(text):
    return np.array([float.fromhex(t) for t in text.split()], dtype=np.float64)


def model_to_text(model):
    p = model.params
    out = [f"stemcalyx-model {MODEL_VERSION}", f"kind {model.kind}",
           "layout " + " ".join(f"{k.value}:{m}" for k, m in model.layout),
           "classes " + " ".join(LABEL_ORDER[c].value for c in model.classes),
           "mean " + _hex_row(model.normalizer.mean),
           "std " + _hex_row(model.normalizer.std)]
    if model.kind == "knn":
        out.append(f"k {p['k']}")
        out.append(f"samples {p['X'].shape[0]}")
        for row, lab in zip(p["X"], p["y"]):
            out.append(f"{LABEL_ORDER[lab].value} {_hex_row(row)}")
    elif model.kind == "svm":
        out.append(f"c {float(p['c']).hex()}")
        out.append(f"degree {p['degree']}")
        out.append(f"gamma {float(p['gamma']).hex()}")
        out.append(f"machines {len(p['machines'])}")
        for m in p["machines"]:
            out.append(f"machine {LABEL_ORDER[m.positive].value} {LABEL_ORDER[m.negative].value} "
                       f"{m.support.shape[0]} {float(m.bias).hex()}")
            for coef, sv in zip(m.coef, m.support):
                out.append(f"{float(coef).hex()} {_hex_row(sv)}")
    else:
        out.append(f"ridge {float(p['ridge']).hex()}")
        out.append("offsets " + _hex_row(p["offsets"]))
        for row in p["weights"]:
            out.append("weights " + _hex_row(row))
    return "\n".join(out) + "\n"


def model_from_text(text):
    lines = iter(text.splitlines())

    def field_(name):
        try:
            line = next(lines)
        except StopIteration:
            raise DataFormatError(f"model file ends before {name!r}") from None
        head, _, rest = line.partition(" ")
        if head != name:
            raise DataFormatError(f"expected {name!r}, found {head!r}")
        return rest

    try:
        version = field_("stemcalyx-model")
        if int(version) != MODEL_VERSION:
            raise DataFormatError(f"unsupported model version {version}")
        kind = field_("kind")
        if kind not in KINDS:
            raise DataFormatError(f"unknown model kind {kind!r}")
        layout = tuple((BlockKind(k), int(m)) for k, m in
                       (t.split(":") for t in field_("layout").split()))
        classes = tuple(LABEL_ORDER.index(ClassLabel.parse(t)) for t in field_("classes").split())
        norm = Normalizer(mean=_parse_hex(field_("mean")), std=_parse_hex(field_("std")))
        d = norm.mean.shape[0]
        if kind == "knn":
            k = int(field_("k"))
            n = int(field_("samples"))
            X = np.zeros((n, d))
            y = np.zeros(n, dtype=np.int64)
            for i in range(n):
                lab, _, row = next(lines).partition(" ")
                y[i] = LABEL_ORDER.index(ClassLabel.parse(lab))
                X[i] = _parse_hex(row)
            params = {"k": k, "X": X, "y": y}
        elif kind == "svm":
            c = float.fromhex(field_("c"))
            degree = int(field_("degree"))
            gamma = float.fromhex(field_("gamma"))
            machines = []
            for _ in range(int(field_("machines"))):
                pos, neg, n_sv, bias = field_("machine").split()
                n_sv = int(n_sv)
                coef = np.zeros(n_sv)
                sup = np.zeros((n_sv, d))
                for i in range(n_sv):
                    vals = _parse_hex(next(lines))
                    coef[i], sup[i] = vals[0], vals[1:]
                machines.append(SvmBinary(
                    positive=LABEL_ORDER.index(ClassLabel.parse(pos)),
                    negative=LABEL_ORDER.index(ClassLabel.parse(neg)),
                    support=sup, coef=coef, bias=float.fromhex(bias)))
            params = {"c": c, "degree": degree, "gamma": gamma, "machines": machines}
        else:
            ridge = float.fromhex(field_("ridge"))
            offsets = _parse_hex(field_("offsets"))
            w = np.stack([_parse_hex(field_("weights")) for _ in classes])
            params = {"ridge": ridge, "weights": w, "offsets": offsets}
    except (ValueError, StopIteration) as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(f"malformed model file: {exc}") from None
    if sum(m for _, m in layout) != d:
        raise DataFormatError("layout does not match normaliser length")
    return TrainedModel(kind=kind, layout=layout, classes=classes, normalizer=norm, params=params)


def save_model(model, path):
    with open(path, "w") as fh:
        fh.write(model_to_text(model))


def load_model(path):
    with open(path) as fh:
        return model_from_text(fh.read())

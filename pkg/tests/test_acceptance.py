"""Acceptance criteria 1-12, each at its stated tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary. Criteria
10 and 12 run the full synthetic benchmark (600 scenes) twice through the
command line and take a few minutes.
"""

import math
import time

import numpy as np
import pytest
from scipy import ndimage

from stemcalyx.classify import (Dataset, evaluate, predict_indices, split_drop_one_out,
                                svm_binary, train)
from stemcalyx.cli import main
from stemcalyx.descriptors import (BlockKind, MultifractalConfig, fourier_coefficients,
                                   fourier_descriptor, multifractal_descriptor,
                                   radon_descriptor, radon_profiles, radon_transform,
                                   reconstruct_boundary)
from stemcalyx.imaging import median_filter, trace_boundary
from stemcalyx.labels import LABEL_ORDER
from stemcalyx.segmentation import UNLABELED, auto_seed, grow_cut_full
from stemcalyx.synthgen import (SplitMix64, SynthSpec, derive_seed, gen_apple_scene,
                                gen_sierpinski)

from conftest import disk_mask, random_blob, seeded_shape
from oracles import decision, kkt_residual, knn_oracle

Q = MultifractalConfig().q_values


def criterion(number, title):
    return pytest.mark.criterion(number, title)


def random_masks(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        size = int(rng.integers(70, 120))
        yield random_blob(rng, size=size, fill=rng.uniform(0.45, 0.6), smooth=int(rng.integers(0, 3)))


# ---------------------------------------------------------------------- 1

@criterion(1, "multifractal dimension oracle (carpet, square, line)")
def test_c01_multifractal_dimensions():
    start = time.perf_counter()
    carpet = multifractal_descriptor(gen_sierpinski(5)).values
    square = multifractal_descriptor(np.ones((64, 64), bool)).values
    line = multifractal_descriptor(np.ones((1, 64), bool)).values
    elapsed = time.perf_counter() - start
    i0 = Q.index(0.0)
    assert abs(carpet[i0] - math.log(8) / math.log(3)) <= 0.08
    assert np.all(np.abs(square[:21] - 2.0) <= 0.05)
    assert abs(line[i0] - 1.0) <= 0.1
    assert elapsed < 2.0


# ---------------------------------------------------------------------- 2

@criterion(2, "f(1) = alpha(1) within 1e-6 on 100 random masks")
def test_c02_f_equals_alpha_at_one():
    i1 = Q.index(1.0)
    for mask in random_masks(100, 2):
        v = multifractal_descriptor(mask).values
        assert abs(v[i1] - v[21 + i1]) <= 1e-6


# ---------------------------------------------------------------------- 3

@criterion(3, "Fourier round trip < 1e-6 on 100 chains; circle exact with keep = 3")
def test_c03_fourier_round_trip():
    for mask in random_masks(100, 3):
        chain = trace_boundary(mask)
        s = chain[:, 0] + 1j * chain[:, 1]
        back = reconstruct_boundary(fourier_coefficients(s), len(s))
        assert np.max(np.abs(back.real - chain[:, 0])) < 1e-6
        assert np.max(np.abs(back.imag - chain[:, 1])) < 1e-6
    for n, r, c in ((64, 10.0, 0j), (100, 37.5, 12 - 4j), (256, 3.0, 100 + 100j)):
        s = c + r * np.exp(2j * np.pi * np.arange(n) / n)
        assert np.max(np.abs(reconstruct_boundary(fourier_coefficients(s), 3) - s)) < 1e-6


# ---------------------------------------------------------------------- 4

@criterion(4, "Fourier descriptor invariance: translation exact, 2x scale and 90 deg <= 0.02")
def test_c04_fourier_invariance():
    for label in LABEL_ORDER:
        for i in range(50):
            m = seeded_shape(label, i, 1234)
            chain = trace_boundary(m)
            base = fourier_descriptor(chain).values
            moved = fourier_descriptor(trace_boundary(m, origin=(113, 57))).values
            assert np.linalg.norm(moved - base) == 0.0
            big = seeded_shape(label, i, 1234, scale_factor=2.0)
            assert np.linalg.norm(fourier_descriptor(trace_boundary(big)).values - base) <= 0.02
            turned = fourier_descriptor(trace_boundary(np.rot90(m))).values
            assert np.linalg.norm(turned - base) <= 0.02


# ---------------------------------------------------------------------- 5

@criterion(5, "Radon columns sum exactly to area; disk profiles agree within 0.02")
def test_c05_radon_mass():
    angles = [0, 30, 60, 90, 120, 150]
    for mask in random_masks(100, 5):
        values = radon_transform(mask, angles).values
        assert values.dtype.kind == "i"
        assert all(int(s) == int(mask.sum()) for s in values.sum(axis=0))
    for size in (21, 40, 64, 101):
        cols = radon_profiles(disk_mask(size))
        for a in range(cols.shape[1]):
            for b in range(a + 1, cols.shape[1]):
                assert np.abs(cols[:, a] - cols[:, b]).max() <= 0.02


# ---------------------------------------------------------------------- 6

@criterion(6, "Radon descriptor within 0.05 under 2x scale and one-step rotation")
def test_c06_radon_robustness():
    for label in LABEL_ORDER:
        for i in range(50):
            base = radon_descriptor(seeded_shape(label, i, 1234)).values
            big = radon_descriptor(seeded_shape(label, i, 1234, scale_factor=2.0)).values
            assert np.linalg.norm(big - base) <= 0.05
            r = radon_descriptor(seeded_shape(label, i, 99, scale=(0.5, 2.0))).values
            turned = radon_descriptor(seeded_shape(label, i, 99, scale=(0.5, 2.0),
                                                   turn=30.0)).values
            assert np.linalg.norm(turned - r) <= 0.05


# ---------------------------------------------------------------------- 7

@criterion(7, "grow-cut IoU >= 0.98 on the noiseless fruit; convergence; seeds fixed")
def test_c07_growcut():
    scene = gen_apple_scene([], image_size=256, rng_seed=7, noise=0.0)
    seeds = auto_seed(scene.image)
    res = grow_cut_full(scene.image, seeds)
    iou = (res.mask & scene.fruit).sum() / (res.mask | scene.fruit).sum()
    assert iou >= 0.98
    h, w = scene.image.shape
    assert res.converged and res.passes <= w + h
    assert np.array_equal(res.labels[seeds != UNLABELED], seeds[seeds != UNLABELED])
    for i in range(30):
        rng = SplitMix64(derive_seed(77, i))
        spec = SynthSpec(LABEL_ORDER[i % 3], rng.uniform(0.5, 2.0), rng.uniform(0, 360),
                         rng.uniform(0.2, 1.0), rng.seed())
        # the pipeline runs grow-cut on the median-filtered scene
        image = median_filter(gen_apple_scene([spec], 256, rng.seed()).image)
        seeds = auto_seed(image)
        res = grow_cut_full(image, seeds)
        assert res.converged and res.passes <= w + h
        assert np.array_equal(res.labels[seeds != UNLABELED], seeds[seeds != UNLABELED])


# ---------------------------------------------------------------------- 8

@criterion(8, "k-NN identical to the brute-force oracle on 20 random datasets")
def test_c08_knn_oracle():
    layout = ((BlockKind.MULTIFRACTAL, 4), (BlockKind.FOURIER, 3), (BlockKind.RADON, 3))
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(10, 201))
        if seed % 2:
            X = rng.integers(0, 4, size=(n, 10)).astype(float)  # frequent ties
        else:
            X = rng.normal(size=(n, 10)) * rng.uniform(0.1, 10, size=10)
        labels = [LABEL_ORDER[i] for i in rng.integers(0, 3, size=n)]
        labels[:3] = LABEL_ORDER
        ds = Dataset(X, labels, [str(i) for i in range(n)], layout=layout)
        queries = np.vstack([X[:20], X[:20] + rng.normal(size=(20, 10))])
        for k in (1, 4, int(rng.integers(2, 10))):
            model = train("knn", ds, k=k)
            assert np.array_equal(predict_indices(model, queries), knn_oracle(ds, queries, k))


# ---------------------------------------------------------------------- 9

def _check_dual(alpha, t, c):
    assert np.all(alpha >= 0) and np.all(alpha <= c)
    assert abs(alpha @ t) <= 1e-6


@criterion(9, "SVM: separable set and XOR solved; 0 <= alpha <= C and sum alpha y = 0")
def test_c09_svm():
    pts = np.array([[0, 0], [2, 2], [0, 1], [1, 0], [1, 2], [2, 1], [-1, 0], [3, 2]], float)
    t = np.array([-1, 1, -1, -1, 1, 1, -1, 1], float)
    alpha, bias, _, _ = svm_binary(pts, t, c=1e6, degree=1, tol=1e-3, gamma=1.0)
    K = pts @ pts.T + 1.0
    assert np.all(np.sign(decision(alpha, t, K, bias)) == t)
    assert kkt_residual(alpha, t, K, bias, 1e6) <= 1e-3
    _check_dual(alpha, t, 1e6)

    xor = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]], float)
    tx = np.array([1, 1, -1, -1], float)
    alpha, bias, _, _ = svm_binary(xor, tx, c=1.0, degree=3, tol=1e-3, gamma=1.0)
    Kx = (xor @ xor.T + 1.0) ** 3
    assert np.all(np.sign(decision(alpha, tx, Kx, bias)) == tx)
    _check_dual(alpha, tx, 1.0)
    ds = Dataset(xor, ["stem", "stem", "defect", "defect"], ["a", "b", "c", "d"])
    assert evaluate(train("svm", ds, degree=3), ds).accuracy == 1.0

    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(12, 80))
        X = rng.normal(size=(n, 5))
        labels = [LABEL_ORDER[i] for i in rng.integers(0, 3, size=n)]
        labels[:3] = LABEL_ORDER
        ds = Dataset(X + 2 * np.array([LABEL_ORDER.index(l) for l in labels])[:, None],
                     labels, [str(i) for i in range(n)])
        c = float(rng.choice([0.1, 1.0, 10.0]))
        model = train("svm", ds, c=c, degree=3)
        y = ds.y
        for m in model.params["machines"]:
            rows = (y == m.positive) | (y == m.negative)
            _check_dual(m.alpha, np.where(y[rows] == m.positive, 1.0, -1.0), c)


# ---------------------------------------------------------------------- 11

@criterion(11, "drop-one-out: no apple in both train and test over 100 seeded splits")
def test_c11_split_integrity():
    n_apples = 200
    X = np.zeros((3 * n_apples, 1))
    labels = list(LABEL_ORDER) * n_apples
    apples = [f"apple{i // 3:03d}" for i in range(3 * n_apples)]
    ds = Dataset(X, labels, apples)
    for seed in range(100):
        tr, te = split_drop_one_out(ds, 0.75, seed)
        assert not set(tr.apple_ids) & set(te.apple_ids)
        assert len(tr) + len(te) == len(ds)


# ------------------------------------------------------------- 10 and 12

def _benchmark(root):
    """synth -> extract -> train -> evaluate -> fusion, all through the CLI."""
    root.mkdir(parents=True, exist_ok=True)
    steps = [
        ["synth", "--n", "200", "--seed", "42", "--out", root / "corpus"],
        ["extract", root / "corpus", "--corpus", "--out", root / "features.csv"],
        ["train", root / "features.csv", "--model", root / "model.txt"],
        ["evaluate", root / "features.csv", "--model", root / "model.txt", "--out", root / "report"],
        ["fusion", root / "features.csv", "--classifiers", "svm", "--out", root / "fusion.csv"],
    ]
    start = time.perf_counter()
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    return time.perf_counter() - start


@pytest.fixture(scope="module")
def benchmark_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("benchmark")
    first = _benchmark(base / "run1")
    _benchmark(base / "run2")
    return base / "run1", base / "run2", first


@criterion(10, "synthetic benchmark: fused SVM >= 90% and >= MD-only - 1 point, < 10 min")
def test_c10_end_to_end(benchmark_runs):
    run1, _, seconds = benchmark_runs
    report = (run1 / "report" / "report.csv").read_text().splitlines()
    overall = report[-1].split(",")
    assert overall[0] == "all" and int(overall[1]) == 150
    fused = float(overall[3])
    header, row = (run1 / "fusion.csv").read_text().splitlines()
    table = dict(zip(header.split(",")[1:], map(float, row.split(",")[1:])))
    print(f"fused SVM accuracy {100 * fused:.2f}%, MD only {table['MD']:.2f}%, "
          f"{seconds:.0f} s")
    assert fused >= 0.90
    assert table["MD+RD+FD"] == pytest.approx(100 * fused)
    assert table["MD+RD+FD"] >= table["MD"] - 1.0
    assert seconds < 600


@criterion(12, "determinism: repeated benchmark gives byte-identical CSVs, model and reports")
def test_c12_determinism(benchmark_runs):
    run1, run2, _ = benchmark_runs
    for rel in ("features.csv", "model.txt", "report/report.txt", "report/report.csv",
                "fusion.csv", "corpus/manifest.csv"):
        assert (run1 / rel).read_bytes() == (run2 / rel).read_bytes(), rel
    for scene in sorted((run1 / "corpus" / "scenes").iterdir()):
        assert scene.read_bytes() == (run2 / "corpus" / "scenes" / scene.name).read_bytes()

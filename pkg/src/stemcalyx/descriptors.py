"""Shape descriptors of candidate regions and their fusion.

Three blocks are computed per candidate:

* multifractal: box-counting spectrum f(q) and Hoelder exponents alpha(q)
  of the mask's mass distribution (21 q values -> 42 features);
* Fourier: magnitudes of the boundary's DFT coefficients, normalised for
  translation, scale, rotation and starting point (K features);
* Radon: shift-and-sum projections at a few angles, each resampled to a
  fixed number of bins and sorted across angles (bins x angles features).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import (DegenerateRegionError, DescriptorError, EmptyRegionError,
                     NumericalError, ParameterError)
from .imaging import trace_boundary
from .labels import ClassLabel


class BlockKind(str, Enum):
    MULTIFRACTAL = "m"
    FOURIER = "f"
    RADON = "r"


BLOCK_ORDER = (BlockKind.MULTIFRACTAL, BlockKind.FOURIER, BlockKind.RADON)


def _default_q():
    return tuple(round(-1.0 + 0.1 * i, 10) for i in range(21))


@dataclass(frozen=True)
class MultifractalConfig:
    q_values: tuple = field(default_factory=_default_q)
    box_sizes: tuple = (2, 4, 8, 16, 32)
    min_probability_floor: float = 1e-12
    # When set, report the raw sums at this one box size instead of slopes.
    single_box_size: Optional[int] = None
    # Use gray intensities of the candidate patch as mass instead of membership.
    intensity_mass: bool = False

    def __post_init__(self):
        if not self.q_values:
            raise ParameterError("q_values must not be empty")
        sizes = tuple(self.box_sizes)
        if any(s < 2 for s in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ParameterError(f"box sizes must be >= 2 and strictly ascending: {sizes}")
        if len(sizes) < 2 and self.single_box_size is None:
            raise ParameterError("slope estimation needs at least two box sizes")
        if self.single_box_size is not None and self.single_box_size < 2:
            raise ParameterError("single_box_size must be >= 2")
        if not self.min_probability_floor > 0:
            raise ParameterError("min_probability_floor must be positive")

    @property
    def length(self):
        return 2 * len(self.q_values)


@dataclass(frozen=True)
class DescriptorConfig:
    multifractal: MultifractalConfig = field(default_factory=MultifractalConfig)
    fourier_k: int = 64
    fourier_samples: int = 256
    radon_step: float = 30.0
    radon_bins: int = 16

    @property
    def radon_angles(self):
        return tuple(self.radon_step * i for i in range(int(round(180 / self.radon_step))))

    @property
    def layout(self):
        """Block kind and length, in canonical order."""
        return (
            (BlockKind.MULTIFRACTAL, self.multifractal.length),
            (BlockKind.FOURIER, self.fourier_k),
            (BlockKind.RADON, self.radon_bins * len(self.radon_angles)),
        )


@dataclass(frozen=True, eq=False)
class FeatureBlock:
    kind: BlockKind
    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericalError(f"{self.kind.name} block has non-finite values")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    blocks: tuple
    label: Optional[ClassLabel] = None

    def __post_init__(self):
        kinds = tuple(b.kind for b in self.blocks)
        if kinds != BLOCK_ORDER:
            raise ParameterError(f"blocks must be ordered m, f, r; got {kinds}")

    @property
    def layout(self):
        return tuple((b.kind, len(b.values)) for b in self.blocks)

    def as_array(self):
        return np.concatenate([b.values for b in self.blocks])


# ------------------------------------------------------------- multifractal

@dataclass(frozen=True, eq=False)
class BoxStats:
    n_total: int
    n_nonempty: int
    masses: np.ndarray  # mass of each non-empty box, row-major box order

    @property
    def total_mass(self):
        return self.masses.sum()


def box_partition_stats(mask, epsilon, weights=None):
    """Cover the mask with epsilon x epsilon boxes (zero-padded grid).

    ``weights`` optionally replaces pixel membership by a per-pixel mass.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyRegionError("box counting needs at least one object pixel")
    if epsilon < 1:
        raise ParameterError(f"box size must be >= 1, got {epsilon}")
    mass = mask.astype(np.float64) if weights is None else np.where(mask, weights, 0.0)
    h, w = mask.shape
    ph = -(-h // epsilon) * epsilon
    pw = -(-w // epsilon) * epsilon
    padded = np.zeros((ph, pw))
    padded[:h, :w] = mass
    occupied = np.zeros((ph, pw), dtype=bool)
    occupied[:h, :w] = mask
    boxes = padded.reshape(ph // epsilon, epsilon, pw // epsilon, epsilon).sum(axis=(1, 3))
    nonempty = occupied.reshape(ph // epsilon, epsilon, pw // epsilon, epsilon).any(axis=(1, 3))
    masses = boxes[nonempty]
    if weights is None:
        masses = masses.astype(np.int64)
    return BoxStats(n_total=boxes.size, n_nonempty=int(nonempty.sum()), masses=masses)


def spectrum_sums(masses, q_values, floor=1e-12):
    """Weighted sums sum(mu log p) and sum(mu log mu) for each q at one box size."""
    p = masses / masses.sum()
    p = np.maximum(p, floor)
    logp = np.log(p)
    q = np.asarray(q_values, dtype=np.float64)[:, None]
    # p^q normalised; done in log space to keep negative q stable
    logpq = q * logp[None, :]
    logpq -= logpq.max(axis=1, keepdims=True)
    pq = np.exp(logpq)
    mu = pq / pq.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        logmu = np.where(mu > 0, np.log(mu), 0.0)
    a_sum = (mu * logp[None, :]).sum(axis=1)
    f_sum = (mu * logmu).sum(axis=1)
    return a_sum, f_sum


def _slope(x, ys):
    xc = x - x.mean()
    return (ys - ys.mean(axis=1, keepdims=True)) @ xc / (xc @ xc)


def multifractal_descriptor(mask, config=None, weights=None):
    """[f(q_1)..f(q_K), alpha(q_1)..alpha(q_K)] of a candidate mask.

    Both are least-squares slopes, against log(box size), of
    sum(mu log mu) and sum(mu log p), where p is the box mass fraction and
    mu = p^q / sum(p^q).
    """
    config = config or MultifractalConfig()
    if weights is None and config.intensity_mass:
        raise ParameterError("intensity_mass requires a gray patch")
    sizes = (config.single_box_size,) if config.single_box_size else config.box_sizes
    largest = box_partition_stats(mask, sizes[-1], weights)
    if largest.n_nonempty < 2:
        raise DegenerateRegionError(
            f"region occupies {largest.n_nonempty} box at size {sizes[-1]}; need >= 2")
    a_rows, f_rows = [], []
    for eps in sizes:
        stats = largest if eps == sizes[-1] else box_partition_stats(mask, eps, weights)
        a_sum, f_sum = spectrum_sums(stats.masses.astype(np.float64), config.q_values,
                                     config.min_probability_floor)
        for q, a, f in zip(config.q_values, a_sum, f_sum):
            if not (np.isfinite(a) and np.isfinite(f)):
                raise NumericalError(f"non-finite spectrum sum at q={q}, box size {eps}")
        a_rows.append(a_sum)
        f_rows.append(f_sum)
    a_mat = np.array(a_rows).T  # (n_q, n_sizes)
    f_mat = np.array(f_rows).T
    if config.single_box_size:
        alpha, f = a_mat[:, 0], f_mat[:, 0]
    else:
        logeps = np.log(np.asarray(sizes, dtype=np.float64))
        alpha, f = _slope(logeps, a_mat), _slope(logeps, f_mat)
    return FeatureBlock(BlockKind.MULTIFRACTAL, np.concatenate([f, alpha]))


# ------------------------------------------------------------------ Fourier

def boundary_to_complex(chain):
    chain = np.asarray(chain)
    if chain.ndim != 2 or chain.shape[0] < 4:
        raise DegenerateRegionError(
            f"boundary needs at least 4 points, got {0 if chain.ndim != 2 else chain.shape[0]}")
    return chain[:, 0].astype(np.float64) + 1j * chain[:, 1].astype(np.float64)


def fourier_coefficients(s):
    """a(u) = (1/N) sum_k s(k) exp(-2 pi i u k / N)."""
    s = np.asarray(s, dtype=np.complex128)
    if s.size < 1:
        raise ParameterError("empty sequence")
    return np.fft.fft(s) / s.size


def frequency_order(n):
    """Indices 0..n-1 ordered DC, +1, -1, +2, -2, ... by signed frequency."""
    u = np.arange(n)
    signed = np.where(u <= n // 2, u, u - n)
    return u[np.lexsort((signed < 0, np.abs(signed)))]


def reconstruct_boundary(a, keep):
    """Inverse transform keeping only the ``keep`` lowest frequencies."""
    a = np.asarray(a, dtype=np.complex128)
    n = a.size
    if not 1 <= keep <= n:
        raise ParameterError(f"keep must be in [1, {n}], got {keep}")
    kept = np.zeros_like(a)
    idx = frequency_order(n)[:keep]
    kept[idx] = a[idx]
    return np.fft.ifft(kept) * n


def resample_closed(points, n):
    """Resample a closed polyline to ``n`` points evenly spaced in arc length."""
    pts = np.asarray(points, dtype=np.float64)
    closed = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise DegenerateRegionError("boundary has zero length")
    t = np.arange(n) * (total / n)
    x = np.interp(t, cum, closed[:, 0])
    y = np.interp(t, cum, closed[:, 1])
    return np.column_stack([x, y])


# Pre-smoothing width as a fraction of the chain length, and the outward
# shift from pixel centres to the region's edge.
CHAIN_SMOOTHING = 0.01
EDGE_OFFSET = 0.5


def _outward_normals(pts):
    x, y = pts[:, 0], pts[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    t = np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)
    nrm = np.column_stack([t[:, 1], -t[:, 0]])
    length = np.hypot(nrm[:, 0], nrm[:, 1])
    nrm = np.divide(nrm, length[:, None], out=np.zeros_like(nrm), where=length[:, None] > 0)
    return -nrm if area < 0 else nrm


def fourier_descriptor(chain, k=64, samples=256):
    """K normalised coefficient magnitudes of the resampled boundary.

    The contour is shifted to start at the origin, smoothed along the chain
    (Gaussian, sigma = 1% of its length) so staircase steps at different
    scales parametrise alike, resampled to ``samples`` points by arc length
    and pushed half a pixel outward from the pixel centres. It is then
    oriented so its dominant harmonic is u=+1; magnitudes are divided by
    |a(1)| and listed in frequency order -1, +2, -2, +3, ...
    """
    chain = np.asarray(chain)
    boundary_to_complex(chain)  # length check
    if not 1 <= k <= samples - 2:
        raise ParameterError(f"K must be in [1, {samples - 2}], got {k}")
    rel = (chain - chain[0]).astype(np.float64)  # exact shift: translation cancels bit for bit
    rel = ndimage.gaussian_filter1d(rel, CHAIN_SMOOTHING * len(rel), axis=0, mode="wrap")
    pts = resample_closed(rel, samples)
    pts = pts + EDGE_OFFSET * _outward_normals(pts)
    s = pts[:, 0] + 1j * pts[:, 1]
    a = fourier_coefficients(s)
    if abs(a[-1]) > abs(a[1]):
        # traversed clockwise in the complex plane: mirror u -> -u
        a = np.concatenate([a[:1], a[:0:-1]])
    scale = abs(a[1])
    if scale < 1e-9:
        raise DegenerateRegionError("first harmonic vanishes; boundary is degenerate")
    order = frequency_order(samples)[2:2 + k]
    return FeatureBlock(BlockKind.FOURIER, np.abs(a[order]) / scale)


# -------------------------------------------------------------------- Radon

@dataclass(frozen=True, eq=False)
class RadonMatrix:
    angles: tuple
    rho_offsets: np.ndarray
    values: np.ndarray  # (n_rho, n_angles)


def _trig(theta_deg):
    t = np.deg2rad(theta_deg)
    c, s = np.cos(t), np.sin(t)
    # snap so axis-aligned projections bin exactly
    c = 0.0 if abs(c) < 1e-12 else (np.sign(c) if abs(abs(c) - 1) < 1e-12 else c)
    s = 0.0 if abs(s) < 1e-12 else (np.sign(s) if abs(abs(s) - 1) < 1e-12 else s)
    return c, s


def radon_transform(mask, angles):
    """Shift-and-sum projection: each pixel adds unit mass to bin round(rho)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyRegionError("Radon transform of an empty mask")
    angles = tuple(float(a) for a in angles)
    if any(not 0 <= a < 180 for a in angles):
        raise ParameterError(f"angles must lie in [0, 180): {angles}")
    h, w = mask.shape
    rho_max = int(np.ceil(np.hypot(w, h) / 2))
    ys, xs = np.nonzero(mask)
    x = xs - (w - 1) / 2.0
    y = ys - (h - 1) / 2.0
    nbins = 2 * rho_max + 1
    values = np.zeros((nbins, len(angles)), dtype=np.int64)
    for j, theta in enumerate(angles):
        c, s = _trig(theta)
        rho = np.floor(x * c + y * s + 0.5).astype(np.int64)
        values[:, j] = np.bincount(rho + rho_max, minlength=nbins)
    return RadonMatrix(angles=angles, rho_offsets=np.arange(-rho_max, rho_max + 1),
                       values=values)


def _resample_column(col, bins):
    """Integrate the projection over ``bins`` equal slices of its support.

    Each original bin spreads its mass uniformly over [i - 0.5, i + 0.5];
    the slice masses come from the piecewise-linear cumulative sum.
    """
    nz = np.flatnonzero(col)
    lo, hi = nz[0] - 0.5, nz[-1] + 0.5
    edges = np.arange(col.size + 1) - 0.5
    cum = np.concatenate([[0.0], np.cumsum(col, dtype=np.float64)])
    return np.diff(np.interp(np.linspace(lo, hi, bins + 1), edges, cum))


def radon_profiles(mask, angle_step=30.0, bins=16):
    """Per-angle projections resampled to ``bins`` values, shape (bins, n_angles).

    Each projection is integrated over equal slices of its non-zero support,
    divided by its mass and symmetrised, (r + reversed r) / 2, so that
    rotating the shape by 180 degrees (which reverses every projection)
    changes nothing.
    """
    n_angles = 180.0 / angle_step
    if angle_step <= 0 or abs(n_angles - round(n_angles)) > 1e-9:
        raise ParameterError(f"180 must be divisible by the angle step {angle_step}")
    if bins < 4:
        raise ParameterError(f"need at least 4 bins, got {bins}")
    angles = [angle_step * i for i in range(int(round(n_angles)))]
    radon = radon_transform(mask, angles)
    cols = np.empty((bins, len(angles)))
    for j in range(len(angles)):
        r = _resample_column(radon.values[:, j], bins)
        r = r / r.sum()
        cols[:, j] = 0.5 * (r + r[::-1])
    return cols


def radon_descriptor(mask, angle_step=30.0, bins=16):
    """Radon profiles with each bin's values sorted across angles.

    Rotating the shape by a multiple of the angle step only permutes the
    profiles, which the per-bin sort (descending) undoes. Sorting values is
    continuous, unlike ordering whole profiles by a key. Layout is
    bin-major: ``bins`` groups of ``n_angles`` values.
    """
    cols = radon_profiles(mask, angle_step, bins)
    return FeatureBlock(BlockKind.RADON, -np.sort(-cols, axis=1).ravel())


# ---------------------------------------------------------------- assembly

def extract_all(candidate, config=None, label=None, gray=None):
    """Fused feature vector of a CandidateObject.

    ``gray`` is the source gray image, needed only for intensity mass.
    Block failures are re-raised as DescriptorError naming the block; the
    boundary-based Fourier block is evaluated first.
    """
    config = config or DescriptorConfig()
    weights = None
    if config.multifractal.intensity_mass:
        if gray is None:
            raise ParameterError("intensity mass needs the gray source image")
        x0, y0, w, h = candidate.bbox
        weights = gray[y0:y0 + h, x0:x0 + w].astype(np.float64)
    try:
        f = fourier_descriptor(candidate.boundary, config.fourier_k, config.fourier_samples)
    except (DegenerateRegionError, EmptyRegionError, NumericalError) as exc:
        raise DescriptorError("fourier", exc) from exc
    try:
        m = multifractal_descriptor(candidate.mask, config.multifractal, weights)
    except (DegenerateRegionError, EmptyRegionError, NumericalError) as exc:
        raise DescriptorError("multifractal", exc) from exc
    try:
        r = radon_descriptor(candidate.mask, config.radon_step, config.radon_bins)
    except (DegenerateRegionError, EmptyRegionError, NumericalError) as exc:
        raise DescriptorError("radon", exc) from exc
    return FeatureVector(blocks=(m, f, r), label=label)


def extract_from_mask(mask, config=None, label=None):
    """Convenience wrapper for a bare mask at origin (0, 0)."""
    from .imaging import CandidateObject

    mask = np.asarray(mask, dtype=bool)
    return extract_all(
        CandidateObject(mask=mask, origin=(0, 0), area=int(mask.sum()),
                        boundary=trace_boundary(mask)),
        config, label)


def block_slices(layout):
    """Map each block kind to its slice in the flattened vector."""
    out, start = {}, 0
    for kind, length in layout:
        out[BlockKind(kind)] = slice(start, start + length)
        start += length
    return out


def fused_distance(v1, v2, layout=None):
    """Sum of per-block Euclidean distances.

    Accepts FeatureVectors or flat arrays with an explicit ``layout``.
    """
    if isinstance(v1, FeatureVector) and isinstance(v2, FeatureVector):
        if v1.layout != v2.layout:
            raise ParameterError(f"block shapes differ: {v1.layout} vs {v2.layout}")
        return float(sum(np.linalg.norm(a.values - b.values)
                         for a, b in zip(v1.blocks, v2.blocks)))
    a = np.asarray(v1, dtype=np.float64)
    b = np.asarray(v2, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"vector shapes differ: {a.shape} vs {b.shape}")
    if layout is None:
        return float(np.linalg.norm(a - b))
    return float(sum(np.linalg.norm(a[sl] - b[sl]) for sl in block_slices(layout).values()))

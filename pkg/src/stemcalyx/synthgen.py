"""Seeded synthetic imagery: fractal oracles and a three-class fruit corpus.

Randomness comes from SplitMix64 (Steele, Lea & Flood 2014), used as a
counter-based generator so every stream is reproducible from its 64-bit
seed in any language:

    z  = seed + i * 0x9E3779B97F4A7C15           (i = 1, 2, ... ; mod 2^64)
    z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

Uniform doubles are ``(out >> 11) * 2^-53``; normals use Box-Muller on
consecutive uniform pairs (u1, u2) as ``sqrt(-2 ln(1 - u1)) cos(2 pi u2)``.
Per-scene seeds are ``derive_seed(corpus_seed, scene_index)``.
"""

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GenerationError, ParameterError
from .imaging import save_image
from .labels import LABEL_ORDER, ClassLabel

GENERATOR_VERSION = 1

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """Vectorised SplitMix64 stream."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next_u64(self, n):
        idx = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + idx * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK64
        return z

    def random(self, n=None):
        k = 1 if n is None else n
        u = (self.next_u64(k) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return float(u[0]) if n is None else u

    def uniform(self, lo, hi, n=None):
        u = self.random(n)
        return lo + (hi - lo) * u

    def normal(self, n):
        u = self.random(2 * n)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def seed(self):
        """A fresh 64-bit seed drawn from this stream."""
        return int(self.next_u64(1)[0])


def derive_seed(seed, index):
    """Seed for item ``index`` of a stream rooted at ``seed``."""
    rng = SplitMix64((int(seed) + int(index) * _GAMMA) & _MASK64)
    return rng.seed()


# ----------------------------------------------------------------- fractals

def gen_sierpinski(depth):
    """Sierpinski carpet of side 3**depth (8**depth object pixels)."""
    if not 1 <= depth <= 6:
        raise ParameterError(f"depth must be in [1, 6], got {depth}")
    m = np.ones((1, 1), dtype=bool)
    for _ in range(depth):
        z = np.zeros_like(m)
        m = np.block([[m, m, m], [m, z, m], [m, m, m]])
    return m


# ------------------------------------------------------------------- shapes

@dataclass(frozen=True)
class SynthSpec:
    label: ClassLabel
    scale: float = 1.0
    rotation: float = 0.0  # degrees, counterclockwise on screen
    jitter: float = 0.0  # 0..1, edge roughness and pixel noise
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.5 <= self.scale <= 2.0:
            raise ParameterError(f"scale must be in [0.5, 2.0], got {self.scale}")
        if not 0.0 <= self.jitter <= 1.0:
            raise ParameterError(f"jitter must be in [0, 1], got {self.jitter}")


# Base dimensions at scale 1, in pixels.
STEM_LENGTH = 100.0
STEM_ASPECT = 5.0
CALYX_RADIUS = 40.0
DEFECT_SEMI_AXIS = 44.0


def _shape_field(spec, u, v, rng):
    """Boolean membership of points (u, v) given in the shape's own frame."""
    s, j = spec.scale, spec.jitter
    if spec.label == ClassLabel.STEM:
        length = STEM_LENGTH * s
        radius = length / STEM_ASPECT / 2
        half = length / 2 - radius
        freq = rng.uniform(1.5, 3.5)
        phase = rng.uniform(0, 2 * np.pi)
        t = (np.clip(u, -half, half) + half) / (2 * half)
        r = radius * (1 + 0.25 * j * np.sin(2 * np.pi * freq * t + phase))
        return np.hypot(u - np.clip(u, -half, half), v) <= r
    theta = np.arctan2(v, u)
    if spec.label == ClassLabel.CALYX:
        outer = CALYX_RADIUS * s
        lobes = int(rng.uniform(4, 7))
        p_out, p_in = rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
        r_out = outer * (1 + 0.10 * j * np.sin(lobes * theta + p_out))
        r_in = 0.5 * outer * (1 + 0.10 * j * np.sin((lobes - 1) * theta + p_in))
        rho = np.hypot(u, v)
        return (rho <= r_out) & (rho >= r_in)
    if spec.label == ClassLabel.DEFECT:
        a = DEFECT_SEMI_AXIS * s
        b = a / rng.uniform(1.0, 1.6)
        n = rng.uniform(1.5, 2.5)
        k1, k2 = int(rng.uniform(2, 5)), int(rng.uniform(5, 9))
        p1, p2 = rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
        rough = 1 + 0.08 * j * (np.sin(k1 * theta + p1) + 0.5 * np.sin(k2 * theta + p2))
        level = (np.abs(u / a) ** n + np.abs(v / b) ** n) ** (1.0 / n)
        return level <= rough
    raise ParameterError(f"unknown class {spec.label!r}")


def gen_candidate_shape(spec):
    """Rasterise one candidate shape, cropped to its bounding box."""
    rng = SplitMix64(spec.rng_seed)
    reach = 0.6 * 2.0 * max(STEM_LENGTH, 2 * CALYX_RADIUS, 2 * DEFECT_SEMI_AXIS) * spec.scale / 2
    half = int(math.ceil(reach)) + 2
    ys, xs = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    phi = np.deg2rad(spec.rotation)
    # screen y points down, so a counterclockwise turn on screen is -phi here
    u = xs * np.cos(phi) - ys * np.sin(phi)
    v = xs * np.sin(phi) + ys * np.cos(phi)
    mask = _shape_field(spec, u, v, rng)
    area = int(mask.sum())
    if area < 20:
        raise GenerationError(f"shape area {area} < 20 pixels for {spec}")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return mask[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].copy()


# ------------------------------------------------------------------- scenes

BACKGROUND_LEVEL = 20.0
FRUIT_LEVEL = 180.0
FRUIT_RADIUS_FRACTION = 0.46
RIM_MARGIN = 6
NOISE_PER_JITTER = 1.0


@dataclass
class Scene:
    image: np.ndarray
    truth: list  # of (bool mask, ClassLabel)
    fruit: np.ndarray  # analytic fruit disk


def fruit_disk(image_size):
    c = (image_size - 1) / 2.0
    r = FRUIT_RADIUS_FRACTION * image_size
    ys, xs = np.mgrid[:image_size, :image_size]
    dist = np.hypot(xs - c, ys - c)
    return dist <= r, dist / r


def gen_apple_scene(specs, image_size=256, rng_seed=0, noise=None):
    """Fruit disk on dark background with one dark region per spec.

    ``noise`` overrides the pixel noise sigma (default: NOISE_PER_JITTER x the largest jitter).
    """
    rng = SplitMix64(rng_seed)
    disk, _ = fruit_disk(image_size)
    centre = (image_size - 1) / 2.0
    fruit_r = FRUIT_RADIUS_FRACTION * image_size
    img = np.where(disk, FRUIT_LEVEL, BACKGROUND_LEVEL)

    allowed = ndimage.binary_erosion(disk, iterations=RIM_MARGIN)
    occupied = np.zeros_like(disk)
    truth = []
    for spec in specs:
        shape = gen_candidate_shape(spec)
        sh, sw = shape.shape
        py, px = np.nonzero(shape)
        reach = np.hypot(px - (sw - 1) / 2, py - (sh - 1) / 2).max() + 1.5
        placed = None
        for _ in range(100):
            # offset of the shape's bbox centre from the fruit centre
            radius_room = fruit_r - RIM_MARGIN - reach
            if radius_room > 0:
                rad = radius_room * (0.7 + 0.3 * rng.random())
            else:
                rad = 0.0
            ang = rng.uniform(0, 2 * np.pi)
            cx = centre + rad * math.cos(ang)
            cy = centre + rad * math.sin(ang)
            x0 = int(round(cx - (sw - 1) / 2))
            y0 = int(round(cy - (sh - 1) / 2))
            if x0 < 0 or y0 < 0 or x0 + sw > image_size or y0 + sh > image_size:
                continue
            full = np.zeros_like(disk)
            full[y0:y0 + sh, x0:x0 + sw] = shape
            grown = ndimage.binary_dilation(full, iterations=2)
            if (full & ~allowed).any() or (grown & occupied).any():
                continue
            placed = full
            break
        if placed is None:
            raise GenerationError(f"could not place {spec.label.value} after 100 attempts")
        occupied |= placed
        core = rng.uniform(16.0, 24.0)
        depth = ndimage.distance_transform_edt(placed)
        level = core + 25.0 * (1.0 - np.clip((depth - 1.0) / 3.0, 0.0, 1.0))
        img = np.where(placed, level, img)
        truth.append((placed, spec.label))

    sigma = NOISE_PER_JITTER * max((s.jitter for s in specs), default=0.0) if noise is None else noise
    if sigma > 0:
        img = img + sigma * rng.normal(img.size).reshape(img.shape)
    image = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    return Scene(image=image, truth=truth, fruit=disk)


# ------------------------------------------------------------------- corpus

MANIFEST_COLUMNS = ("scene_id", "apple_id", "view_id", "label", "scale", "rotation",
                    "jitter", "shape_seed", "scene_seed", "image", "truth")


def corpus_specs(n_per_class, rng_seed):
    """Yield (scene_id, apple_id, view_id, spec, scene_seed) for a corpus."""
    for apple in range(n_per_class):
        for view, label in enumerate(LABEL_ORDER):
            index = apple * len(LABEL_ORDER) + view
            rng = SplitMix64(derive_seed(rng_seed, index))
            spec = SynthSpec(
                label=label,
                scale=round(rng.uniform(0.5, 2.0), 6),
                rotation=round(rng.uniform(0.0, 360.0), 6),
                jitter=round(rng.uniform(0.2, 1.0), 6),
                rng_seed=rng.seed(),
            )
            yield f"a{apple:04d}_{label.value}", apple, view, spec, rng.seed()


def gen_corpus(n_per_class, rng_seed, out_dir, image_size=256):
    """Write scenes, truth masks and ``manifest.csv``; return manifest rows."""
    if n_per_class < 4:
        raise ParameterError(f"n_per_class must be >= 4, got {n_per_class}")
    out = Path(out_dir)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    rows = []
    for scene_id, apple, view, spec, scene_seed in corpus_specs(n_per_class, rng_seed):
        scene = gen_apple_scene([spec], image_size, scene_seed)
        image_rel = f"scenes/{scene_id}.pgm"
        truth_rel = f"truth/{scene_id}.pgm"
        save_image(scene.image, out / image_rel)
        save_image(scene.truth[0][0], out / truth_rel)
        row = {"scene_id": scene_id, "apple_id": apple, "view_id": view,
               "label": spec.label.value, "scale": repr(spec.scale),
               "rotation": repr(spec.rotation), "jitter": repr(spec.jitter),
               "shape_seed": spec.rng_seed, "scene_seed": scene_seed,
               "image": image_rel, "truth": truth_rel}
        rows.append(row)
    with open(out / "manifest.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    with open(out / "corpus.txt", "w") as fh:
        fh.write(f"n_per_class={n_per_class}\nrng_seed={rng_seed}\n"
                 f"image_size={image_size}\ngenerator_version={GENERATOR_VERSION}\n")
    return rows


def read_manifest(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def spec_from_row(row):
    return SynthSpec(label=ClassLabel.parse(row["label"]), scale=float(row["scale"]),
                     rotation=float(row["rotation"]), jitter=float(row["jitter"]),
                     rng_seed=int(row["shape_seed"]))


def spec_dict(spec):
    d = asdict(spec)
    d["label"] = spec.label.value
    return d

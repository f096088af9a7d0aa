"""Image containers, PGM/PPM I/O and pixel-level primitives.

Images are plain numpy arrays: gray images are ``uint8`` (H, W), colour
images ``uint8`` (H, W, 3) and masks ``bool`` (H, W). Coordinates are
(x, y) with x the column and y the row, y pointing down.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import _backend
from .errors import EmptyRegionError, ImageFormatError, ParameterError

EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class CandidateObject:
    """One detected region.

    ``mask`` is cropped to the bounding box whose top-left corner sits at
    ``origin`` = (x, y) in the source image; ``boundary`` is an (N, 2) array
    of source-image (x, y) points.
    """

    mask: np.ndarray
    origin: tuple
    area: int
    boundary: np.ndarray

    @property
    def bbox(self):
        """(x0, y0, width, height)."""
        h, w = self.mask.shape
        return (self.origin[0], self.origin[1], w, h)

    def full_mask(self, shape):
        out = np.zeros(shape, dtype=bool)
        x0, y0 = self.origin
        h, w = self.mask.shape
        out[y0:y0 + h, x0:x0 + w] = self.mask
        return out


def _check_image(image):
    if image.ndim not in (2, 3) or image.shape[0] < 1 or image.shape[1] < 1:
        raise ParameterError(f"not an image: shape {image.shape}")
    if image.ndim == 3 and image.shape[2] != 3:
        raise ParameterError(f"colour images need 3 channels, got {image.shape[2]}")


# ---------------------------------------------------------------- file I/O

def _tokens(data, count, pos):
    """Read `count` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            break
        out.append(data[start:pos])
    return out, pos


def load_image(path):
    """Decode a PGM (P2/P5) or PPM (P3/P6) file with maxval 255."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5", b"P3", b"P6"):
        raise ImageFormatError("magic", f"unsupported magic number {magic!r}")
    header, pos = _tokens(data, 3, 2)
    names = ("width", "height", "maxval")
    if len(header) < 3:
        raise ImageFormatError(names[len(header)], "missing from header")
    values = []
    for name, tok in zip(names, header):
        try:
            values.append(int(tok))
        except ValueError:
            raise ImageFormatError(name, f"not an integer: {tok!r}") from None
    width, height, maxval = values
    if width < 1:
        raise ImageFormatError("width", f"must be >= 1, got {width}")
    if height < 1:
        raise ImageFormatError("height", f"must be >= 1, got {height}")
    if maxval != 255:
        raise ImageFormatError("maxval", f"only 255 is supported, got {maxval}")

    channels = 3 if magic in (b"P3", b"P6") else 1
    count = width * height * channels
    if magic in (b"P5", b"P6"):
        pos += 1  # single whitespace byte after maxval
        payload = data[pos:pos + count]
        if len(payload) < count:
            raise ImageFormatError("payload", f"expected {count} bytes, got {len(payload)}")
        pixels = np.frombuffer(payload, dtype=np.uint8).copy()
    else:
        toks, _ = _tokens(data, count, pos)
        if len(toks) < count:
            raise ImageFormatError("payload", f"expected {count} samples, got {len(toks)}")
        try:
            raw = np.array([int(t) for t in toks], dtype=np.int64)
        except ValueError:
            raise ImageFormatError("payload", "non-integer sample") from None
        if raw.min() < 0 or raw.max() > 255:
            raise ImageFormatError("payload", "sample outside [0, 255]")
        pixels = raw.astype(np.uint8)
    if channels == 3:
        return pixels.reshape(height, width, 3)
    return pixels.reshape(height, width)


def save_image(image, path):
    """Write a binary PGM (gray or mask) or PPM (colour) file."""
    image = np.asarray(image)
    _check_image(image)
    if image.dtype == bool:
        image = np.where(image, 255, 0).astype(np.uint8)
    if image.dtype != np.uint8:
        raise ParameterError(f"expected uint8 pixels, got {image.dtype}")
    h, w = image.shape[:2]
    magic = b"P6" if image.ndim == 3 else b"P5"
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(image).tobytes())


def load_mask(path):
    """Load a mask stored as a 0/255 PGM (any nonzero pixel is object)."""
    image = load_image(path)
    if image.ndim != 2:
        raise ImageFormatError("magic", "masks must be PGM files")
    return image > 0


# ------------------------------------------------------------ pixel filters

def to_grayscale(image):
    """Rec.601 luma, rounded half up."""
    _check_image(image)
    if image.ndim == 2:
        return image.copy()
    rgb = image.astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def median_filter(image, radius=1):
    """Square-window median with edge replication."""
    _check_image(image)
    if radius < 1:
        raise ParameterError(f"radius must be >= 1, got {radius}")
    size = 2 * radius + 1
    h, w = image.shape[:2]
    if size > h and size > w:
        raise ParameterError(f"{size}x{size} window exceeds the {w}x{h} image")
    if image.ndim == 3:
        return ndimage.median_filter(image, size=(size, size, 1), mode="nearest")
    return ndimage.median_filter(image, size=size, mode="nearest")


def sobel_magnitude(image):
    """3x3 Sobel gradient magnitude, clamped to 255, edge-replicated."""
    if image.ndim != 2:
        raise ParameterError("sobel_magnitude expects a gray image")
    h, w = image.shape
    if h < 3 or w < 3:
        raise ParameterError(f"image must be at least 3x3, got {w}x{h}")
    p = np.pad(image.astype(np.int64), 1, mode="edge")
    tl, tc, tr = p[:-2, :-2], p[:-2, 1:-1], p[:-2, 2:]
    ml, mr = p[1:-1, :-2], p[1:-1, 2:]
    bl, bc, br = p[2:, :-2], p[2:, 1:-1], p[2:, 2:]
    gx = (tr + 2 * mr + br) - (tl + 2 * ml + bl)
    gy = (bl + 2 * bc + br) - (tl + 2 * tc + tr)
    mag = np.floor(np.sqrt((gx * gx + gy * gy).astype(np.float64)) + 0.5)
    return np.minimum(mag, 255).astype(np.uint8)


# ------------------------------------------------------ regions and contours

def trace_boundary(mask, origin=(0, 0)):
    """Closed outer contour of an 8-connected region.

    Moore-neighbour tracing with Jacob's stopping criterion on a copy padded
    by one background pixel. The chain starts at the top-most, then
    left-most pixel and runs counterclockwise as seen on screen. A single
    pixel yields a one-point chain.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyRegionError("cannot trace the boundary of an empty mask")
    padded = np.pad(mask, 1).astype(np.uint8)
    chain = _backend.moore_trace(padded)
    return chain + np.array([origin[0] - 1, origin[1] - 1], dtype=np.int64)


def connected_components(mask, min_area=1):
    """8-connected components with at least ``min_area`` pixels.

    Sorted by descending area, ties broken by origin (row, then column).
    """
    mask = np.asarray(mask, dtype=bool)
    labels, count = ndimage.label(mask, structure=EIGHT)
    if count == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    found = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        area = int(areas[lab])
        if sl is None or area < min_area:
            continue
        crop = labels[sl] == lab
        origin = (sl[1].start, sl[0].start)
        found.append((-area, origin[1], origin[0], crop, origin, area))
    found.sort(key=lambda t: t[:3])
    return [
        CandidateObject(mask=crop, origin=origin, area=area,
                        boundary=trace_boundary(crop, origin))
        for _, _, _, crop, origin, area in found
    ]

"""Deterministic raster kernel: polygon fill, RLE codec, morphology, exact EDT, IoU.

Masks are boolean numpy arrays of shape ``(height, width)``, row-major. Pixel
``(r, c)`` covers the unit square whose center is ``(x, y) = (c + 0.5, r + 0.5)``;
all distances are Euclidean between pixel centers, in pixel units.

Fill convention
---------------
A pixel is foreground iff its center lies inside the polygon under the
even-odd (crossing parity) rule, counting edge crossings of the horizontal
ray towards +x with half-open vertical edge spans ``[ymin, ymax)`` and a
strict ``x_center < x_crossing`` comparison. Centers exactly on a top or
left edge are inside, on a bottom or right edge outside, so abutting
polygons tile the grid without overlap.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import GeometryError, SchemaError
from .shapes import Polygons, RleMask

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


# Sentinel for "no source in this row"; BIG**2 must stay well inside int64.
_BIG = np.int64(1) << 20
_INF_SQ = _BIG * _BIG


class Box(NamedTuple):
    """Axis-aligned box in continuous pixel units, origin top-left."""

    x: float
    y: float
    w: float
    h: float


# ---------------------------------------------------------------------------
# polygon rasterization


def _ring_points(ring) -> np.ndarray:
    """Normalize a ring (flat list or (k, 2) array) to a float (k, 2) array."""
    pts = np.asarray(ring, dtype=np.float64)
    if pts.ndim == 1:
        if pts.size % 2 != 0:
            raise GeometryError(f"ring has odd coordinate count {pts.size}")
        pts = pts.reshape(-1, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError(f"ring has invalid shape {pts.shape}")
    return pts


def _gather_edges(poly) -> np.ndarray:
    """Closed edge list (x1, y1, x2, y2) over all rings; degenerate rings raise."""
    rings = poly.rings if isinstance(poly, Polygons) else poly
    edges = []
    for ring in rings:
        pts = _ring_points(ring)
        if len(pts) < 3:
            raise GeometryError(f"degenerate ring with {len(pts)} vertices")
        closed = np.concatenate([pts, pts[:1]])
        edges.append(np.concatenate([closed[:-1], closed[1:]], axis=1))
    if not edges:
        raise GeometryError("polygon has no rings")
    return np.concatenate(edges)


def rasterize(poly, width: int, height: int) -> np.ndarray:
    """Rasterize polygon rings to a boolean mask under the module fill convention.

    Multiple rings are combined by crossing parity over all edges (even-odd),
    so disjoint rings union and nested rings punch holes.

    Args:
        poly: ``Polygons`` or a sequence of rings (flat lists or (k, 2) arrays).
        width, height: grid dimensions in pixels.

    Raises:
        GeometryError: a ring has fewer than 3 vertices, or dims are invalid.
    """
    if width < 1 or height < 1:
        raise GeometryError(f"invalid grid {width}x{height}")
    edges = _gather_edges(poly)
    mask = np.zeros((height, width), dtype=bool)

    x1, y1, x2, y2 = edges.T
    keep = y1 != y2  # horizontal edges never cross a scanline
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]
    if x1.size == 0:
        return mask
    ylo = np.minimum(y1, y2)
    yhi = np.maximum(y1, y2)
    slope = (x2 - x1) / (y2 - y1)

    # rows whose center y = r + 0.5 can fall inside some edge span
    r_lo = max(0, math.ceil(ylo.min() - 0.5))
    r_hi = min(height - 1, math.ceil(yhi.max() - 0.5) - 1)
    for r in range(r_lo, r_hi + 1):
        py = r + 0.5
        sel = (ylo <= py) & (py < yhi)
        if not sel.any():
            continue
        xs = x1[sel] + (py - y1[sel]) * slope[sel]
        xs.sort()
        # crossing parity makes [xs[2i], xs[2i+1]) the disjoint inside runs
        for a, b in zip(xs[0::2], xs[1::2]):
            c0 = max(0, math.ceil(a - 0.5))
            c1 = min(width - 1, math.ceil(b - 0.5) - 1)
            if c0 <= c1:
                mask[r, c0 : c1 + 1] = True
    return mask


# ---------------------------------------------------------------------------
# run-length codec (column-major, first run background)


def decode_rle(rle: RleMask) -> np.ndarray:
    """Decode a column-major RLE into a boolean ``(height, width)`` mask."""
    counts = np.asarray(rle.counts, dtype=np.int64)
    if counts.size and counts.min() < 0:
        raise SchemaError("RLE counts must be non-negative")
    total = int(counts.sum())
    if total != rle.height * rle.width:
        raise SchemaError(
            f"RLE counts sum {total} != {rle.height}x{rle.width} grid"
        )
    values = np.arange(counts.size, dtype=np.int64) % 2 == 1
    flat = np.repeat(values, counts)
    return flat.reshape((rle.width, rle.height)).T


def encode_rle(mask: np.ndarray) -> RleMask:
    """Encode a boolean mask as column-major RLE; inverse of :func:`decode_rle`."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    flat = mask.T.ravel()
    if flat.size == 0:
        raise GeometryError("cannot encode empty grid")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(counts=tuple(int(c) for c in counts), height=h, width=w)


def mask_of(shape, width: int, height: int) -> np.ndarray:
    """Rasterize either shape encoding onto a ``width`` x ``height`` grid."""
    if isinstance(shape, RleMask):
        m = decode_rle(shape)
        if m.shape != (height, width):
            raise GeometryError(
                f"RLE grid {m.shape} does not match image {height}x{width}"
            )
        return m
    return rasterize(shape, width, height)


# ---------------------------------------------------------------------------
# morphology


_FOOTPRINTS = ("cross", "square")


def erode(mask: np.ndarray, footprint: str = "cross") -> np.ndarray:
    """Binary erosion; pixels outside the grid count as background.

    ``cross`` uses the 4-connected structuring element, ``square`` the full
    3x3 neighborhood.
    """
    if footprint not in _FOOTPRINTS:
        raise ValueError(f"footprint must be one of {_FOOTPRINTS}")
    mask = np.asarray(mask, dtype=bool)
    p = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=bool)
    p[1:-1, 1:-1] = mask
    out = p[1:-1, 1:-1] & p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    if footprint == "square":
        out &= p[:-2, :-2] & p[:-2, 2:] & p[2:, :-2] & p[2:, 2:]
    return out


def contour(mask: np.ndarray, footprint: str = "cross") -> np.ndarray:
    """Boundary pixels: the foreground removed by one erosion."""
    mask = np.asarray(mask, dtype=bool)
    return mask & ~erode(mask, footprint)


# ---------------------------------------------------------------------------
# exact Euclidean distance transform


def _row_distances(source: np.ndarray) -> np.ndarray:
    """Per pixel, column distance to the nearest source pixel in its own row.

    Returns int64 with the ``_BIG`` sentinel where the row has no source.
    """
    h, w = source.shape
    cols = np.arange(w, dtype=np.int64)[None, :]
    left = np.where(source, cols, -_BIG)
    np.maximum.accumulate(left, axis=1, out=left)
    d = cols - left
    right = np.where(source, cols, 3 * _BIG)
    right = np.minimum.accumulate(right[:, ::-1], axis=1)[:, ::-1]
    np.minimum(d, right - cols, out=d)
    np.minimum(d, _BIG, out=d)
    return d


@njit(cache=True)
def _envelope_columns(h):  # pragma: no cover - exercised via edt_squared
    """Per column, lower envelope of the parabolas (r - q)^2 + h[q, c].

    Entries >= _INF_SQ mark absent parabolas. Integer arithmetic throughout;
    floats appear only in the envelope crossing abscissae, whose rounding
    cannot flip the integer minima.
    """
    n, m = h.shape
    out = np.empty((n, m), np.int64)
    v = np.empty(n, np.int64)
    z = np.empty(n + 1, np.float64)
    inf_sq = np.int64(1099511627776)  # _BIG ** 2
    for c in range(m):
        k = -1
        for q in range(n):
            hq = h[q, c]
            if hq >= inf_sq:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
                continue
            p = v[k]
            s = (hq + q * q - (h[p, c] + p * p)) / (2.0 * (q - p))
            while s <= z[k]:
                k -= 1
                p = v[k]
                s = (hq + q * q - (h[p, c] + p * p)) / (2.0 * (q - p))
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        if k < 0:
            for r in range(n):
                out[r, c] = inf_sq
            continue
        j = 0
        for r in range(n):
            while z[j + 1] < r:
                j += 1
            p = v[j]
            out[r, c] = (r - p) * (r - p) + h[p, c]
    return out


def edt_squared(source: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest source pixel center.

    Two separable passes: per-row nearest-source column distances, then a
    per-column lower envelope over parabolas. Exact in int64; linear in the
    pixel count per dimension.

    Raises:
        GeometryError: the source set is empty (distance undefined).
    """
    source = np.asarray(source, dtype=bool)
    if not source.any():
        raise GeometryError("distance transform of an empty source set")
    g = _row_distances(source)
    return _envelope_columns(g * g)


def edt(source: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance transform, in pixels (float64)."""
    return np.sqrt(edt_squared(source).astype(np.float64))


# ---------------------------------------------------------------------------
# overlap measures and bounds


def box_iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes; 0 when the union is empty."""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    inter = max(0.0, iw) * max(0.0, ih)
    union = aw * ah + bw * bh - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def box_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise box IoU for (n, 4) and (m, 4) arrays of (x, y, w, h) rows."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax0, ay0 = a[:, 0], a[:, 1]
    ax1, ay1 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx0, by0 = b[:, 0], b[:, 1]
    bx1, by1 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.minimum(ax1[:, None], bx1[None, :]) - np.maximum(ax0[:, None], bx0[None, :])
    ih = np.minimum(ay1[:, None], by1[None, :]) - np.maximum(ay0[:, None], by0[None, :])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Foreground IoU of two same-grid boolean masks."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise GeometryError(f"mask grids differ: {a.shape} vs {b.shape}")
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 0.0
    return inter / union


def bbox_of_mask(mask: np.ndarray) -> Box:
    """Tight bounds of a mask's foreground; pixel (r, c) occupies (c, r, 1, 1)."""
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise GeometryError("bounding box of an empty mask")
    cols = np.flatnonzero(mask.any(axis=0))
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    return Box(float(c0), float(r0), float(c1 - c0 + 1), float(r1 - r0 + 1))


def bbox_of_polygon(poly) -> Box:
    """Tight axis-aligned bounds of polygon vertices, in continuous units."""
    if isinstance(poly, Polygons):
        pts = poly.all_points()
    else:
        parts = [_ring_points(r) for r in poly]
        pts = np.concatenate(parts) if parts else np.empty((0, 2))
    if pts.size == 0:
        raise GeometryError("bounding box of an empty polygon")
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return Box(float(x0), float(y0), float(x1 - x0), float(y1 - y0))

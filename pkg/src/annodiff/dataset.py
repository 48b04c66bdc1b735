"""COCO-format annotation corpus: strict parsing, indexing, validation, views.

Parsing is structural and strict: required fields, types, id uniqueness and
reference integrity are enforced (``SchemaError`` / ``IntegrityError``),
while geometric defects (degenerate polygons, out-of-bounds boxes, stale
areas) are reported by :func:`validate` as data, not failures. Unknown JSON
fields are preserved on every record and at the top level so files round-trip.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, BinaryIO

import numpy as np

from .errors import GeometryError, IntegrityError, ParseError, SchemaError
from .raster import mask_of
from .shapes import Polygons, RleMask, ShapeSpec

_IMAGE_FIELDS = {"id", "width", "height", "file_name"}
_CATEGORY_FIELDS = {"id", "name", "supercategory"}
_ANNOTATION_FIELDS = {"id", "image_id", "category_id", "segmentation", "area", "bbox", "iscrowd"}


@dataclass(frozen=True)
class ImageRecord:
    id: int
    width: int
    height: int
    file_name: str
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CategoryRecord:
    id: int
    name: str
    supercategory: str | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class InstanceRecord:
    id: int
    image_id: int
    category_id: int
    segmentation: ShapeSpec
    bbox: tuple[float, float, float, float]
    area: float
    iscrowd: bool
    extra: dict = field(default_factory=dict)


@dataclass
class AnnotationDataset:
    """Parsed corpus with an image-id -> instance-ids index.

    Ids are unique per namespace and every instance reference resolves;
    violations raise ``IntegrityError`` at construction time.
    """

    images: tuple[ImageRecord, ...]
    categories: tuple[CategoryRecord, ...]
    instances: tuple[InstanceRecord, ...]
    extra: dict = field(default_factory=dict)
    index: dict[int, tuple[int, ...]] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        self._images_by_id = _unique_by_id(self.images, "image")
        self._categories_by_id = _unique_by_id(self.categories, "category")
        self._instances_by_id = _unique_by_id(self.instances, "annotation")
        per_image: dict[int, list[int]] = {img.id: [] for img in self.images}
        for inst in self.instances:
            if inst.image_id not in self._images_by_id:
                raise IntegrityError(f"annotation {inst.id} -> image {inst.image_id}")
            if inst.category_id not in self._categories_by_id:
                raise IntegrityError(f"annotation {inst.id} -> category {inst.category_id}")
            per_image[inst.image_id].append(inst.id)
        self.index = {k: tuple(sorted(v)) for k, v in per_image.items()}

    def image(self, image_id: int) -> ImageRecord:
        return self._images_by_id[image_id]

    def category(self, category_id: int) -> CategoryRecord:
        return self._categories_by_id[category_id]

    def instance(self, instance_id: int) -> InstanceRecord:
        return self._instances_by_id[instance_id]

    def instances_in(self, image_id: int) -> tuple[InstanceRecord, ...]:
        return tuple(self._instances_by_id[i] for i in self.index.get(image_id, ()))


def _unique_by_id(records, what: str) -> dict:
    by_id = {}
    for rec in records:
        if rec.id in by_id:
            raise IntegrityError(f"duplicate {what} id {rec.id}")
        by_id[rec.id] = rec
    return by_id


# ---------------------------------------------------------------------------
# parsing


def _finite(value, what: str, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{what} field '{name}' must be a number")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(f"{what} field '{name}' must be finite")
    return value


def _integer(value, what: str, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{what} field '{name}' must be an integer")
    return value


def _required(obj: dict, name: str, what: str):
    if name not in obj:
        raise SchemaError(f"{what} missing required field '{name}'")
    return obj[name]


def _parse_image(obj, pos: int) -> ImageRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"image at position {pos} is not an object")
    what = f"image {obj['id']}" if "id" in obj else f"image at position {pos}"
    rec_id = _integer(_required(obj, "id", what), what, "id")
    width = _integer(_required(obj, "width", what), what, "width")
    height = _integer(_required(obj, "height", what), what, "height")
    if width < 1 or height < 1:
        raise SchemaError(f"{what} has non-positive dimensions {width}x{height}")
    file_name = _required(obj, "file_name", what)
    if not isinstance(file_name, str):
        raise SchemaError(f"{what} field 'file_name' must be a string")
    extra = {k: v for k, v in obj.items() if k not in _IMAGE_FIELDS}
    return ImageRecord(rec_id, width, height, file_name, extra)


def _parse_category(obj, pos: int) -> CategoryRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"category at position {pos} is not an object")
    what = f"category {obj['id']}" if "id" in obj else f"category at position {pos}"
    rec_id = _integer(_required(obj, "id", what), what, "id")
    name = _required(obj, "name", what)
    if not isinstance(name, str) or not name:
        raise SchemaError(f"{what} field 'name' must be a non-empty string")
    supercategory = obj.get("supercategory")
    if supercategory is not None and not isinstance(supercategory, str):
        raise SchemaError(f"{what} field 'supercategory' must be a string")
    extra = {k: v for k, v in obj.items() if k not in _CATEGORY_FIELDS}
    return CategoryRecord(rec_id, name, supercategory, extra)


def _parse_segmentation(seg, what: str) -> ShapeSpec:
    if isinstance(seg, dict):
        counts = _required(seg, "counts", what)
        size = _required(seg, "size", what)
        if not isinstance(counts, list):
            raise SchemaError(
                f"{what} has non-list RLE counts (compressed RLE is not supported)"
            )
        counts = tuple(_integer(c, what, "counts") for c in counts)
        if any(c < 0 for c in counts):
            raise SchemaError(f"{what} has negative RLE counts")
        if not isinstance(size, list) or len(size) != 2:
            raise SchemaError(f"{what} field 'size' must be [height, width]")
        h = _integer(size[0], what, "size")
        w = _integer(size[1], what, "size")
        if sum(counts) != h * w:
            raise SchemaError(f"{what} RLE counts sum {sum(counts)} != {h}x{w} grid")
        return RleMask(counts, h, w)
    if isinstance(seg, list):
        rings = []
        for ring in seg:
            if not isinstance(ring, list):
                raise SchemaError(f"{what} polygon ring must be a coordinate list")
            if len(ring) % 2 != 0:
                raise SchemaError(f"{what} polygon ring has odd coordinate count {len(ring)}")
            rings.append(tuple(_finite(v, what, "segmentation") for v in ring))
        return Polygons(tuple(rings))
    raise SchemaError(f"{what} field 'segmentation' must be polygons or RLE")


def _parse_annotation(obj, pos: int) -> InstanceRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"annotation at position {pos} is not an object")
    what = f"annotation {obj['id']}" if "id" in obj else f"annotation at position {pos}"
    rec_id = _integer(_required(obj, "id", what), what, "id")
    image_id = _integer(_required(obj, "image_id", what), what, "image_id")
    category_id = _integer(_required(obj, "category_id", what), what, "category_id")
    bbox = _required(obj, "bbox", what)
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise SchemaError(f"{what} field 'bbox' must be [x, y, w, h]")
    bbox = tuple(_finite(v, what, "bbox") for v in bbox)
    area = _finite(_required(obj, "area", what), what, "area")
    iscrowd = _required(obj, "iscrowd", what)
    if iscrowd not in (0, 1, True, False):
        raise SchemaError(f"{what} field 'iscrowd' must be 0 or 1")
    segmentation = _parse_segmentation(_required(obj, "segmentation", what), what)
    extra = {k: v for k, v in obj.items() if k not in _ANNOTATION_FIELDS}
    return InstanceRecord(
        rec_id, image_id, category_id, segmentation, bbox, area, bool(iscrowd), extra
    )


def parse_dataset(raw: bytes | str | BinaryIO) -> AnnotationDataset:
    """Parse COCO-format JSON bytes into an indexed, immutable dataset.

    The parse is order-independent: records are canonicalized by id, so any
    permutation of the same records yields an equal dataset.

    Raises:
        ParseError: not UTF-8 or not JSON (carries the byte offset).
        SchemaError: a record is missing a field or has a malformed one.
        IntegrityError: duplicate ids or dangling image/category references.
    """
    if hasattr(raw, "read"):
        raw = raw.read()
    if isinstance(raw, (bytes, bytearray)):
        try:
            text = bytes(raw).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"not UTF-8 at byte {e.start}", e.start) from None
    else:
        text = raw
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        offset = len(text[: e.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON at byte {offset}: {e.msg}", offset) from None

    if not isinstance(doc, dict):
        raise SchemaError("top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise SchemaError(f"missing top-level key '{key}'")
        if not isinstance(doc[key], list):
            raise SchemaError(f"top-level key '{key}' must be a list")

    images = sorted(
        (_parse_image(o, i) for i, o in enumerate(doc["images"])), key=lambda r: r.id
    )
    categories = sorted(
        (_parse_category(o, i) for i, o in enumerate(doc["categories"])), key=lambda r: r.id
    )
    instances = sorted(
        (_parse_annotation(o, i) for i, o in enumerate(doc["annotations"])), key=lambda r: r.id
    )
    extra = {k: v for k, v in doc.items() if k not in ("images", "annotations", "categories")}
    return AnnotationDataset(tuple(images), tuple(categories), tuple(instances), extra)


def load_dataset(path) -> AnnotationDataset:
    """Read and parse a COCO JSON file."""
    with open(path, "rb") as f:
        return parse_dataset(f)


# ---------------------------------------------------------------------------
# serialization


def to_coco(ds: AnnotationDataset) -> dict:
    """Rebuild the COCO-format dict, unknown fields included."""

    def seg_json(seg: ShapeSpec):
        if isinstance(seg, RleMask):
            return {"counts": list(seg.counts), "size": [seg.height, seg.width]}
        return [list(r) for r in seg.rings]

    return {
        **ds.extra,
        "images": [
            {"id": r.id, "width": r.width, "height": r.height, "file_name": r.file_name, **r.extra}
            for r in ds.images
        ],
        "annotations": [
            {
                "id": r.id,
                "image_id": r.image_id,
                "category_id": r.category_id,
                "segmentation": seg_json(r.segmentation),
                "area": r.area,
                "bbox": list(r.bbox),
                "iscrowd": int(r.iscrowd),
                **r.extra,
            }
            for r in ds.instances
        ],
        "categories": [
            {
                "id": r.id,
                "name": r.name,
                **({"supercategory": r.supercategory} if r.supercategory is not None else {}),
                **r.extra,
            }
            for r in ds.categories
        ],
    }


def serialize(ds: AnnotationDataset) -> bytes:
    """Canonical JSON bytes; ``parse_dataset(serialize(ds)) == ds``."""
    return json.dumps(to_coco(ds), sort_keys=True, separators=(",", ":")).encode("utf-8")


# ---------------------------------------------------------------------------
# views


def single_polygon_view(ds: AnnotationDataset) -> list[InstanceRecord]:
    """Instances eligible for shape matching: non-crowd, exactly one ring."""
    return [
        inst
        for inst in ds.instances
        if not inst.iscrowd
        and isinstance(inst.segmentation, Polygons)
        and inst.segmentation.ring_count == 1
    ]


# ---------------------------------------------------------------------------
# validation


class IssueCode(Enum):
    DEGENERATE_POLYGON = "degenerate_polygon"
    BBOX_OUT_OF_BOUNDS = "bbox_out_of_bounds"
    ZERO_EXTENT_BBOX = "zero_extent_bbox"
    AREA_MISMATCH = "area_mismatch"
    NEGATIVE_AREA = "negative_area"
    BAD_COORDINATE = "bad_coordinate"
    ENCODING_MISMATCH = "encoding_mismatch"
    RLE_GRID_MISMATCH = "rle_grid_mismatch"
    DUPLICATE_ID = "duplicate_id"


@dataclass(frozen=True)
class Issue:
    code: IssueCode
    message: str
    instance_id: int | None = None


def _shape_issues(inst: InstanceRecord, image: ImageRecord) -> list[Issue]:
    issues = []
    seg = inst.segmentation
    if isinstance(seg, Polygons):
        if inst.iscrowd:
            issues.append(
                Issue(IssueCode.ENCODING_MISMATCH, f"crowd annotation {inst.id} uses polygons", inst.id)
            )
        if seg.ring_count == 0:
            issues.append(
                Issue(IssueCode.DEGENERATE_POLYGON, f"annotation {inst.id} has no rings", inst.id)
            )
        for ring in seg.rings:
            if len(ring) < 6:
                issues.append(
                    Issue(
                        IssueCode.DEGENERATE_POLYGON,
                        f"annotation {inst.id} has a ring with {len(ring) // 2} vertices",
                        inst.id,
                    )
                )
        if any(v < 0 for ring in seg.rings for v in ring):
            issues.append(
                Issue(IssueCode.BAD_COORDINATE, f"annotation {inst.id} has negative coordinates", inst.id)
            )
    else:
        if not inst.iscrowd:
            issues.append(
                Issue(IssueCode.ENCODING_MISMATCH, f"non-crowd annotation {inst.id} uses RLE", inst.id)
            )
        if (seg.height, seg.width) != (image.height, image.width):
            issues.append(
                Issue(
                    IssueCode.RLE_GRID_MISMATCH,
                    f"annotation {inst.id} RLE grid {seg.height}x{seg.width} "
                    f"!= image {image.height}x{image.width}",
                    inst.id,
                )
            )
    return issues


def _rasterized_area(inst: InstanceRecord, image: ImageRecord) -> int | None:
    seg = inst.segmentation
    if isinstance(seg, RleMask) and (seg.height, seg.width) != (image.height, image.width):
        return None
    if isinstance(seg, Polygons) and (
        seg.ring_count == 0 or any(len(r) < 6 for r in seg.rings)
    ):
        return None
    try:
        return int(np.count_nonzero(mask_of(seg, image.width, image.height)))
    except GeometryError:
        return None


def validate(ds: AnnotationDataset, *, area_tolerance: float | None = 0.1) -> list[Issue]:
    """Report geometric and consistency defects without mutating the dataset.

    ``area_tolerance`` compares the stored area against the rasterized pixel
    count (relative to the latter); pass ``None`` to skip rasterization.
    """
    issues: list[Issue] = []
    for what, records in (("image", ds.images), ("category", ds.categories), ("annotation", ds.instances)):
        seen = set()
        for rec in records:
            if rec.id in seen:
                issues.append(Issue(IssueCode.DUPLICATE_ID, f"duplicate {what} id {rec.id}"))
            seen.add(rec.id)

    for inst in ds.instances:
        image = ds.image(inst.image_id)
        issues.extend(_shape_issues(inst, image))

        x, y, w, h = inst.bbox
        if w < 0 or h < 0 or x < 0 or y < 0 or x + w > image.width or y + h > image.height:
            issues.append(
                Issue(
                    IssueCode.BBOX_OUT_OF_BOUNDS,
                    f"annotation {inst.id} bbox {inst.bbox} outside {image.width}x{image.height}",
                    inst.id,
                )
            )
        elif w == 0 or h == 0:
            issues.append(
                Issue(IssueCode.ZERO_EXTENT_BBOX, f"annotation {inst.id} bbox has zero extent", inst.id)
            )

        if inst.area < 0:
            issues.append(
                Issue(IssueCode.NEGATIVE_AREA, f"annotation {inst.id} area {inst.area} < 0", inst.id)
            )
        elif area_tolerance is not None:
            pixels = _rasterized_area(inst, image)
            if pixels is not None and abs(inst.area - pixels) > area_tolerance * max(pixels, 1):
                issues.append(
                    Issue(
                        IssueCode.AREA_MISMATCH,
                        f"annotation {inst.id} stored area {inst.area} vs rasterized {pixels}",
                        inst.id,
                    )
                )
    return issues

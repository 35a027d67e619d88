"""External file formats: detection files, ground-truth files, configs.

Everything on disk is JSON with a ``schema_version`` field (currently 1).
One file covers one video sequence. Writers go through a
write-to-temp-then-rename so a failed write never leaves a partial file
behind. Loaders establish every invariant of the core types and report
violations with the offending frame id and index.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from .core import (
    BoundingBox,
    CornerCovariance,
    Detection,
    Frame,
    GroundTruthObject,
    LabelVector,
    Pixel,
    ProbabilisticBox,
    box_pixel_bounds,
)
from .heuristics import PipelineConfig
from .merge import MergeConfig

SCHEMA_VERSION = 1

PathLike = Union[str, Path]


class SchemaError(ValueError):
    """A structured load/validation error naming where the problem is."""

    def __init__(
        self,
        message: str,
        *,
        path: Optional[PathLike] = None,
        frame_id: Optional[int] = None,
        index: Optional[int] = None,
        field: Optional[str] = None,
    ) -> None:
        self.path = str(path) if path is not None else None
        self.frame_id = frame_id
        self.index = index
        self.field = field
        super().__init__(message)

    def to_dict(self) -> Dict[str, object]:
        return {
            "error": str(self),
            "path": self.path,
            "frame_id": self.frame_id,
            "index": self.index,
            "field": self.field,
        }

    def __str__(self) -> str:
        ctx = []
        if self.path is not None:
            ctx.append(f"file {self.path}")
        if self.frame_id is not None:
            ctx.append(f"frame {self.frame_id}")
        if self.index is not None:
            ctx.append(f"entry {self.index}")
        if self.field is not None:
            ctx.append(f"field {self.field}")
        where = " (" + ", ".join(ctx) + ")" if ctx else ""
        return super().__str__() + where


@dataclass(frozen=True)
class DetectionSequence:
    """Frames of one sequence holding detections only."""

    num_classes: int
    frames: Tuple[Frame, ...]


@dataclass(frozen=True)
class GroundTruthSequence:
    """Frames of one sequence holding ground truths only."""

    num_classes: int
    frames: Tuple[Frame, ...]
    class_names: Optional[Tuple[str, ...]] = None


# ---------------------------------------------------------------------------
# Run-length encoding of masks
# ---------------------------------------------------------------------------

def encode_rle(pixels: FrozenSet[Pixel]) -> Dict[str, object]:
    """Encode a pixel set as row-major runs over its bounding rectangle.

    ``counts`` alternates runs of absent and present pixels, starting
    with absent.
    """
    if not pixels:
        raise ValueError("cannot RLE-encode an empty pixel set")
    xs = [p[0] for p in pixels]
    ys = [p[1] for p in pixels]
    x0, y0 = min(xs), min(ys)
    width = max(xs) - x0 + 1
    height = max(ys) - y0 + 1
    member = set(pixels)
    counts: List[int] = []
    current = 0  # run value: 0 = absent, 1 = present
    run = 0
    for j in range(y0, y0 + height):
        for i in range(x0, x0 + width):
            value = 1 if (i, j) in member else 0
            if value == current:
                run += 1
            else:
                counts.append(run)
                current = value
                run = 1
    counts.append(run)
    return {"x0": x0, "y0": y0, "width": width, "height": height, "counts": counts}


def decode_rle(rle: Dict[str, object]) -> FrozenSet[Pixel]:
    """Decode ``encode_rle`` output back into a pixel set."""
    x0, y0 = int(rle["x0"]), int(rle["y0"])
    width, height = int(rle["width"]), int(rle["height"])
    counts = list(rle["counts"])
    if width <= 0 or height <= 0:
        raise ValueError("RLE dimensions must be positive")
    if sum(counts) != width * height:
        raise ValueError(
            f"RLE counts sum to {sum(counts)}, expected {width * height}"
        )
    pixels = set()
    pos = 0
    value = 0
    for run in counts:
        if run < 0:
            raise ValueError("RLE counts must be non-negative")
        if value == 1:
            for p in range(pos, pos + run):
                pixels.add((x0 + p % width, y0 + p // width))
        pos += run
        value = 1 - value
    return frozenset(pixels)


# ---------------------------------------------------------------------------
# Low-level JSON helpers
# ---------------------------------------------------------------------------

def atomic_write_text(path: PathLike, text: str) -> None:
    """Write a file via a temporary sibling and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def dump_json(payload: object) -> str:
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def read_json(path: PathLike) -> object:
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise SchemaError("file not found", path=path)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", path=path)


def _require(doc: dict, key: str, path: PathLike, frame_id=None, index=None):
    if key not in doc:
        raise SchemaError(f"missing required field '{key}'", path=path,
                          frame_id=frame_id, index=index, field=key)
    return doc[key]


def _check_schema_version(doc: dict, path: PathLike) -> None:
    version = _require(doc, "schema_version", path)
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}",
            path=path, field="schema_version",
        )


def _parse_bbox(raw, *, path, frame_id, index, image_w, image_h) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise SchemaError("bbox must be [x1, y1, x2, y2]", path=path,
                          frame_id=frame_id, index=index, field="bbox")
    try:
        x1, y1, x2, y2 = (float(v) for v in raw)
    except (TypeError, ValueError):
        raise SchemaError("bbox entries must be numbers", path=path,
                          frame_id=frame_id, index=index, field="bbox")
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        raise SchemaError("bbox coordinates must be finite", path=path,
                          frame_id=frame_id, index=index, field="bbox")
    if x1 > x2:
        warnings.warn(f"frame {frame_id} entry {index}: bbox x1 > x2, swapping")
        x1, x2 = x2, x1
    if y1 > y2:
        warnings.warn(f"frame {frame_id} entry {index}: bbox y1 > y2, swapping")
        y1, y2 = y2, y1
    # Clamp to image bounds on ingest.
    x1, x2 = max(0.0, min(x1, image_w)), max(0.0, min(x2, image_w))
    y1, y2 = max(0.0, min(y1, image_h)), max(0.0, min(y2, image_h))
    return BoundingBox(x1, y1, x2, y2)


def _parse_covar(raw, which: str, *, path, frame_id, index) -> CornerCovariance:
    ok = (
        isinstance(raw, (list, tuple)) and len(raw) == 2
        and all(isinstance(row, (list, tuple)) and len(row) == 2 for row in raw)
    )
    if not ok:
        raise SchemaError(f"{which} covariance must be a 2x2 matrix", path=path,
                          frame_id=frame_id, index=index, field="covars")
    (cxx, cxy1), (cxy2, cyy) = raw
    if cxy1 != cxy2:
        raise SchemaError(f"{which} covariance must be symmetric", path=path,
                          frame_id=frame_id, index=index, field="covars")
    if cxy1 != 0.0:
        raise SchemaError(
            f"{which} covariance has nonzero off-diagonal {cxy1!r}; only "
            "diagonal corner covariances are supported",
            path=path, frame_id=frame_id, index=index, field="covars",
        )
    try:
        return CornerCovariance(float(cxx), float(cxy1), float(cyy))
    except ValueError as exc:
        raise SchemaError(f"{which} covariance invalid: {exc}", path=path,
                          frame_id=frame_id, index=index, field="covars")


# ---------------------------------------------------------------------------
# Detection files
# ---------------------------------------------------------------------------

def load_detections(path: PathLike) -> DetectionSequence:
    """Load one sequence's detection file."""
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object", path=path)
    _check_schema_version(doc, path)
    num_classes = _require(doc, "num_classes", path)
    if not isinstance(num_classes, int) or num_classes <= 0:
        raise SchemaError("num_classes must be a positive integer", path=path,
                          field="num_classes")
    frames: List[Frame] = []
    seen_ids = set()
    for raw_frame in _require(doc, "frames", path):
        frame_id = _require(raw_frame, "frame_id", path)
        width = _require(raw_frame, "image_width", path, frame_id=frame_id)
        height = _require(raw_frame, "image_height", path, frame_id=frame_id)
        if frame_id in seen_ids:
            raise SchemaError(f"duplicate frame_id {frame_id}", path=path,
                              frame_id=frame_id)
        seen_ids.add(frame_id)
        dets: List[Detection] = []
        for k, raw_det in enumerate(raw_frame.get("detections", [])):
            probs = _require(raw_det, "label_probs", path, frame_id=frame_id, index=k)
            if len(probs) != num_classes:
                raise SchemaError(
                    f"label_probs has length {len(probs)}, expected {num_classes}",
                    path=path, frame_id=frame_id, index=k, field="label_probs",
                )
            try:
                labels = LabelVector(probs)
            except ValueError as exc:
                raise SchemaError(str(exc), path=path, frame_id=frame_id,
                                  index=k, field="label_probs")
            box = _parse_bbox(_require(raw_det, "bbox", path, frame_id=frame_id, index=k),
                              path=path, frame_id=frame_id, index=k,
                              image_w=width, image_h=height)
            covars = raw_det.get("covars")
            if covars is None:
                pbox = ProbabilisticBox.crisp(box)
            else:
                if not isinstance(covars, (list, tuple)) or len(covars) != 2:
                    raise SchemaError("covars must hold two 2x2 matrices", path=path,
                                      frame_id=frame_id, index=k, field="covars")
                pbox = ProbabilisticBox(
                    box,
                    _parse_covar(covars[0], "top-left", path=path, frame_id=frame_id, index=k),
                    _parse_covar(covars[1], "bottom-right", path=path, frame_id=frame_id, index=k),
                )
            dets.append(Detection(pbox=pbox, labels=labels,
                                  source_id=str(raw_det.get("source_id", ""))))
        try:
            frames.append(Frame(frame_id=frame_id, image_width=width,
                                image_height=height, detections=tuple(dets)))
        except ValueError as exc:
            raise SchemaError(str(exc), path=path, frame_id=frame_id)
    return DetectionSequence(num_classes=num_classes, frames=tuple(frames))


def _detection_to_json(d: Detection) -> dict:
    out: dict = {
        "bbox": list(d.box.as_tuple()),
        "label_probs": list(d.labels.probs),
    }
    tl, br = d.pbox.cov_top_left, d.pbox.cov_bottom_right
    if any(v != 0.0 for v in (tl.cxx, tl.cxy, tl.cyy, br.cxx, br.cxy, br.cyy)):
        out["covars"] = [
            [[tl.cxx, tl.cxy], [tl.cxy, tl.cyy]],
            [[br.cxx, br.cxy], [br.cxy, br.cyy]],
        ]
    if d.source_id:
        out["source_id"] = d.source_id
    return out


def save_detections(seq: DetectionSequence, path: PathLike) -> None:
    """Write one sequence's detections atomically."""
    payload = {
        "schema_version": SCHEMA_VERSION,
        "num_classes": seq.num_classes,
        "frames": [
            {
                "frame_id": f.frame_id,
                "image_width": f.image_width,
                "image_height": f.image_height,
                "detections": [_detection_to_json(d) for d in f.detections],
            }
            for f in seq.frames
        ],
    }
    atomic_write_text(path, dump_json(payload))


# ---------------------------------------------------------------------------
# Ground-truth files
# ---------------------------------------------------------------------------

def load_ground_truth(path: PathLike) -> GroundTruthSequence:
    """Load one sequence's ground-truth file."""
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object", path=path)
    _check_schema_version(doc, path)
    num_classes = _require(doc, "num_classes", path)
    if not isinstance(num_classes, int) or num_classes <= 0:
        raise SchemaError("num_classes must be a positive integer", path=path,
                          field="num_classes")
    class_names = doc.get("class_names")
    if class_names is not None:
        if len(class_names) != num_classes:
            raise SchemaError(
                f"class_names has {len(class_names)} entries, expected {num_classes}",
                path=path, field="class_names",
            )
        class_names = tuple(str(n) for n in class_names)
    frames: List[Frame] = []
    seen_ids = set()
    for raw_frame in _require(doc, "frames", path):
        frame_id = _require(raw_frame, "frame_id", path)
        width = _require(raw_frame, "image_width", path, frame_id=frame_id)
        height = _require(raw_frame, "image_height", path, frame_id=frame_id)
        if frame_id in seen_ids:
            raise SchemaError(f"duplicate frame_id {frame_id}", path=path,
                              frame_id=frame_id)
        seen_ids.add(frame_id)
        objects: List[GroundTruthObject] = []
        for k, raw_obj in enumerate(raw_frame.get("objects", [])):
            class_id = _require(raw_obj, "class_id", path, frame_id=frame_id, index=k)
            if not isinstance(class_id, int) or not 0 <= class_id < num_classes:
                raise SchemaError(
                    f"class_id {class_id!r} out of range [0, {num_classes})",
                    path=path, frame_id=frame_id, index=k, field="class_id",
                )
            box = _parse_bbox(_require(raw_obj, "bbox", path, frame_id=frame_id, index=k),
                              path=path, frame_id=frame_id, index=k,
                              image_w=width, image_h=height)
            mask = None
            raw_rle = raw_obj.get("mask_rle")
            if raw_rle is not None:
                try:
                    mask = decode_rle(raw_rle)
                except (KeyError, TypeError, ValueError) as exc:
                    raise SchemaError(f"invalid mask_rle: {exc}", path=path,
                                      frame_id=frame_id, index=k, field="mask_rle")
            try:
                objects.append(GroundTruthObject(class_id=class_id, box=box, mask=mask))
            except ValueError as exc:
                raise SchemaError(str(exc), path=path, frame_id=frame_id,
                                  index=k, field="mask_rle")
        try:
            frames.append(Frame(frame_id=frame_id, image_width=width,
                                image_height=height, ground_truths=tuple(objects)))
        except ValueError as exc:
            raise SchemaError(str(exc), path=path, frame_id=frame_id)
    return GroundTruthSequence(num_classes=num_classes, frames=tuple(frames),
                               class_names=class_names)


def save_ground_truth(seq: GroundTruthSequence, path: PathLike) -> None:
    """Write one sequence's ground truth atomically."""
    def obj_to_json(g: GroundTruthObject) -> dict:
        out: dict = {"class_id": g.class_id, "bbox": list(g.box.as_tuple())}
        if g.mask is not None:
            out["mask_rle"] = encode_rle(g.mask)
        return out

    payload: dict = {
        "schema_version": SCHEMA_VERSION,
        "num_classes": seq.num_classes,
        "frames": [
            {
                "frame_id": f.frame_id,
                "image_width": f.image_width,
                "image_height": f.image_height,
                "objects": [obj_to_json(g) for g in f.ground_truths],
            }
            for f in seq.frames
        ],
    }
    if seq.class_names is not None:
        payload["class_names"] = list(seq.class_names)
    atomic_write_text(path, dump_json(payload))


# ---------------------------------------------------------------------------
# Joining detections with ground truth
# ---------------------------------------------------------------------------

def align_detection_sources(
    sequences: Sequence[DetectionSequence],
) -> Tuple[Tuple[int, int, int], ...]:
    """Validate that detection files describe the same frames.

    Returns the common ``(frame_id, width, height)`` tuples in file order.
    """
    if not sequences:
        raise SchemaError("at least one detection file is required")
    ref = tuple((f.frame_id, f.image_width, f.image_height) for f in sequences[0].frames)
    for seq in sequences[1:]:
        got = tuple((f.frame_id, f.image_width, f.image_height) for f in seq.frames)
        if got != ref:
            raise SchemaError("detection files disagree on frame ids or image sizes")
        if seq.num_classes != sequences[0].num_classes:
            raise SchemaError("detection files disagree on num_classes")
    return ref


def frame_sources(sequences: Sequence[DetectionSequence]) -> List[List[List[Detection]]]:
    """Per-frame, per-source detection lists from several detection files."""
    align_detection_sources(sequences)
    n_frames = len(sequences[0].frames)
    return [
        [list(seq.frames[i].detections) for seq in sequences]
        for i in range(n_frames)
    ]


def combine_with_ground_truth(
    gt: GroundTruthSequence,
    detections_per_frame: Sequence[Sequence[Detection]],
    frame_meta: Sequence[Tuple[int, int, int]],
) -> List[Frame]:
    """Join per-frame detections with ground truth into evaluable frames.

    Frame ids (and image sizes) must match one-to-one; mismatches fail
    before anything is evaluated.
    """
    gt_meta = tuple((f.frame_id, f.image_width, f.image_height) for f in gt.frames)
    if tuple(frame_meta) != gt_meta:
        raise SchemaError("detections and ground truth disagree on frame ids or image sizes")
    if len(detections_per_frame) != len(gt.frames):
        raise SchemaError("detections and ground truth disagree on frame count")
    return [
        gt_frame.with_detections(tuple(dets))
        for gt_frame, dets in zip(gt.frames, detections_per_frame)
    ]


# ---------------------------------------------------------------------------
# Pipeline config files
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "confidence_threshold", "box_reduction_ratio", "covariance_scale",
    "final_nms_iou", "label_smoothing", "merge", "num_classes",
    "label_smoothing_normalize", "class_aware_nms", "stage_order",
}
_MERGE_KEYS = {"lambda_iou", "strategy"}


def pipeline_config_from_dict(doc: dict, *, path: Optional[PathLike] = None) -> PipelineConfig:
    """Build a ``PipelineConfig`` from a key-value document.

    Keys mirror the config field names exactly; unknown keys are errors.
    """
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise SchemaError(f"unknown config keys: {sorted(unknown)}", path=path)
    kwargs = dict(doc)
    raw_merge = kwargs.pop("merge", None)
    merge = MergeConfig()
    if raw_merge is not None:
        bad = set(raw_merge) - _MERGE_KEYS
        if bad:
            raise SchemaError(f"unknown merge keys: {sorted(bad)}", path=path, field="merge")
        merge = MergeConfig(**raw_merge)
    if "stage_order" in kwargs:
        kwargs["stage_order"] = tuple(kwargs["stage_order"])
    try:
        return PipelineConfig(merge=merge, **kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid pipeline config: {exc}", path=path)


def pipeline_config_to_dict(config: PipelineConfig) -> dict:
    return {
        "confidence_threshold": config.confidence_threshold,
        "box_reduction_ratio": config.box_reduction_ratio,
        "covariance_scale": config.covariance_scale,
        "final_nms_iou": config.final_nms_iou,
        "label_smoothing": config.label_smoothing,
        "merge": {
            "lambda_iou": config.merge.lambda_iou,
            "strategy": config.merge.strategy,
        },
        "num_classes": config.num_classes,
        "label_smoothing_normalize": config.label_smoothing_normalize,
        "class_aware_nms": config.class_aware_nms,
        "stage_order": list(config.stage_order),
    }


def load_pipeline_config(path: PathLike) -> PipelineConfig:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object", path=path)
    return pipeline_config_from_dict(doc, path=path)


def save_pipeline_config(config: PipelineConfig, path: PathLike) -> None:
    atomic_write_text(path, dump_json(pipeline_config_to_dict(config)))

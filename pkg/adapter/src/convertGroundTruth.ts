/** COCO annotation files -> toolkit ground-truth files. */

import { ClassMap } from "./classMap";
import { decodeCocoRle, encodeToolkitRle, Pixel, pixelSpan } from "./rle";
import {
  CocoAnnotation,
  CocoGroundTruthFile,
  CocoRle,
  ToolkitGroundTruthFile,
  ToolkitGroundTruthFrame,
  ToolkitGroundTruthObject,
} from "./types";

export interface GroundTruthAudit {
  input: number;
  converted: number;
  droppedUnmapped: number;
  droppedCrowd: number;
  droppedDegenerate: number;
  polygonsSkipped: number;
  maskPixelsClipped: number;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

function isRle(seg: CocoAnnotation["segmentation"]): seg is CocoRle {
  return (
    typeof seg === "object" &&
    seg !== null &&
    !Array.isArray(seg) &&
    Array.isArray((seg as CocoRle).size)
  );
}

/**
 * Convert COCO annotations into the toolkit ground-truth schema.
 *
 * Boxes go from [x, y, w, h] to corner form and are clamped to the
 * image; crowd and zero-area annotations are dropped (counted); RLE
 * segmentations re-encode into the toolkit's RLE with pixels clipped to
 * the box, polygon segmentations are skipped (counted).
 */
export function convertGroundTruth(
  doc: CocoGroundTruthFile,
  map: ClassMap,
): { file: ToolkitGroundTruthFile; audit: GroundTruthAudit } {
  if (!Array.isArray(doc.images) || !Array.isArray(doc.annotations)) {
    throw new Error("annotations file needs images and annotations arrays");
  }
  const frameOfImage = new Map<number, number>();
  doc.images.forEach((img, index) => {
    if (frameOfImage.has(img.id)) {
      throw new Error(`duplicate image id ${img.id}`);
    }
    frameOfImage.set(img.id, index);
  });

  const frames: ToolkitGroundTruthFrame[] = doc.images.map((img, index) => ({
    frame_id: index,
    image_width: img.width,
    image_height: img.height,
    objects: [],
  }));

  const audit: GroundTruthAudit = {
    input: 0,
    converted: 0,
    droppedUnmapped: 0,
    droppedCrowd: 0,
    droppedDegenerate: 0,
    polygonsSkipped: 0,
    maskPixelsClipped: 0,
  };

  doc.annotations.forEach((ann, k) => {
    audit.input += 1;
    const frameIndex = frameOfImage.get(ann.image_id);
    if (frameIndex === undefined) {
      throw new Error(`annotation ${k}: unknown image_id ${ann.image_id}`);
    }
    if (ann.iscrowd === 1) {
      audit.droppedCrowd += 1;
      return;
    }
    const target = map.lookup(ann.category_id);
    if (target === undefined) {
      audit.droppedUnmapped += 1;
      return;
    }
    const [x, y, w, h] = ann.bbox;
    if (!(w > 0) || !(h > 0)) {
      audit.droppedDegenerate += 1;
      return;
    }
    const img = doc.images[frameIndex];
    const x1 = clamp(x, 0, img.width);
    const y1 = clamp(y, 0, img.height);
    const x2 = clamp(x + w, 0, img.width);
    const y2 = clamp(y + h, 0, img.height);
    if (!(x2 > x1) || !(y2 > y1)) {
      audit.droppedDegenerate += 1;
      return;
    }

    const obj: ToolkitGroundTruthObject = {
      class_id: target,
      bbox: [x1, y1, x2, y2],
    };
    if (ann.segmentation !== undefined) {
      if (isRle(ann.segmentation)) {
        const pixels = decodeCocoRle(ann.segmentation);
        const [ix0, ix1] = pixelSpan(x1, x2);
        const [iy0, iy1] = pixelSpan(y1, y2);
        const inside: Pixel[] = pixels.filter(
          ([px, py]) => px >= ix0 && px <= ix1 && py >= iy0 && py <= iy1,
        );
        audit.maskPixelsClipped += pixels.length - inside.length;
        if (inside.length > 0) {
          obj.mask_rle = encodeToolkitRle(inside);
        }
      } else {
        audit.polygonsSkipped += 1;
      }
    }
    frames[frameIndex].objects.push(obj);
    audit.converted += 1;
  });

  const file: ToolkitGroundTruthFile = {
    schema_version: 1,
    num_classes: map.numClasses,
    frames,
  };
  if (map.names !== undefined) {
    file.class_names = map.names;
  }
  return { file, audit };
}

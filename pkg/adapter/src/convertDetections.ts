/** COCO results files -> one multi-source toolkit detection file. */

import { ClassMap } from "./classMap";
import {
  CocoImage,
  CocoResult,
  ToolkitDetection,
  ToolkitDetectionFile,
  ToolkitDetectionFrame,
} from "./types";

export interface ResultsSource {
  sourceId: string;
  results: CocoResult[];
}

export interface DetectionAudit {
  input: number;
  converted: number;
  droppedUnmapped: number;
  perSource: Record<string, { input: number; converted: number; droppedUnmapped: number }>;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

function checkImage(img: CocoImage, k: number): void {
  if (!Number.isInteger(img.id)) {
    throw new Error(`images[${k}] has no integer id`);
  }
  if (!(img.width > 0) || !(img.height > 0)) {
    throw new Error(`image ${img.id} has invalid dimensions`);
  }
}

function labelVector(
  result: CocoResult,
  map: ClassMap,
  where: string,
): number[] | undefined {
  const probs = new Array<number>(map.numClasses).fill(0);
  if (result.label_probs !== undefined) {
    // full per-class scores: remap, dropping filtered classes
    let any = false;
    let total = 0;
    for (const [srcId, p] of Object.entries(result.label_probs)) {
      if (typeof p !== "number" || !(p >= 0 && p <= 1)) {
        throw new Error(`${where}: label_probs[${srcId}] out of [0, 1]`);
      }
      const target = map.lookup(Number(srcId));
      if (target === undefined) {
        continue;
      }
      probs[target] = p;
      total += p;
      any = true;
    }
    if (total > 1 + 1e-6) {
      throw new Error(`${where}: label_probs sum to ${total} > 1`);
    }
    return any ? probs : undefined;
  }
  if (typeof result.score !== "number" || !(result.score >= 0 && result.score <= 1)) {
    throw new Error(`${where}: score ${result.score} out of [0, 1]`);
  }
  const target = map.lookup(result.category_id);
  if (target === undefined) {
    return undefined;
  }
  probs[target] = result.score;
  return probs;
}

/**
 * Group per-image results from every source into toolkit frames.
 *
 * Frames follow the order of the images array (frame_id = position).
 * Detections of filtered-out classes are dropped and counted in the
 * audit; results referencing unknown image ids are errors.
 */
export function convertDetections(
  images: CocoImage[],
  sources: ResultsSource[],
  map: ClassMap,
): { file: ToolkitDetectionFile; audit: DetectionAudit } {
  images.forEach(checkImage);
  const frameOfImage = new Map<number, number>();
  images.forEach((img, index) => {
    if (frameOfImage.has(img.id)) {
      throw new Error(`duplicate image id ${img.id}`);
    }
    frameOfImage.set(img.id, index);
  });

  const ids = sources.map((s) => s.sourceId);
  if (new Set(ids).size !== ids.length) {
    throw new Error(`source ids must be distinct, got ${ids.join(", ")}`);
  }

  const frames: ToolkitDetectionFrame[] = images.map((img, index) => ({
    frame_id: index,
    image_width: img.width,
    image_height: img.height,
    detections: [],
  }));

  const audit: DetectionAudit = {
    input: 0,
    converted: 0,
    droppedUnmapped: 0,
    perSource: {},
  };

  for (const { sourceId, results } of sources) {
    const per = { input: 0, converted: 0, droppedUnmapped: 0 };
    audit.perSource[sourceId] = per;
    results.forEach((result, k) => {
      const where = `source ${sourceId} result ${k}`;
      audit.input += 1;
      per.input += 1;
      const frameIndex = frameOfImage.get(result.image_id);
      if (frameIndex === undefined) {
        throw new Error(`${where}: unknown image_id ${result.image_id}`);
      }
      const probs = labelVector(result, map, where);
      if (probs === undefined) {
        audit.droppedUnmapped += 1;
        per.droppedUnmapped += 1;
        return;
      }
      const [x, y, w, h] = result.bbox;
      if (![x, y, w, h].every(Number.isFinite)) {
        throw new Error(`${where}: non-finite bbox`);
      }
      const img = images[frameIndex];
      const det: ToolkitDetection = {
        bbox: [
          clamp(x, 0, img.width),
          clamp(y, 0, img.height),
          clamp(x + Math.max(w, 0), 0, img.width),
          clamp(y + Math.max(h, 0), 0, img.height),
        ],
        label_probs: probs,
        source_id: sourceId,
      };
      frames[frameIndex].detections.push(det);
      audit.converted += 1;
      per.converted += 1;
    });
  }

  return {
    file: { schema_version: 1, num_classes: map.numClasses, frames },
    audit,
  };
}

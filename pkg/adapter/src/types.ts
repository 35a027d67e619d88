/** COCO-side input shapes and toolkit-side output schemas. */

// ---------------------------------------------------------------------------
// COCO inputs
// ---------------------------------------------------------------------------

export interface CocoImage {
  id: number;
  width: number;
  height: number;
  file_name?: string;
}

/** One entry of a COCO results file (a flat JSON array of these). */
export interface CocoResult {
  image_id: number;
  category_id: number;
  /** [x, y, width, height] */
  bbox: [number, number, number, number];
  score: number;
  /** Optional full per-class scores keyed by source category id. */
  label_probs?: Record<string, number>;
}

export interface CocoRle {
  /** [height, width] */
  size: [number, number];
  /** Uncompressed run lengths, or the compressed LEB128-style string. */
  counts: number[] | string;
}

export interface CocoAnnotation {
  id?: number;
  image_id: number;
  category_id: number;
  bbox: [number, number, number, number];
  segmentation?: CocoRle | number[][];
  iscrowd?: 0 | 1;
}

export interface CocoGroundTruthFile {
  images: CocoImage[];
  annotations: CocoAnnotation[];
  categories?: { id: number; name?: string }[];
}

// ---------------------------------------------------------------------------
// Toolkit outputs (schema_version 1)
// ---------------------------------------------------------------------------

export interface ToolkitRle {
  x0: number;
  y0: number;
  width: number;
  height: number;
  /** Alternating absent/present run lengths, row-major, starting absent. */
  counts: number[];
}

export interface ToolkitDetection {
  bbox: [number, number, number, number];
  label_probs: number[];
  source_id?: string;
}

export interface ToolkitDetectionFrame {
  frame_id: number;
  image_width: number;
  image_height: number;
  detections: ToolkitDetection[];
}

export interface ToolkitDetectionFile {
  schema_version: 1;
  num_classes: number;
  frames: ToolkitDetectionFrame[];
}

export interface ToolkitGroundTruthObject {
  class_id: number;
  bbox: [number, number, number, number];
  mask_rle?: ToolkitRle;
}

export interface ToolkitGroundTruthFrame {
  frame_id: number;
  image_width: number;
  image_height: number;
  objects: ToolkitGroundTruthObject[];
}

export interface ToolkitGroundTruthFile {
  schema_version: 1;
  num_classes: number;
  class_names?: string[];
  frames: ToolkitGroundTruthFrame[];
}

#!/usr/bin/env node
/**
 * CLI: convert COCO-format files into the toolkit schemas.
 *
 *   probdet-adapter convert-dets --results r1.json [r2.json ...] \
 *       --images images.json --class-map map.json --out dets.json \
 *       [--source-ids a,b,c]
 *   probdet-adapter convert-gt --annotations coco.json \
 *       --class-map map.json --out gt.json
 *
 * The audit summary is printed to stdout as JSON; failures exit nonzero
 * with a JSON error on stderr and never leave partial output files.
 */

import { ClassMap } from "./classMap";
import { convertDetections, ResultsSource } from "./convertDetections";
import { convertGroundTruth } from "./convertGroundTruth";
import { atomicWriteJson, defaultSourceIds, readJson } from "./io";
import { CocoGroundTruthFile, CocoImage, CocoResult } from "./types";

interface ParsedArgs {
  flags: Map<string, string[]>;
}

function parseArgs(argv: string[]): ParsedArgs {
  const flags = new Map<string, string[]>();
  let current: string | undefined;
  for (const token of argv) {
    if (token.startsWith("--")) {
      current = token.slice(2);
      if (!flags.has(current)) {
        flags.set(current, []);
      }
    } else if (current !== undefined) {
      flags.get(current)!.push(token);
    } else {
      throw new Error(`unexpected argument ${token}`);
    }
  }
  return { flags };
}

function requireOne(args: ParsedArgs, name: string): string {
  const values = args.flags.get(name);
  if (!values || values.length !== 1) {
    throw new Error(`--${name} requires exactly one value`);
  }
  return values[0];
}

function requireMany(args: ParsedArgs, name: string): string[] {
  const values = args.flags.get(name);
  if (!values || values.length === 0) {
    throw new Error(`--${name} requires at least one value`);
  }
  return values;
}

function loadImages(filePath: string): CocoImage[] {
  const doc = readJson(filePath) as { images?: CocoImage[] };
  if (!doc || !Array.isArray(doc.images)) {
    throw new Error(`${filePath} has no images array`);
  }
  return doc.images;
}

function cmdConvertDets(args: ParsedArgs): number {
  const resultFiles = requireMany(args, "results");
  const imagesFile = requireOne(args, "images");
  const mapFile = requireOne(args, "class-map");
  const outFile = requireOne(args, "out");
  const sourceIdsFlag = args.flags.get("source-ids");

  const map = ClassMap.fromJson(readJson(mapFile));
  const images = loadImages(imagesFile);
  const sourceIds =
    sourceIdsFlag && sourceIdsFlag.length > 0
      ? sourceIdsFlag.join(",").split(",")
      : defaultSourceIds(resultFiles);
  if (sourceIds.length !== resultFiles.length) {
    throw new Error(
      `--source-ids names ${sourceIds.length} sources for ${resultFiles.length} files`,
    );
  }
  const sources: ResultsSource[] = resultFiles.map((file, k) => {
    const results = readJson(file);
    if (!Array.isArray(results)) {
      throw new Error(`${file} must be a JSON array of results`);
    }
    return { sourceId: sourceIds[k], results: results as CocoResult[] };
  });

  const { file, audit } = convertDetections(images, sources, map);
  atomicWriteJson(outFile, file);
  process.stdout.write(JSON.stringify({ out: outFile, audit }, null, 1) + "\n");
  return 0;
}

function cmdConvertGt(args: ParsedArgs): number {
  const annFile = requireOne(args, "annotations");
  const mapFile = requireOne(args, "class-map");
  const outFile = requireOne(args, "out");

  const map = ClassMap.fromJson(readJson(mapFile));
  const doc = readJson(annFile) as CocoGroundTruthFile;
  const { file, audit } = convertGroundTruth(doc, map);
  atomicWriteJson(outFile, file);
  process.stdout.write(JSON.stringify({ out: outFile, audit }, null, 1) + "\n");
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "convert-dets") {
      return cmdConvertDets(parseArgs(rest));
    }
    if (command === "convert-gt") {
      return cmdConvertGt(parseArgs(rest));
    }
    throw new Error(
      `unknown command ${command ?? "(none)"}; expected convert-dets or convert-gt`,
    );
  } catch (err) {
    process.stderr.write(JSON.stringify({ error: (err as Error).message }) + "\n");
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}

/** File helpers shared by the CLI: JSON reads and atomic writes. */

import * as fs from "node:fs";
import * as path from "node:path";

export function readJson(filePath: string): unknown {
  let text: string;
  try {
    text = fs.readFileSync(filePath, "utf-8");
  } catch (err) {
    throw new Error(`cannot read ${filePath}: ${(err as Error).message}`);
  }
  try {
    return JSON.parse(text);
  } catch (err) {
    throw new Error(`invalid JSON in ${filePath}: ${(err as Error).message}`);
  }
}

/** Write via a temporary sibling + rename so failures leave no partial file. */
export function atomicWriteJson(filePath: string, doc: unknown): void {
  const dir = path.dirname(filePath);
  fs.mkdirSync(dir, { recursive: true });
  const tmp = path.join(
    dir,
    `${path.basename(filePath)}.${process.pid}.${Date.now()}.tmp`,
  );
  try {
    fs.writeFileSync(tmp, JSON.stringify(doc, null, 1) + "\n");
    fs.renameSync(tmp, filePath);
  } catch (err) {
    try {
      fs.unlinkSync(tmp);
    } catch {
      // already gone
    }
    throw err;
  }
}

export function defaultSourceIds(files: string[]): string[] {
  const ids = files.map((f) => path.basename(f).replace(/\.json$/i, ""));
  const seen = new Map<string, number>();
  return ids.map((id) => {
    const n = seen.get(id) ?? 0;
    seen.set(id, n + 1);
    return n === 0 ? id : `${id}#${n}`;
  });
}

/** Source-to-target class mapping for the evaluated class subset. */

export interface ClassMapEntry {
  source: number;
  target: number;
  name?: string;
}

export class ClassMap {
  readonly numClasses: number;
  private readonly byCocoId: Map<number, number>;
  readonly names?: string[];

  constructor(entries: ClassMapEntry[], numClasses: number, names?: string[]) {
    if (entries.length !== numClasses) {
      throw new Error(
        `class map must list exactly ${numClasses} classes, got ${entries.length}`,
      );
    }
    const sources = new Set<number>();
    const targets = new Set<number>();
    for (const { source, target } of entries) {
      if (!Number.isInteger(source) || !Number.isInteger(target)) {
        throw new Error(`class map ids must be integers: ${source} -> ${target}`);
      }
      if (target < 0 || target >= numClasses) {
        throw new Error(`target class id ${target} out of range [0, ${numClasses})`);
      }
      if (sources.has(source)) {
        throw new Error(`duplicate source class id ${source}`);
      }
      if (targets.has(target)) {
        throw new Error(`class map is not injective: target ${target} repeated`);
      }
      sources.add(source);
      targets.add(target);
    }
    this.numClasses = numClasses;
    this.byCocoId = new Map(entries.map((e) => [e.source, e.target]));
    this.names = names;
  }

  /** Target class id, or undefined for classes that are filtered out. */
  lookup(sourceId: number): number | undefined {
    return this.byCocoId.get(sourceId);
  }

  static fromJson(doc: unknown): ClassMap {
    if (typeof doc !== "object" || doc === null) {
      throw new Error("class map must be a JSON object");
    }
    const record = doc as Record<string, unknown>;
    const numClasses = record["num_classes"];
    if (typeof numClasses !== "number" || !Number.isInteger(numClasses) || numClasses <= 0) {
      throw new Error("class map needs a positive integer num_classes");
    }
    const rawEntries = record["entries"];
    if (!Array.isArray(rawEntries)) {
      throw new Error("class map needs an entries array");
    }
    const entries: ClassMapEntry[] = rawEntries.map((raw, k) => {
      if (!Array.isArray(raw) || raw.length < 2) {
        throw new Error(`entries[${k}] must be [source_id, target_id]`);
      }
      return { source: raw[0] as number, target: raw[1] as number };
    });
    let names: string[] | undefined;
    if (record["class_names"] !== undefined) {
      if (!Array.isArray(record["class_names"])) {
        throw new Error("class_names must be an array");
      }
      names = (record["class_names"] as unknown[]).map(String);
      if (names.length !== numClasses) {
        throw new Error(`class_names must have ${numClasses} entries`);
      }
    }
    return new ClassMap(entries, numClasses, names);
  }
}

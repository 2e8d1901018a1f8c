/** Canonical document serialization, byte-compatible with the server.
 *
 * The server renders documents with layers in topological order
 * (lexicographic tiebreaks, cycle members released smallest-first),
 * edges sorted, all object keys sorted, two-space indent, and a
 * trailing newline. Exports produced here must be byte-identical so
 * that an unedited design round-trips exactly.
 */

import { IrDocument, LayerEntry } from "./types.js";

export function serializationOrder(ids: string[], edges: [string, string][]): string[] {
  const indeg = new Map<string, number>();
  const succ = new Map<string, string[]>();
  for (const id of ids) {
    indeg.set(id, 0);
    succ.set(id, []);
  }
  for (const [src, dst] of edges) {
    indeg.set(dst, (indeg.get(dst) ?? 0) + 1);
    succ.get(src)?.push(dst);
  }
  const ready: string[] = ids.filter((id) => indeg.get(id) === 0);
  const out: string[] = [];
  const emitted = new Set<string>();
  while (out.length < ids.length) {
    if (ready.length === 0) {
      // cyclic remainder: release the smallest blocked id so broken
      // designs still serialize deterministically
      const blocked = ids.filter((id) => !emitted.has(id)).sort()[0];
      ready.push(blocked);
      indeg.set(blocked, 0);
    }
    ready.sort();
    const node = ready.shift() as string;
    if (emitted.has(node)) continue;
    out.push(node);
    emitted.add(node);
    for (const nxt of succ.get(node) ?? []) {
      indeg.set(nxt, (indeg.get(nxt) as number) - 1);
      if (indeg.get(nxt) === 0) ready.push(nxt);
    }
  }
  return out;
}

function sortKeysDeep(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeysDeep);
  if (value !== null && typeof value === "object") {
    const source = value as Record<string, unknown>;
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(source).sort()) out[key] = sortKeysDeep(source[key]);
    return out;
  }
  return value;
}

function compareEdges(a: [string, string], b: [string, string]): number {
  if (a[0] !== b[0]) return a[0] < b[0] ? -1 : 1;
  if (a[1] !== b[1]) return a[1] < b[1] ? -1 : 1;
  return 0;
}

/** Reorder layers and edges into their canonical positions. */
export function canonicalDocument(doc: IrDocument): IrDocument {
  const byId = new Map<string, LayerEntry>(doc.layers.map((l) => [l.id, l]));
  const order = serializationOrder(
    doc.layers.map((l) => l.id),
    doc.edges,
  );
  return {
    format: "darviz-ir",
    version: 1,
    name: doc.name,
    layers: order.map((id) => byId.get(id) as LayerEntry),
    edges: doc.edges.map((e) => [...e] as [string, string]).sort(compareEdges),
    metadata: { ...doc.metadata },
  };
}

export function serializeDocument(doc: IrDocument): string {
  return JSON.stringify(sortKeysDeep(canonicalDocument(doc)), null, 2) + "\n";
}

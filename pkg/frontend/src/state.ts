/** Design canvas state and its pure edit reducer.
 *
 * Stripping positions and selection from a DesignState always yields a
 * well-formed interchange document; broken designs are valid documents
 * that carry diagnostics. Every reducer call returns a new state (or
 * the untouched input state plus a rejection reason) so replaying an
 * edit sequence is deterministic.
 */

import { canonicalDocument } from "./serialize.js";
import { Diagnostic, IrDocument, ParamValue, ShapeMap } from "./types.js";

export interface DesignNode {
  id: string;
  kind: string;
  name: string;
  params: Record<string, ParamValue>;
  x: number;
  y: number;
}

export interface DesignState {
  design: string;
  nodes: DesignNode[];
  edges: [string, string][];
  metadata: Record<string, string>;
  selection: string | null;
  dirty: boolean;
  /** bumped on every document-affecting edit; tags validation rounds */
  revision: number;
  diagnostics: Diagnostic[];
  shapes: ShapeMap;
}

export type Edit =
  | { op: "add-node"; id: string; kind: string; params?: Record<string, ParamValue>; name?: string; x?: number; y?: number }
  | { op: "move-node"; id: string; x: number; y: number }
  | { op: "connect"; from: string; to: string }
  | { op: "set-param"; id: string; name: string; value: ParamValue }
  | { op: "delete"; id: string };

export interface EditResult {
  state: DesignState;
  rejected?: string;
}

const ID_PATTERN = /^[A-Za-z0-9_./-]+$/;

export function emptyState(design: string): DesignState {
  return {
    design,
    nodes: [],
    edges: [],
    metadata: {},
    selection: null,
    dirty: false,
    revision: 0,
    diagnostics: [],
    shapes: {},
  };
}

/** True when adding from->to would close a directed cycle (or self-loop). */
export function wouldCreateCycle(edges: [string, string][], from: string, to: string): boolean {
  if (from === to) return true;
  const succ = new Map<string, string[]>();
  for (const [src, dst] of edges) {
    const list = succ.get(src);
    if (list) list.push(dst);
    else succ.set(src, [dst]);
  }
  const frontier = [to];
  const seen = new Set<string>(frontier);
  while (frontier.length > 0) {
    const node = frontier.pop() as string;
    if (node === from) return true;
    for (const nxt of succ.get(node) ?? []) {
      if (!seen.has(nxt)) {
        seen.add(nxt);
        frontier.push(nxt);
      }
    }
  }
  return false;
}

function reject(state: DesignState, reason: string): EditResult {
  return { state, rejected: reason };
}

function accept(state: DesignState, changes: Partial<DesignState>, documentChanged: boolean): EditResult {
  return {
    state: {
      ...state,
      ...changes,
      dirty: true,
      revision: documentChanged ? state.revision + 1 : state.revision,
    },
  };
}

export function applyEdit(state: DesignState, edit: Edit): EditResult {
  switch (edit.op) {
    case "add-node": {
      if (!ID_PATTERN.test(edit.id)) return reject(state, `invalid node id ${JSON.stringify(edit.id)}`);
      if (state.nodes.some((n) => n.id === edit.id)) return reject(state, `duplicate node id ${edit.id}`);
      const node: DesignNode = {
        id: edit.id,
        kind: edit.kind,
        // an empty display name falls back to the id, as the backend does
        name: edit.name ? edit.name : edit.id,
        params: { ...(edit.params ?? {}) },
        x: edit.x ?? 0,
        y: edit.y ?? 0,
      };
      return accept(state, { nodes: [...state.nodes, node] }, true);
    }
    case "move-node": {
      const index = state.nodes.findIndex((n) => n.id === edit.id);
      if (index < 0) return reject(state, `unknown node ${edit.id}`);
      const nodes = state.nodes.map((n) => (n.id === edit.id ? { ...n, x: edit.x, y: edit.y } : n));
      return accept(state, { nodes }, false);
    }
    case "connect": {
      const have = new Set(state.nodes.map((n) => n.id));
      if (!have.has(edit.from)) return reject(state, `unknown node ${edit.from}`);
      if (!have.has(edit.to)) return reject(state, `unknown node ${edit.to}`);
      if (state.edges.some(([a, b]) => a === edit.from && b === edit.to)) {
        return reject(state, `edge ${edit.from} -> ${edit.to} already exists`);
      }
      if (wouldCreateCycle(state.edges, edit.from, edit.to)) return reject(state, "would create cycle");
      return accept(state, { edges: [...state.edges, [edit.from, edit.to]] }, true);
    }
    case "set-param": {
      const node = state.nodes.find((n) => n.id === edit.id);
      if (!node) return reject(state, `unknown node ${edit.id}`);
      if (node.kind === "Input" && edit.name === "shape") {
        const metadata = { ...state.metadata, [`input_shape.${edit.id}`]: String(edit.value) };
        return accept(state, { metadata }, true);
      }
      const nodes = state.nodes.map((n) =>
        n.id === edit.id ? { ...n, params: { ...n.params, [edit.name]: edit.value } } : n,
      );
      return accept(state, { nodes }, true);
    }
    case "delete": {
      if (!state.nodes.some((n) => n.id === edit.id)) return reject(state, `unknown node ${edit.id}`);
      const nodes = state.nodes.filter((n) => n.id !== edit.id);
      const edges = state.edges.filter(([a, b]) => a !== edit.id && b !== edit.id);
      const metadata = { ...state.metadata };
      delete metadata[`input_shape.${edit.id}`];
      const selection = state.selection === edit.id ? null : state.selection;
      return accept(state, { nodes, edges, metadata, selection }, true);
    }
  }
}

export function select(state: DesignState, id: string | null): DesignState {
  if (id !== null && !state.nodes.some((n) => n.id === id)) return state;
  return { ...state, selection: id };
}

/** Strip positions and selection down to the interchange document. */
export function toDocument(state: DesignState): IrDocument {
  return canonicalDocument({
    format: "darviz-ir",
    version: 1,
    name: state.design,
    layers: state.nodes.map((n) => ({
      id: n.id,
      kind: n.kind,
      name: n.name,
      params: { ...n.params },
    })),
    edges: state.edges.map((e) => [...e] as [string, string]),
    metadata: { ...state.metadata },
  });
}

/** Lay a loaded document out on the canvas, one column per graph depth. */
export function loadDocument(doc: IrDocument, previous?: DesignState): DesignState {
  const depth = new Map<string, number>();
  const pred = new Map<string, string[]>();
  for (const layer of doc.layers) pred.set(layer.id, []);
  for (const [src, dst] of doc.edges) pred.get(dst)?.push(src);

  const resolve = (id: string, trail: Set<string>): number => {
    const known = depth.get(id);
    if (known !== undefined) return known;
    if (trail.has(id)) return 0;
    trail.add(id);
    const parents = pred.get(id) ?? [];
    const value = parents.length === 0 ? 0 : Math.max(...parents.map((p) => resolve(p, trail))) + 1;
    depth.set(id, value);
    return value;
  };

  const rows = new Map<number, number>();
  const nodes: DesignNode[] = doc.layers.map((layer) => {
    const column = resolve(layer.id, new Set());
    const row = rows.get(column) ?? 0;
    rows.set(column, row + 1);
    return {
      id: layer.id,
      kind: layer.kind,
      name: layer.name,
      params: { ...layer.params },
      x: 40 + column * 170,
      y: 40 + row * 90,
    };
  });

  return {
    design: doc.name,
    nodes,
    edges: doc.edges.map((e) => [...e] as [string, string]),
    metadata: { ...doc.metadata },
    selection: null,
    dirty: false,
    revision: previous ? previous.revision + 1 : 0,
    diagnostics: [],
    shapes: {},
  };
}

/** Wire types shared with the darviz HTTP API. */

export type ParamValue = number | string | number[];

export interface LayerEntry {
  id: string;
  kind: string;
  name: string;
  params: Record<string, ParamValue>;
}

export interface IrDocument {
  format: "darviz-ir";
  version: 1;
  name: string;
  layers: LayerEntry[];
  edges: [string, string][];
  metadata: Record<string, string>;
}

export interface Suggestion {
  action: string;
  target: (string | null)[];
  value: ParamValue;
}

export interface Diagnostic {
  rule_id: string;
  severity: "warning" | "error";
  layers: string[];
  message: string;
  suggestion: Suggestion | null;
}

export type ShapeMap = Record<string, number[]>;

export interface CatalogParam {
  name: string;
  type: string;
  default?: ParamValue;
}

export interface CatalogEntry {
  kind: string;
  params: CatalogParam[];
  arity: "none" | "one" | "many";
}

export interface ZooSummary {
  name: string;
  description: string;
  input_shape: string;
  layers: number;
}

export interface SourcePayload {
  target: string;
  filename: string;
  source: string;
}

export interface ImportPayload {
  model: IrDocument;
  notes: string[];
}

export interface DesignRecord {
  id: string;
  document: IrDocument;
  created: string;
  updated: string;
  revision: number;
}

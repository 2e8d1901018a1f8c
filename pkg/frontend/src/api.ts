/** Typed client for the darviz HTTP API; the only way this package
 * talks to the backend.
 */

import {
  CatalogEntry,
  DesignRecord,
  Diagnostic,
  ImportPayload,
  IrDocument,
  ShapeMap,
  SourcePayload,
  ZooSummary,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
    this.name = "ApiError";
  }
}

async function fail(response: Response): Promise<never> {
  let detail: unknown = response.statusText;
  try {
    detail = ((await response.json()) as { detail?: unknown }).detail ?? detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    if (!response.ok) await fail(response);
    return (await response.json()) as T;
  }

  private async send<T>(method: string, path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) await fail(response);
    return (await response.json()) as T;
  }

  zooList(): Promise<ZooSummary[]> {
    return this.get("/api/zoo");
  }

  zooGet(name: string): Promise<IrDocument> {
    return this.get(`/api/zoo/${encodeURIComponent(name)}`);
  }

  catalog(): Promise<CatalogEntry[]> {
    return this.get<{ kinds: CatalogEntry[] }>("/api/catalog").then((body) => body.kinds);
  }

  async validate(document: IrDocument): Promise<Diagnostic[]> {
    const body = await this.send<{ diagnostics: Diagnostic[] }>("POST", "/api/validate", {
      model: document,
    });
    return body.diagnostics;
  }

  /** Inferred shapes, or null when the design's shapes don't resolve (422). */
  async shapes(document: IrDocument): Promise<ShapeMap | null> {
    try {
      const body = await this.send<{ shapes: ShapeMap }>("POST", "/api/shapes", {
        model: document,
      });
      return body.shapes;
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) return null;
      throw err;
    }
  }

  codegen(document: IrDocument, target: string): Promise<SourcePayload> {
    return this.send("POST", "/api/codegen", { model: document, target });
  }

  importModel(format: "caffe" | "keras", text: string): Promise<ImportPayload> {
    return this.send("POST", "/api/import", { format, text });
  }

  createDesign(document: IrDocument): Promise<DesignRecord> {
    return this.send("POST", "/api/designs", document);
  }

  saveDesign(id: string, document: IrDocument): Promise<DesignRecord> {
    return this.send("PUT", `/api/designs/${encodeURIComponent(id)}`, document);
  }

  loadDesign(id: string): Promise<DesignRecord> {
    return this.get(`/api/designs/${encodeURIComponent(id)}`);
  }

  async deleteDesign(id: string): Promise<void> {
    const response = await this.fetchFn(this.baseUrl + `/api/designs/${encodeURIComponent(id)}`, {
      method: "DELETE",
    });
    if (!response.ok) await fail(response);
  }
}

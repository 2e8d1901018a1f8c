/** Debounced validation round trips with stale-response protection.
 *
 * Each document-affecting edit bumps the state revision and calls
 * schedule(). One validation round (POST /api/validate + /api/shapes)
 * fires 300 ms after the last edit; responses tagged with a superseded
 * revision are dropped, so results always reflect the newest document
 * the server has seen.
 */

import { ApiClient } from "./api.js";
import { Diagnostic, IrDocument, ShapeMap } from "./types.js";

export interface SyncResult {
  revision: number;
  diagnostics: Diagnostic[];
  shapes: ShapeMap;
  offline: boolean;
}

export type SyncListener = (result: SyncResult) => void;

export class ValidationScheduler {
  static readonly delayMs = 300;

  private timer: ReturnType<typeof setTimeout> | null = null;
  private latestRevision = 0;
  private appliedRevision = 0;

  constructor(
    private api: Pick<ApiClient, "validate" | "shapes">,
    private deliver: SyncListener,
  ) {}

  schedule(document: IrDocument, revision: number): void {
    this.latestRevision = revision;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire(document, revision);
    }, ValidationScheduler.delayMs);
  }

  /** Run the pending round immediately (e.g. before an export). */
  flush(document: IrDocument, revision: number): Promise<void> {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.latestRevision = revision;
    return this.fire(document, revision);
  }

  private stale(revision: number): boolean {
    return revision < this.latestRevision || revision <= this.appliedRevision;
  }

  private async fire(document: IrDocument, revision: number): Promise<void> {
    try {
      const [diagnostics, shapes] = await Promise.all([
        this.api.validate(document),
        this.api.shapes(document),
      ]);
      if (this.stale(revision)) return;
      this.appliedRevision = revision;
      this.deliver({ revision, diagnostics, shapes: shapes ?? {}, offline: false });
    } catch {
      if (this.stale(revision)) return;
      this.deliver({ revision, diagnostics: [], shapes: {}, offline: true });
    }
  }
}

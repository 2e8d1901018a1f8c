/** DOM shell: canvas, palette, property panel, toolbar.
 *
 * All semantics live server-side; this layer renders DesignState,
 * turns pointer/form events into reducer edits, and schedules
 * validation rounds. Only the cycle rule is mirrored locally (the
 * reducer rejects those edits before the server ever sees them).
 */

import { ApiClient, ApiError } from "./api.js";
import { serializeDocument } from "./serialize.js";
import { applyEdit, DesignState, Edit, emptyState, loadDocument, select, toDocument } from "./state.js";
import { ValidationScheduler } from "./sync.js";
import { CatalogEntry, ParamValue } from "./types.js";

const NODE_WIDTH = 140;
const NODE_HEIGHT = 54;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function formatShape(dims: number[] | undefined): string {
  return dims ? dims.join("×") : "";
}

function parseParamText(text: string, type: string): ParamValue {
  if (type.includes("tuple")) {
    const parts = text.split(/[x,\s]+/).filter((p) => p.length > 0);
    return parts.map((p) => Number(p));
  }
  if (type.includes("int") || type.includes("float")) return Number(text);
  return text;
}

export class DesignerApp {
  state: DesignState = emptyState("untitled");
  savedId: string | null = null;
  notice = "";
  offline = false;

  private scheduler: ValidationScheduler;
  private canvas!: HTMLElement;
  private edgeLayer!: SVGSVGElement;
  private panel!: HTMLElement;
  private noticeBar!: HTMLElement;
  private pendingSource: string | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private catalog: CatalogEntry[],
    zooNames: string[],
  ) {
    this.scheduler = new ValidationScheduler(api, (result) => {
      if (result.revision !== this.state.revision) return;
      this.offline = result.offline;
      if (!result.offline) {
        this.state = { ...this.state, diagnostics: result.diagnostics, shapes: result.shapes };
      }
      this.render();
    });
    this.buildChrome(zooNames);
    this.render();
  }

  dispatch(edit: Edit): void {
    const before = this.state.revision;
    const { state, rejected } = applyEdit(this.state, edit);
    this.state = state;
    this.notice = rejected ?? "";
    if (!rejected && state.revision !== before) {
      this.scheduler.schedule(toDocument(state), state.revision);
    }
    this.render();
  }

  loadModel(docName: string, doc: Parameters<typeof loadDocument>[0]): void {
    this.state = loadDocument(doc, this.state);
    this.savedId = docName.startsWith("design:") ? docName.slice(7) : null;
    this.notice = "";
    this.scheduler.schedule(toDocument(this.state), this.state.revision);
    this.render();
  }

  private buildChrome(zooNames: string[]): void {
    this.root.textContent = "";
    const toolbar = el("div", "toolbar");

    const zooSelect = el("select");
    for (const name of zooNames) {
      const option = el("option", undefined, name);
      option.value = name;
      zooSelect.append(option);
    }
    const loadButton = el("button", undefined, "Load zoo model");
    loadButton.addEventListener("click", () => {
      void this.api.zooGet(zooSelect.value).then(
        (doc) => this.loadModel(zooSelect.value, doc),
        (err) => this.showError(err),
      );
    });

    const saveButton = el("button", undefined, "Save design");
    saveButton.addEventListener("click", () => void this.saveDesign());

    const exportIr = el("button", undefined, "Download document");
    exportIr.addEventListener("click", () => {
      const text = serializeDocument(toDocument(this.state));
      this.download(`${this.state.design}.json`, text);
    });

    const targetSelect = el("select");
    for (const target of ["keras", "torch", "caffe", "keras-config"]) {
      const option = el("option", undefined, target);
      option.value = target;
      targetSelect.append(option);
    }
    const exportCode = el("button", undefined, "Export code");
    exportCode.addEventListener("click", () => void this.exportCode(targetSelect.value));
    const previewButton = el("button", undefined, "Preview code");
    previewButton.addEventListener("click", () => void this.previewCode(targetSelect.value));

    toolbar.append(zooSelect, loadButton, saveButton, exportIr, targetSelect, exportCode, previewButton);

    const palette = el("div", "palette");
    palette.append(el("h2", undefined, "Layers"));
    for (const entry of this.catalog) {
      const item = el("button", "palette-item", entry.kind);
      item.addEventListener("click", () => this.addFromPalette(entry));
      palette.append(item);
    }

    const surface = el("div", "surface");
    this.edgeLayer = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    this.edgeLayer.classList.add("edges");
    this.canvas = el("div", "canvas");
    this.canvas.addEventListener("click", (event) => {
      if (event.target === this.canvas) {
        this.state = select(this.state, null);
        this.render();
      }
    });
    surface.append(this.edgeLayer, this.canvas);

    this.panel = el("div", "panel");
    this.noticeBar = el("div", "notice");

    const body = el("div", "body");
    body.append(palette, surface, this.panel);
    this.root.append(toolbar, this.noticeBar, body);
  }

  private addFromPalette(entry: CatalogEntry): void {
    const base = entry.kind.toLowerCase();
    let id = base;
    let counter = 2;
    while (this.state.nodes.some((n) => n.id === id)) id = `${base}_${counter++}`;
    const params: Record<string, ParamValue> = {};
    for (const param of entry.params) {
      if (param.default !== undefined) params[param.name] = param.default;
    }
    const column = this.state.nodes.length;
    this.dispatch({
      op: "add-node",
      id,
      kind: entry.kind,
      params,
      x: 40 + (column % 6) * 170,
      y: 40 + Math.floor(column / 6) * 90,
    });
  }

  private async saveDesign(): Promise<void> {
    try {
      const document = toDocument(this.state);
      const record = this.savedId
        ? await this.api.saveDesign(this.savedId, document)
        : await this.api.createDesign(document);
      this.savedId = record.id;
      this.state = { ...this.state, dirty: false };
      this.notice = `saved as ${record.id} (rev ${record.revision})`;
    } catch (err) {
      this.showError(err);
      return;
    }
    this.render();
  }

  private async exportCode(target: string): Promise<void> {
    try {
      const payload = await this.api.codegen(toDocument(this.state), target);
      this.download(payload.filename, payload.source);
    } catch (err) {
      this.showError(err);
    }
  }

  private async previewCode(target: string): Promise<void> {
    try {
      const payload = await this.api.codegen(toDocument(this.state), target);
      this.pendingSource = payload.source;
      this.notice = payload.filename;
    } catch (err) {
      this.showError(err);
      return;
    }
    this.render();
  }

  private showError(err: unknown): void {
    if (err instanceof ApiError) {
      const detail = err.detail as { message?: string } | string;
      this.notice = typeof detail === "string" ? detail : (detail.message ?? err.message);
    } else {
      this.offline = true;
      this.notice = "server unreachable; showing last known results";
    }
    this.render();
  }

  private download(filename: string, text: string): void {
    const blob = new Blob([text], { type: "text/plain" });
    const url = URL.createObjectURL(blob);
    const anchor = el("a");
    anchor.href = url;
    anchor.download = filename;
    anchor.click();
    URL.revokeObjectURL(url);
  }

  render(): void {
    this.renderNotice();
    this.renderCanvas();
    this.renderPanel();
  }

  private renderNotice(): void {
    const flags: string[] = [];
    if (this.offline) flags.push("offline");
    if (this.state.dirty) flags.push("unsaved");
    this.noticeBar.textContent = [this.notice, flags.join(" · ")].filter(Boolean).join("  ");
    this.noticeBar.classList.toggle("offline", this.offline);
  }

  private renderCanvas(): void {
    this.canvas.textContent = "";
    const byId = new Map(this.state.nodes.map((n) => [n.id, n]));
    const flagged = new Map<string, string[]>();
    for (const diagnostic of this.state.diagnostics) {
      for (const layer of diagnostic.layers) {
        const list = flagged.get(layer) ?? [];
        list.push(`${diagnostic.rule_id}: ${diagnostic.message}`);
        flagged.set(layer, list);
      }
    }

    for (const node of this.state.nodes) {
      const box = el("div", "node");
      box.style.left = `${node.x}px`;
      box.style.top = `${node.y}px`;
      if (node.id === this.state.selection) box.classList.add("selected");
      const problems = flagged.get(node.id);
      if (problems) {
        box.classList.add("flagged");
        box.title = problems.join("\n");
      }
      box.append(el("div", "node-kind", node.kind), el("div", "node-id", node.id));
      const shape = formatShape(this.state.shapes[node.id]);
      if (shape) box.append(el("div", "node-shape", shape));
      box.addEventListener("click", (event) => {
        event.stopPropagation();
        this.state = select(this.state, node.id);
        this.render();
      });
      this.attachDrag(box, node.id);
      this.canvas.append(box);
    }

    this.edgeLayer.textContent = "";
    for (const [src, dst] of this.state.edges) {
      const a = byId.get(src);
      const b = byId.get(dst);
      if (!a || !b) continue;
      const line = document.createElementNS("http://www.w3.org/2000/svg", "line");
      line.setAttribute("x1", String(a.x + NODE_WIDTH / 2));
      line.setAttribute("y1", String(a.y + NODE_HEIGHT));
      line.setAttribute("x2", String(b.x + NODE_WIDTH / 2));
      line.setAttribute("y2", String(b.y));
      this.edgeLayer.append(line);
      const label = formatShape(this.state.shapes[src]);
      if (label) {
        const text = document.createElementNS("http://www.w3.org/2000/svg", "text");
        text.setAttribute("x", String((a.x + b.x) / 2 + NODE_WIDTH / 2 + 6));
        text.setAttribute("y", String((a.y + NODE_HEIGHT + b.y) / 2));
        text.textContent = label;
        this.edgeLayer.append(text);
      }
    }
  }

  private attachDrag(box: HTMLElement, id: string): void {
    box.addEventListener("pointerdown", (down) => {
      if ((down.target as HTMLElement).tagName === "BUTTON") return;
      down.preventDefault();
      const node = this.state.nodes.find((n) => n.id === id);
      if (!node) return;
      const offsetX = down.clientX - node.x;
      const offsetY = down.clientY - node.y;
      const move = (event: PointerEvent) => {
        this.dispatch({ op: "move-node", id, x: event.clientX - offsetX, y: event.clientY - offsetY });
      };
      const up = () => {
        window.removeEventListener("pointermove", move);
        window.removeEventListener("pointerup", up);
      };
      window.addEventListener("pointermove", move);
      window.addEventListener("pointerup", up);
    });
  }

  private renderPanel(): void {
    this.panel.textContent = "";
    if (this.pendingSource !== null) {
      const pre = el("pre", "preview", this.pendingSource);
      const close = el("button", undefined, "Close preview");
      close.addEventListener("click", () => {
        this.pendingSource = null;
        this.render();
      });
      this.panel.append(close, pre);
      return;
    }

    const selected = this.state.nodes.find((n) => n.id === this.state.selection);
    if (!selected) {
      this.panel.append(el("h2", undefined, "Diagnostics"));
      const list = el("ul", "diagnostics");
      for (const diagnostic of this.state.diagnostics) {
        list.append(
          el("li", diagnostic.severity, `${diagnostic.rule_id} ${diagnostic.severity} ${diagnostic.message}`),
        );
      }
      this.panel.append(list);
      return;
    }

    this.panel.append(el("h2", undefined, `${selected.kind} · ${selected.id}`));
    const entry = this.catalog.find((c) => c.kind === selected.kind);
    const fields = entry ? entry.params : [];
    const form = el("div", "fields");
    for (const field of fields) {
      const row = el("label", "field", field.name + " ");
      const input = el("input");
      const current = selected.params[field.name];
      input.value = Array.isArray(current) ? current.join(",") : current !== undefined ? String(current) : "";
      input.addEventListener("change", () => {
        this.dispatch({
          op: "set-param",
          id: selected.id,
          name: field.name,
          value: parseParamText(input.value, field.type),
        });
      });
      row.append(input);
      form.append(row);
    }
    if (selected.kind === "Input") {
      const row = el("label", "field", "shape ");
      const input = el("input");
      input.value = this.state.metadata[`input_shape.${selected.id}`] ?? "";
      input.addEventListener("change", () => {
        this.dispatch({ op: "set-param", id: selected.id, name: "shape", value: input.value });
      });
      row.append(input);
      form.append(row);
    }

    const connect = el("div", "field");
    const targetInput = el("input");
    targetInput.placeholder = "target node id";
    const connectButton = el("button", undefined, "Connect →");
    connectButton.addEventListener("click", () => {
      this.dispatch({ op: "connect", from: selected.id, to: targetInput.value });
    });
    connect.append(targetInput, connectButton);

    const remove = el("button", "danger", "Delete node");
    remove.addEventListener("click", () => this.dispatch({ op: "delete", id: selected.id }));

    this.panel.append(form, connect, remove);
  }
}

export async function bootstrap(root: HTMLElement, baseUrl = ""): Promise<DesignerApp> {
  const api = new ApiClient(baseUrl);
  const [catalog, zooEntries] = await Promise.all([api.catalog(), api.zooList()]);
  return new DesignerApp(
    root,
    api,
    catalog,
    zooEntries.map((e) => e.name),
  );
}

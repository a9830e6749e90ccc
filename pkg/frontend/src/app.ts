// Application shell: review queue sidebar, editor canvas, commit flow,
// and keyboard shortcuts. Talks to the service exclusively through the
// documented HTTP API.

import { ApiClient, ConflictError, ValidationError } from "./api.js";
import { BoxEditor } from "./editor.js";
import { EditorSession, ReviewQueue } from "./session.js";
import type { ImageInfo } from "./types.js";

const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

class App {
  classNames: string[] = [];
  images: ImageInfo[] = [];
  queue = new ReviewQueue([]);
  editor!: BoxEditor;
  session: EditorSession | null = null;
  currentId: number | null = null;

  async start(): Promise<void> {
    this.classNames = await api.getClasses();
    const page = await api.listImages(1, 1000);
    this.images = page.items;
    this.queue = new ReviewQueue(
      this.images.filter((i) => i.status !== "verified").map((i) => i.id),
    );
    for (const image of this.images) {
      if (image.status === "verified") this.queue.markVerified(image.id);
    }

    this.editor = new BoxEditor(el<HTMLCanvasElement>("canvas"), this.classNames);
    this.editor.onChange = () => this.refreshStatus();
    this.buildClassPicker();
    this.buildSidebar();
    this.bindButtons();
    this.bindKeys();

    const first = this.queue.next(null) ?? (this.images[0]?.id ?? null);
    if (first !== null) await this.open(first);
    else this.setStatus("no images in the dataset");
  }

  buildClassPicker(): void {
    const picker = el<HTMLSelectElement>("class-picker");
    picker.innerHTML = "";
    this.classNames.forEach((name, i) => {
      const opt = document.createElement("option");
      opt.value = String(i);
      opt.textContent = `${i}: ${name}`;
      picker.appendChild(opt);
    });
    picker.addEventListener("change", () => {
      const classId = Number(picker.value);
      this.editor.activeClass = classId;
      this.editor.setSelectedClass(classId);
    });
  }

  buildSidebar(): void {
    const list = el<HTMLUListElement>("image-list");
    list.innerHTML = "";
    for (const image of this.images) {
      const item = document.createElement("li");
      item.id = `image-item-${image.id}`;
      item.className = `status-${image.status}`;
      item.textContent = image.path;
      item.addEventListener("click", () => void this.open(image.id));
      list.appendChild(item);
    }
  }

  refreshSidebarItem(id: number, status: string): void {
    const item = document.getElementById(`image-item-${id}`);
    if (item) item.className = `status-${status}` + (id === this.currentId ? " current" : "");
  }

  async open(id: number): Promise<void> {
    try {
      const [annotations, proposals] = await Promise.all([
        api.getAnnotations(id),
        api.getProposals(id),
      ]);
      const previous = this.currentId;
      this.currentId = id;
      this.session = new EditorSession(id, annotations, proposals.proposals);
      await this.editor.load(this.session, api.imageUrl(id));
      if (previous !== null) {
        const prevImage = this.images.find((i) => i.id === previous);
        if (prevImage) this.refreshSidebarItem(previous, prevImage.status);
      }
      const image = this.images.find((i) => i.id === id);
      this.refreshSidebarItem(id, image ? image.status : "pending");
      this.refreshStatus();
    } catch (err) {
      this.setStatus(`cannot open image ${id}: ${(err as Error).message}`, true);
    }
  }

  async commit(): Promise<void> {
    if (!this.session || this.currentId === null) return;
    const { records, baseHash } = this.session.commitPayload();
    try {
      const result = await api.putAnnotations(this.currentId, records, baseHash);
      this.session.applyCommit(result.content_hash);
      this.queue.markVerified(this.currentId);
      const image = this.images.find((i) => i.id === this.currentId);
      if (image) image.status = "verified";
      this.refreshSidebarItem(this.currentId, "verified");
      this.setStatus(`verified ${records.length} boxes`);
      const next = this.queue.next(this.currentId);
      if (next !== null) await this.open(next);
    } catch (err) {
      if (err instanceof ConflictError) {
        this.showConflict(err.currentHash);
      } else if (err instanceof ValidationError) {
        this.setStatus(`rejected by the server: ${err.message}`, true);
      } else {
        this.setStatus(`commit failed: ${(err as Error).message}`, true);
      }
    }
  }

  showConflict(currentHash: string): void {
    const banner = el<HTMLDivElement>("conflict-banner");
    banner.hidden = false;
    el<HTMLButtonElement>("conflict-reload").onclick = async () => {
      banner.hidden = true;
      if (this.currentId !== null) await this.open(this.currentId);
      this.setStatus("reloaded the server version; re-apply your edits");
    };
    el<HTMLButtonElement>("conflict-overwrite").onclick = async () => {
      banner.hidden = true;
      if (this.session) this.session.baseHash = currentHash;
      await this.commit();
    };
  }

  acceptAll(): void {
    if (!this.session) return;
    const n = this.session.acceptAll();
    this.editor.render();
    this.refreshStatus();
    this.setStatus(n ? `accepted ${n} proposals` : "no proposals to accept");
  }

  refreshStatus(): void {
    if (!this.session) return;
    const dirty = this.session.dirty ? " *" : "";
    el<HTMLSpanElement>("session-info").textContent =
      `${this.session.records.length} records, ${this.session.proposalCount} proposals${dirty}`;
  }

  setStatus(message: string, isError = false): void {
    const bar = el<HTMLSpanElement>("status-message");
    bar.textContent = message;
    bar.className = isError ? "error" : "";
  }

  bindButtons(): void {
    el<HTMLButtonElement>("btn-accept-all").addEventListener("click", () => this.acceptAll());
    el<HTMLButtonElement>("btn-commit").addEventListener("click", () => void this.commit());
    el<HTMLButtonElement>("btn-delete").addEventListener("click", () => this.editor.deleteSelected());
    el<HTMLButtonElement>("btn-next").addEventListener("click", () => {
      const next = this.queue.next(this.currentId);
      if (next !== null) void this.open(next);
      else this.setStatus("queue is empty: everything is verified");
    });
  }

  bindKeys(): void {
    document.addEventListener("keydown", (e) => {
      if (e.target instanceof HTMLInputElement || e.target instanceof HTMLSelectElement) return;
      switch (e.key) {
        case "a":
          this.acceptAll();
          break;
        case "Enter":
        case "s":
          void this.commit();
          break;
        case "Delete":
        case "Backspace":
          this.editor.deleteSelected();
          break;
        case "n":
        case "ArrowRight": {
          const next = this.queue.next(this.currentId);
          if (next !== null) void this.open(next);
          break;
        }
        default:
          if (/^\d$/.test(e.key)) {
            const classId = Number(e.key);
            if (classId < this.classNames.length) {
              this.editor.activeClass = classId;
              this.editor.setSelectedClass(classId);
              el<HTMLSelectElement>("class-picker").value = String(classId);
            }
          }
      }
    });
  }
}

void new App().start();

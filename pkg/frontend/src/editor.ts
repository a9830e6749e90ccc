// Canvas box editor: renders the image with its working boxes and turns
// pointer gestures into session edits. Committed and accepted boxes draw
// solid, machine proposals draw dashed so the reviewer can always tell
// model output from ground truth.

import type { EditorSession, WorkingBox } from "./session.js";

const PALETTE = [
  "#4fc3f7", "#ffb74d", "#81c784", "#e57373", "#ba68c8",
  "#ffd54f", "#4db6ac", "#f06292", "#9575cd", "#aed581",
  "#ff8a65", "#90a4ae",
];

const HANDLE_PX = 7;

type DragMode =
  | { kind: "none" }
  | { kind: "draw"; startX: number; startY: number }
  | { kind: "move"; index: number; grabX: number; grabY: number }
  | { kind: "resize"; index: number; corner: string };

interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
  imageW: number;
  imageH: number;
}

export class BoxEditor {
  private ctx: CanvasRenderingContext2D;
  private image: HTMLImageElement | null = null;
  private view: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0, imageW: 1, imageH: 1 };
  private drag: DragMode = { kind: "none" };
  selectedIndex: number | null = null;
  session: EditorSession | null = null;
  activeClass = 0;
  onChange: () => void = () => {};

  constructor(
    private canvas: HTMLCanvasElement,
    private classNames: string[],
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.pointerUp(e));
  }

  classColor(classId: number): string {
    return PALETTE[classId % PALETTE.length];
  }

  async load(session: EditorSession, imageUrl: string): Promise<void> {
    this.session = session;
    this.selectedIndex = null;
    this.image = await new Promise<HTMLImageElement>((resolve, reject) => {
      const img = new Image();
      img.onload = () => resolve(img);
      img.onerror = () => reject(new Error(`cannot load ${imageUrl}`));
      img.src = imageUrl;
    });
    this.fit();
    this.render();
  }

  private fit(): void {
    if (!this.image) return;
    const iw = this.image.naturalWidth;
    const ih = this.image.naturalHeight;
    const scale = Math.min(this.canvas.width / iw, this.canvas.height / ih);
    this.view = {
      scale,
      offsetX: (this.canvas.width - iw * scale) / 2,
      offsetY: (this.canvas.height - ih * scale) / 2,
      imageW: iw,
      imageH: ih,
    };
  }

  // normalized box -> canvas rect
  private toScreen(b: WorkingBox): { x: number; y: number; w: number; h: number } {
    const v = this.view;
    const x = (b.cx - b.w / 2) * v.imageW * v.scale + v.offsetX;
    const y = (b.cy - b.h / 2) * v.imageH * v.scale + v.offsetY;
    return { x, y, w: b.w * v.imageW * v.scale, h: b.h * v.imageH * v.scale };
  }

  private toNorm(px: number, py: number): { x: number; y: number } {
    const v = this.view;
    return {
      x: (px - v.offsetX) / (v.imageW * v.scale),
      y: (py - v.offsetY) / (v.imageH * v.scale),
    };
  }

  render(): void {
    const { ctx, canvas } = this;
    ctx.fillStyle = "#10151c";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (!this.image || !this.session) return;
    const v = this.view;
    ctx.drawImage(
      this.image,
      v.offsetX,
      v.offsetY,
      v.imageW * v.scale,
      v.imageH * v.scale,
    );
    this.session.boxes.forEach((box, index) => this.drawBox(box, index));
  }

  private drawBox(box: WorkingBox, index: number): void {
    const { ctx } = this;
    const r = this.toScreen(box);
    const color = this.classColor(box.classId);
    ctx.save();
    ctx.lineWidth = index === this.selectedIndex ? 3 : 2;
    ctx.strokeStyle = color;
    ctx.setLineDash(box.origin === "proposal" ? [6, 4] : []);
    ctx.strokeRect(r.x, r.y, r.w, r.h);
    const name = this.classNames[box.classId] ?? `#${box.classId}`;
    const label =
      box.origin === "proposal" && box.confidence !== undefined
        ? `${name} ${(box.confidence * 100).toFixed(0)}%`
        : name;
    ctx.font = "12px system-ui, sans-serif";
    const tw = ctx.measureText(label).width + 8;
    ctx.fillStyle = color;
    ctx.fillRect(r.x, r.y - 16, tw, 16);
    ctx.fillStyle = "#10151c";
    ctx.fillText(label, r.x + 4, r.y - 4);
    if (index === this.selectedIndex) {
      ctx.setLineDash([]);
      ctx.fillStyle = color;
      for (const [hx, hy] of this.handlePositions(r)) {
        ctx.fillRect(hx - HANDLE_PX / 2, hy - HANDLE_PX / 2, HANDLE_PX, HANDLE_PX);
      }
    }
    ctx.restore();
  }

  private handlePositions(r: { x: number; y: number; w: number; h: number }): [number, number][] {
    return [
      [r.x, r.y],
      [r.x + r.w, r.y],
      [r.x, r.y + r.h],
      [r.x + r.w, r.y + r.h],
    ];
  }

  private hitHandle(px: number, py: number, index: number): string | null {
    if (!this.session) return null;
    const r = this.toScreen(this.session.boxes[index]);
    const corners: [string, number, number][] = [
      ["nw", r.x, r.y],
      ["ne", r.x + r.w, r.y],
      ["sw", r.x, r.y + r.h],
      ["se", r.x + r.w, r.y + r.h],
    ];
    for (const [name, hx, hy] of corners) {
      if (Math.abs(px - hx) <= HANDLE_PX && Math.abs(py - hy) <= HANDLE_PX) return name;
    }
    return null;
  }

  private hitBox(px: number, py: number): number | null {
    if (!this.session) return null;
    // smallest box wins so nested boxes stay reachable
    let best: number | null = null;
    let bestArea = Infinity;
    this.session.boxes.forEach((box, index) => {
      const r = this.toScreen(box);
      if (px >= r.x && px <= r.x + r.w && py >= r.y && py <= r.y + r.h) {
        const area = r.w * r.h;
        if (area < bestArea) {
          best = index;
          bestArea = area;
        }
      }
    });
    return best;
  }

  private eventPos(e: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((e.clientX - rect.left) / rect.width) * this.canvas.width,
      y: ((e.clientY - rect.top) / rect.height) * this.canvas.height,
    };
  }

  private pointerDown(e: PointerEvent): void {
    if (!this.session) return;
    this.canvas.setPointerCapture(e.pointerId);
    const { x, y } = this.eventPos(e);
    if (this.selectedIndex !== null) {
      const corner = this.hitHandle(x, y, this.selectedIndex);
      if (corner) {
        this.drag = { kind: "resize", index: this.selectedIndex, corner };
        return;
      }
    }
    const hit = this.hitBox(x, y);
    if (hit !== null) {
      this.selectedIndex = hit;
      const box = this.session.boxes[hit];
      const n = this.toNorm(x, y);
      this.drag = { kind: "move", index: hit, grabX: n.x - box.cx, grabY: n.y - box.cy };
    } else {
      this.selectedIndex = null;
      this.drag = { kind: "draw", startX: x, startY: y };
    }
    this.render();
    this.onChange();
  }

  private pointerMove(e: PointerEvent): void {
    if (!this.session || this.drag.kind === "none") return;
    const { x, y } = this.eventPos(e);
    if (this.drag.kind === "move") {
      const n = this.toNorm(x, y);
      const box = this.session.boxes[this.drag.index];
      this.session.updateBox(this.drag.index, {
        cx: n.x - this.drag.grabX,
        cy: n.y - this.drag.grabY,
        w: box.w,
        h: box.h,
      });
    } else if (this.drag.kind === "resize") {
      const box = this.session.boxes[this.drag.index];
      const n = this.toNorm(x, y);
      let x1 = box.cx - box.w / 2;
      let y1 = box.cy - box.h / 2;
      let x2 = box.cx + box.w / 2;
      let y2 = box.cy + box.h / 2;
      if (this.drag.corner.includes("w")) x1 = n.x;
      if (this.drag.corner.includes("e")) x2 = n.x;
      if (this.drag.corner.includes("n")) y1 = n.y;
      if (this.drag.corner.includes("s")) y2 = n.y;
      if (x2 > x1 && y2 > y1) {
        this.session.updateBox(this.drag.index, {
          cx: (x1 + x2) / 2,
          cy: (y1 + y2) / 2,
          w: x2 - x1,
          h: y2 - y1,
        });
      }
    } else if (this.drag.kind === "draw") {
      this.render();
      const { ctx } = this;
      ctx.save();
      ctx.strokeStyle = this.classColor(this.activeClass);
      ctx.setLineDash([4, 3]);
      ctx.strokeRect(
        Math.min(this.drag.startX, x),
        Math.min(this.drag.startY, y),
        Math.abs(x - this.drag.startX),
        Math.abs(y - this.drag.startY),
      );
      ctx.restore();
      return;
    }
    this.render();
    this.onChange();
  }

  private pointerUp(e: PointerEvent): void {
    if (!this.session) return;
    const drag = this.drag;
    this.drag = { kind: "none" };
    if (drag.kind === "draw") {
      const { x, y } = this.eventPos(e);
      const a = this.toNorm(drag.startX, drag.startY);
      const b = this.toNorm(x, y);
      const box = {
        cx: (a.x + b.x) / 2,
        cy: (a.y + b.y) / 2,
        w: Math.abs(b.x - a.x),
        h: Math.abs(b.y - a.y),
      };
      // reject degenerate click-drags before they ever reach the server
      const minSide = 3 / (this.view.imageW * this.view.scale);
      if (box.w >= minSide && box.h >= minSide) {
        const added = this.session.addBox(box, this.activeClass);
        if (added) this.selectedIndex = this.session.boxes.length - 1;
      }
    }
    this.render();
    this.onChange();
  }

  deleteSelected(): void {
    if (this.session && this.selectedIndex !== null) {
      this.session.removeBox(this.selectedIndex);
      this.selectedIndex = null;
      this.render();
      this.onChange();
    }
  }

  setSelectedClass(classId: number): void {
    if (this.session && this.selectedIndex !== null) {
      this.session.setClass(this.selectedIndex, classId);
      this.render();
      this.onChange();
    }
  }
}

// Editing state for one image: the working box list, its dirty flag, and
// the content hash the server must still match at commit time. Pure logic,
// no DOM: the canvas editor and the tests both drive it through this API.

import type { AnnotationsResponse, BoxRecord, Proposal } from "./types.js";

export type BoxOrigin = "committed" | "proposal" | "manual";

export interface WorkingBox {
  classId: number;
  cx: number;
  cy: number;
  w: number;
  h: number;
  origin: BoxOrigin;
  confidence?: number;
}

/** Snap to the 6-decimal wire grid; at most 5e-7 displacement per axis. */
export function quantize(value: number): number {
  return Math.round(value * 1e6) / 1e6;
}

export function isValidBox(b: { cx: number; cy: number; w: number; h: number }): boolean {
  return (
    b.cx >= 0 && b.cx <= 1 && b.cy >= 0 && b.cy <= 1 && b.w > 0 && b.w <= 1 && b.h > 0 && b.h <= 1
  );
}

/** Clamp a dragged box so its center stays inside the unit square. */
export function clampBox(b: { cx: number; cy: number; w: number; h: number }): {
  cx: number;
  cy: number;
  w: number;
  h: number;
} {
  return {
    cx: Math.min(1, Math.max(0, b.cx)),
    cy: Math.min(1, Math.max(0, b.cy)),
    w: Math.min(1, Math.max(1e-6, b.w)),
    h: Math.min(1, Math.max(1e-6, b.h)),
  };
}

function toRecord(b: WorkingBox): BoxRecord {
  return {
    class_id: b.classId,
    cx: quantize(b.cx),
    cy: quantize(b.cy),
    w: quantize(b.w),
    h: quantize(b.h),
  };
}

function sameRecords(a: BoxRecord[], b: BoxRecord[]): boolean {
  if (a.length !== b.length) return false;
  const key = (r: BoxRecord) => `${r.class_id} ${r.cx} ${r.cy} ${r.w} ${r.h}`;
  const as = a.map(key).sort();
  const bs = b.map(key).sort();
  return as.every((v, i) => v === bs[i]);
}

export class EditorSession {
  boxes: WorkingBox[] = [];
  baseHash: string;
  private committed: BoxRecord[];

  constructor(
    public readonly imageId: number,
    annotations: AnnotationsResponse,
    proposals: Proposal[],
  ) {
    this.baseHash = annotations.content_hash;
    this.committed = annotations.records.map((r) => ({ ...r }));
    for (const r of annotations.records) {
      this.boxes.push({ classId: r.class_id, cx: r.cx, cy: r.cy, w: r.w, h: r.h, origin: "committed" });
    }
    for (const p of proposals) {
      this.boxes.push({
        classId: p.class_id,
        cx: p.cx,
        cy: p.cy,
        w: p.w,
        h: p.h,
        origin: "proposal",
        confidence: p.confidence,
      });
    }
  }

  /** Boxes that will be committed; unaccepted proposals are overlays only. */
  get records(): BoxRecord[] {
    return this.boxes.filter((b) => b.origin !== "proposal").map(toRecord);
  }

  get dirty(): boolean {
    return !sameRecords(this.records, this.committed);
  }

  get proposalCount(): number {
    return this.boxes.filter((b) => b.origin === "proposal").length;
  }

  /** Add a drawn box; rejects zero-area and out-of-range boxes. */
  addBox(box: { cx: number; cy: number; w: number; h: number }, classId: number): WorkingBox | null {
    const snapped = {
      cx: quantize(box.cx),
      cy: quantize(box.cy),
      w: quantize(box.w),
      h: quantize(box.h),
    };
    if (!isValidBox(snapped)) return null;
    const working: WorkingBox = { classId, ...snapped, origin: "manual" };
    this.boxes.push(working);
    return working;
  }

  /** Geometry edits turn a proposal into a reviewer-owned box. */
  updateBox(index: number, geom: { cx: number; cy: number; w: number; h: number }): boolean {
    const clamped = clampBox(geom);
    if (!isValidBox(clamped)) return false;
    const box = this.boxes[index];
    this.boxes[index] = {
      ...box,
      ...clamped,
      origin: box.origin === "proposal" ? "manual" : box.origin,
    };
    return true;
  }

  setClass(index: number, classId: number): void {
    const box = this.boxes[index];
    this.boxes[index] = {
      ...box,
      classId,
      origin: box.origin === "proposal" ? "manual" : box.origin,
    };
  }

  removeBox(index: number): void {
    this.boxes.splice(index, 1);
  }

  acceptBox(index: number): void {
    if (this.boxes[index].origin === "proposal") {
      this.boxes[index] = { ...this.boxes[index], origin: "manual" };
    }
  }

  acceptAll(): number {
    let n = 0;
    for (let i = 0; i < this.boxes.length; i++) {
      if (this.boxes[i].origin === "proposal") {
        this.acceptBox(i);
        n++;
      }
    }
    return n;
  }

  commitPayload(): { records: BoxRecord[]; baseHash: string } {
    return { records: this.records, baseHash: this.baseHash };
  }

  /** Fold a successful commit back in: new hash, clean state. */
  applyCommit(newHash: string): void {
    this.baseHash = newHash;
    this.committed = this.records;
    this.boxes = this.boxes
      .filter((b) => b.origin !== "proposal")
      .map((b) => ({ ...b, origin: "committed" as BoxOrigin }));
  }
}

/** Ordered review queue; verified images never come back within a session. */
export class ReviewQueue {
  private order: number[];
  private done = new Set<number>();

  constructor(imageIds: number[]) {
    this.order = [...imageIds];
  }

  get pending(): number[] {
    return this.order.filter((id) => !this.done.has(id));
  }

  markVerified(id: number): void {
    this.done.add(id);
  }

  /** Next pending image after `current`, wrapping around; null when done. */
  next(current: number | null): number | null {
    const pending = this.pending;
    if (pending.length === 0) return null;
    if (current === null) return pending[0];
    const after = this.order.indexOf(current);
    for (let step = 1; step <= this.order.length; step++) {
      const candidate = this.order[(after + step) % this.order.length];
      if (!this.done.has(candidate)) return candidate;
    }
    return null;
  }
}

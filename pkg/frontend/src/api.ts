// Typed fetch client for the review service. All box coordinates on the
// wire are normalized center format.

import type {
  AnnotationsResponse,
  BoxRecord,
  CommitResponse,
  ImagePage,
  ProposalsResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

/** The server rejected a commit because our base hash is stale. */
export class ConflictError extends ApiError {
  constructor(public currentHash: string) {
    super(409, "annotation changed on the server");
  }
}

/** The server rejected a record as invalid (should be caught client-side). */
export class ValidationError extends ApiError {
  constructor(detail: string) {
    super(422, detail);
  }
}

async function fail(resp: Response): Promise<never> {
  let detail = resp.statusText;
  let body: unknown = null;
  try {
    body = await resp.json();
    const d = (body as { detail?: unknown }).detail;
    if (typeof d === "string") detail = d;
    else if (d && typeof d === "object") detail = JSON.stringify(d);
  } catch {
    // non-JSON error body; keep the status text
  }
  if (resp.status === 409) {
    const d = (body as { detail?: { current_hash?: string } }).detail;
    throw new ConflictError(d?.current_hash ?? "");
  }
  if (resp.status === 422) throw new ValidationError(detail);
  throw new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.baseUrl + path);
    if (!resp.ok) await fail(resp);
    return (await resp.json()) as T;
  }

  async getClasses(): Promise<string[]> {
    const body = await this.getJson<{ names: string[] }>("/api/classes");
    return body.names;
  }

  listImages(page = 1, pageSize = 200, status?: string): Promise<ImagePage> {
    const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
    if (status) params.set("status", status);
    return this.getJson<ImagePage>(`/api/images?${params}`);
  }

  imageUrl(id: number): string {
    return `${this.baseUrl}/api/images/${id}`;
  }

  getAnnotations(id: number): Promise<AnnotationsResponse> {
    return this.getJson<AnnotationsResponse>(`/api/images/${id}/annotations`);
  }

  async getProposals(id: number): Promise<ProposalsResponse> {
    return this.getJson<ProposalsResponse>(`/api/images/${id}/proposals`);
  }

  async putAnnotations(
    id: number,
    records: BoxRecord[],
    baseHash: string,
  ): Promise<CommitResponse> {
    const resp = await fetch(`${this.baseUrl}/api/images/${id}/annotations`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ records, base_hash: baseHash }),
    });
    if (!resp.ok) await fail(resp);
    return (await resp.json()) as CommitResponse;
  }
}

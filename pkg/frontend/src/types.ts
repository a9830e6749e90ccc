// Wire types of the review service HTTP API.

export interface BoxRecord {
  class_id: number;
  cx: number;
  cy: number;
  w: number;
  h: number;
}

export interface Proposal extends BoxRecord {
  confidence: number;
}

export interface ImageInfo {
  id: number;
  path: string;
  width: number | null;
  height: number | null;
  status: "pending" | "proposed" | "verified";
  provenance: string | null;
  updated_at: string | null;
}

export interface ImagePage {
  items: ImageInfo[];
  total: number;
  page: number;
  page_size: number;
}

export interface AnnotationsResponse {
  records: BoxRecord[];
  content_hash: string;
  status: string;
}

export interface ProposalsResponse {
  proposals: Proposal[];
}

export interface CommitResponse {
  content_hash: string;
  status: string;
}

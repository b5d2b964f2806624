/** Wire types of the session service API. */

export type Label = "relevant" | "irrelevant" | "unknown";

export type SessionStatus = "active" | "budget_exhausted" | "completed" | "failed";

export interface BatchItem {
  doc_id: string;
  text: string;
  score: number;
  rank: number;
}

export interface BatchResponse {
  round: number;
  status: SessionStatus;
  batch: BatchItem[];
}

export interface QueueEntry {
  terms: string[];
  mre: number;
}

export interface StatusResponse {
  status: SessionStatus;
  labels_used: number;
  budget: number;
  best_mre: number | null;
  queue: QueueEntry[];
}

export interface SubmitLabelsResponse extends StatusResponse {
  mre_trajectory: number[];
}

export interface CreateSessionRequest {
  prototype_text?: string;
  topic_ref?: string;
  engine?: string;
  params?: Partial<{
    itr: number;
    runs: number;
    minq: number;
    maxq: number;
    rlimit: number;
    num_queries: number;
    seed: number | null;
  }>;
  label_budget?: number;
  batch_size?: number;
  expansions?: string[];
}

export interface ExportDoc {
  id: string;
  text: string;
  timestamp: number | null;
}

export interface ExportResponse {
  status: SessionStatus;
  queries: QueueEntry[];
  docs: ExportDoc[];
  labels: Record<string, Label>;
}

export interface WireError {
  error: string;
  detail: string;
  fields?: string[];
}

/** Client-side session state.
 *
 * All labeling logic lives here, framework-free, so the invariants are
 * directly testable: no doc id is ever rendered twice in one session,
 * submit stays disabled until every batch row has a selection, and a
 * server-side atomic rejection preserves every local selection while
 * highlighting the offending rows.
 */

import type {
  BatchItem,
  BatchResponse,
  Label,
  QueueEntry,
  SessionStatus,
  StatusResponse,
  SubmitLabelsResponse,
} from "./types.js";

export interface SessionView {
  sessionId: string | null;
  status: SessionStatus;
  round: number;
  batch: BatchItem[];
  selections: ReadonlyMap<string, Label>;
  labelsUsed: number;
  budget: number;
  bestMre: number | null;
  queue: QueueEntry[];
  mreTrajectory: number[];
  offendingIds: string[];
  networkError: string | null;
}

export class SessionStore {
  private sessionId: string | null = null;
  private status: SessionStatus = "active";
  private round = 0;
  private batch: BatchItem[] = [];
  private selections = new Map<string, Label>();
  private labelsUsed = 0;
  private budget = 0;
  private bestMre: number | null = null;
  private queue: QueueEntry[] = [];
  private mreTrajectory: number[] = [];
  private seenDocIds = new Set<string>();
  private offendingIds: string[] = [];
  private networkError: string | null = null;
  private listeners: Array<() => void> = [];

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  get view(): SessionView {
    return {
      sessionId: this.sessionId,
      status: this.status,
      round: this.round,
      batch: [...this.batch],
      selections: new Map(this.selections),
      labelsUsed: this.labelsUsed,
      budget: this.budget,
      bestMre: this.bestMre,
      queue: [...this.queue],
      mreTrajectory: [...this.mreTrajectory],
      offendingIds: [...this.offendingIds],
      networkError: this.networkError,
    };
  }

  /** Doc ids ever shown in this session (the no-repeat registry). */
  get renderedDocIds(): ReadonlySet<string> {
    return this.seenDocIds;
  }

  startSession(sessionId: string, budget: number): void {
    this.sessionId = sessionId;
    this.status = "active";
    this.round = 0;
    this.batch = [];
    this.selections.clear();
    this.labelsUsed = 0;
    this.budget = budget;
    this.bestMre = null;
    this.queue = [];
    this.mreTrajectory = [];
    this.seenDocIds.clear();
    this.offendingIds = [];
    this.networkError = null;
    this.notify();
  }

  /** Install a served batch. Rejects any doc id already rendered in this
   * session; the server must never repeat one. */
  applyBatch(response: BatchResponse): void {
    for (const item of response.batch) {
      if (this.seenDocIds.has(item.doc_id) && !this.batch.some((b) => b.doc_id === item.doc_id)) {
        throw new Error(`server repeated doc id ${item.doc_id} across rounds`);
      }
    }
    const isSameBatch =
      this.batch.length === response.batch.length &&
      this.batch.every((b, i) => b.doc_id === response.batch[i].doc_id);
    this.status = response.status;
    this.round = response.round;
    this.batch = [...response.batch];
    for (const item of response.batch) this.seenDocIds.add(item.doc_id);
    if (!isSameBatch) {
      this.selections.clear();
      this.offendingIds = [];
    }
    this.networkError = null;
    this.notify();
  }

  select(docId: string, label: Label): void {
    if (!this.batch.some((item) => item.doc_id === docId)) {
      throw new Error(`doc id ${docId} is not in the current batch`);
    }
    this.selections.set(docId, label);
    this.offendingIds = this.offendingIds.filter((id) => id !== docId);
    this.notify();
  }

  /** Submit is enabled only when every batch row carries a selection. */
  get submitReady(): boolean {
    return this.batch.length > 0 && this.batch.every((item) => this.selections.has(item.doc_id));
  }

  labelsPayload(): Array<{ doc_id: string; label: Label }> {
    if (!this.submitReady) {
      throw new Error("every batch item needs a selection before submitting");
    }
    return this.batch.map((item) => ({
      doc_id: item.doc_id,
      label: this.selections.get(item.doc_id) as Label,
    }));
  }

  applySubmitSuccess(response: SubmitLabelsResponse): void {
    this.status = response.status;
    this.labelsUsed = response.labels_used;
    this.budget = response.budget;
    this.bestMre = response.best_mre;
    this.queue = [...response.queue];
    this.mreTrajectory = [...response.mre_trajectory];
    this.batch = [];
    this.selections.clear();
    this.offendingIds = [];
    this.networkError = null;
    this.notify();
  }

  /** Atomic rejection: the server changed nothing, so keep every local
   * selection and highlight the rows it named. */
  applySubmitRejection(offending: string[]): void {
    this.offendingIds = [...offending];
    this.notify();
  }

  applyStatus(response: StatusResponse): void {
    this.status = response.status;
    this.labelsUsed = response.labels_used;
    this.budget = response.budget;
    this.bestMre = response.best_mre;
    this.queue = [...response.queue];
    this.networkError = null;
    this.notify();
  }

  setNetworkError(message: string): void {
    this.networkError = message;
    this.notify();
  }
}

/** Session state for the annotation console.
 *
 * Holds the working text, the user's short-form marks, and a mirror of
 * the latest expansion response.  Candidates are kept exactly in server
 * order (the UI never re-sorts), stale expansion responses are dropped
 * by sequence number, and every feedback payload is checked against the
 * recorded wire schema before it leaves the client.
 */

import { ApiClient, ApiError } from "./api.js";
import { assertValid, type JsonSchema } from "./schema.js";
import type { ExpandSlotPayload } from "./types.js";

export interface Mark {
  start: number;
  end: number;
  text: string;
}

export type Selection =
  | { kind: "candidate"; index: number }
  | { kind: "freeText"; text: string };

export interface SessionSnapshot {
  text: string;
  marks: Mark[];
  markedText: string;
  slots: ExpandSlotPayload[];
  selections: (Selection | null)[];
  requestId: string | null;
  adapterVersion: number;
  expandInFlight: boolean;
  trainingInProgress: boolean;
  status: string;
}

export interface SessionOptions {
  profile: string;
  topK?: number;
  feedbackSchema: JsonSchema;
  onChange?: (snapshot: SessionSnapshot) => void;
  onError?: (message: string, retry: () => void) => void;
}

export class Session {
  readonly profile: string;
  readonly topK: number;

  private text = "";
  private marks: Mark[] = [];
  private slots: ExpandSlotPayload[] = [];
  private selections: (Selection | null)[] = [];
  private requestId: string | null = null;
  private adapterVersion = 0;
  private expandSeq = 0;
  private expandInFlight = false;
  private trainingInProgress = false;
  private status = "ready";

  constructor(
    private readonly api: ApiClient,
    private readonly options: SessionOptions,
  ) {
    this.profile = options.profile;
    this.topK = options.topK ?? 5;
  }

  snapshot(): SessionSnapshot {
    return {
      text: this.text,
      marks: [...this.marks],
      markedText: this.markedText(),
      slots: this.slots,
      selections: [...this.selections],
      requestId: this.requestId,
      adapterVersion: this.adapterVersion,
      expandInFlight: this.expandInFlight,
      trainingInProgress: this.trainingInProgress,
      status: this.status,
    };
  }

  private emit(): void {
    this.options.onChange?.(this.snapshot());
  }

  private fail(message: string, retry: () => void): void {
    this.status = message;
    this.options.onError?.(message, retry);
    this.emit();
  }

  setText(text: string): void {
    this.text = text;
    this.marks = [];
    this.slots = [];
    this.selections = [];
    this.requestId = null;
    this.status = "ready";
    this.emit();
  }

  /** Wrap [start, end) as a short-form mark; overlaps are rejected. */
  mark(start: number, end: number): boolean {
    if (!(0 <= start && start < end && end <= this.text.length)) {
      this.fail("selection out of range", () => undefined);
      return false;
    }
    const overlapping = this.marks.some(
      (m) => start < m.end && m.start < end,
    );
    if (overlapping) {
      this.fail("selection overlaps an existing mark", () => undefined);
      return false;
    }
    this.marks.push({ start, end, text: this.text.slice(start, end) });
    this.marks.sort((a, b) => a.start - b.start);
    this.slots = [];
    this.selections = [];
    this.requestId = null;
    this.status = "ready";
    this.emit();
    return true;
  }

  unmark(index: number): void {
    this.marks.splice(index, 1);
    this.slots = [];
    this.selections = [];
    this.requestId = null;
    this.emit();
  }

  /** The request text: every mark spliced into an [ABB:...] marker. */
  markedText(): string {
    let out = this.text;
    for (let i = this.marks.length - 1; i >= 0; i -= 1) {
      const mark = this.marks[i];
      out = `${out.slice(0, mark.start)}[ABB:${mark.text}]${out.slice(mark.end)}`;
    }
    return out;
  }

  canExpand(): boolean {
    return this.marks.length > 0 && !this.expandInFlight;
  }

  async requestExpansions(): Promise<void> {
    // The UI allows one in-flight request (canExpand drives the button),
    // but a programmatic re-request supersedes: the sequence number makes
    // any response from an older request a discarded stale response.
    if (this.marks.length === 0) return;
    this.expandSeq += 1;
    const seq = this.expandSeq;
    this.expandInFlight = true;
    this.status = "expanding...";
    this.emit();
    try {
      const response = await this.api.expand({
        text: this.markedText(),
        profile: this.profile,
        top_k: this.topK,
      });
      if (seq !== this.expandSeq) {
        return; // stale response: a newer request superseded this one
      }
      this.slots = response.slots;
      this.selections = response.slots.map(() => null);
      this.requestId = response.request_id;
      this.adapterVersion = response.adapter_version;
      this.status = "ranked";
    } catch (error) {
      if (seq !== this.expandSeq) return;
      this.fail(describe(error), () => void this.requestExpansions());
      return;
    } finally {
      if (seq === this.expandSeq) {
        this.expandInFlight = false;
      }
    }
    this.emit();
  }

  choose(slot: number, candidateIndex: number): void {
    if (slot >= this.slots.length) return;
    if (candidateIndex >= this.slots[slot].candidates.length) return;
    this.selections[slot] = { kind: "candidate", index: candidateIndex };
    this.emit();
  }

  chooseFreeText(slot: number, text: string): void {
    if (slot >= this.slots.length || !text) return;
    this.selections[slot] = { kind: "freeText", text };
    this.emit();
  }

  /** Build the feedback payload for a slot; null when nothing is chosen. */
  feedbackPayload(slot: number): Record<string, unknown> | null {
    const selection = this.selections[slot];
    if (!selection || this.requestId === null) return null;
    const chosen =
      selection.kind === "candidate"
        ? this.slotCandidateToPoolIndex(slot, selection.index)
        : selection.text;
    return {
      request_id: this.requestId,
      slot,
      profile: this.profile,
      chosen,
      source: "annotation-ui",
    };
  }

  /** The service indexes feedback against its candidate pool; candidates
   * arrive ranked, so translate a display position into the expansion
   * string, which the service maps back to its pool. */
  private slotCandidateToPoolIndex(slot: number, index: number): string {
    return this.slots[slot].candidates[index].expansion;
  }

  async submitFeedback(slot: number): Promise<boolean> {
    const payload = this.feedbackPayload(slot);
    if (!payload) {
      this.fail("choose a candidate first", () => undefined);
      return false;
    }
    assertValid(payload, this.options.feedbackSchema, "/v1/feedback payload");
    try {
      await this.api.feedback(payload as never);
      this.status = `feedback recorded for slot ${slot}`;
      this.emit();
      return true;
    } catch (error) {
      this.fail(describe(error), () => void this.submitFeedback(slot));
      return false;
    }
  }

  async triggerPersonalize(epochs = 25, learningRate = 2e-2): Promise<boolean> {
    if (this.trainingInProgress) return false;
    this.trainingInProgress = true;
    this.status = "training...";
    this.emit();
    try {
      const response = await this.api.personalize({
        profile: this.profile,
        epochs,
        learning_rate: learningRate,
      });
      this.adapterVersion = response.adapter_version;
      this.status = `adapter updated to version ${response.adapter_version}`;
      this.emit();
      // Re-query so the user sees the new ranking immediately.
      if (this.marks.length > 0) {
        await this.requestExpansions();
      }
      return true;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.fail("training in progress", () => void this.triggerPersonalize());
      } else {
        this.fail(describe(error), () => void this.triggerPersonalize());
      }
      return false;
    } finally {
      this.trainingInProgress = false;
      this.emit();
    }
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `service error ${error.status}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}

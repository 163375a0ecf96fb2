/**
 * Editing session state machine, independent of rendering.
 *
 * All geometry changes originate from service responses; the editor never
 * computes model math. One edit request is in flight per session at a
 * time; further inputs are queued and coalesced to the latest value.
 * Semantic sliders are debounced. Every accepted edit pushes the replaced
 * (z, mesh) snapshot onto the undo stack.
 */

import type { EditResponse, Handle, MeshData, SurfmorphClient } from "./api.js";
import { UndoStack, type Snapshot } from "./undo.js";

export const SLIDER_DEBOUNCE_MS = 150;

type PendingEdit =
  | { kind: "handles"; handles: Handle[]; commit: boolean }
  | { kind: "semantic"; label: string; alpha: number };

export interface EditorEvents {
  onMesh?: (mesh: MeshData) => void;
  onResiduals?: (before: number[], after: number[]) => void;
  onError?: (message: string) => void;
}

export class EditorSession {
  private sessionId = "";
  private current: Snapshot | null = null;
  readonly undoHistory = new UndoStack();
  private inFlight = false;
  private queued: PendingEdit | null = null;
  private sliderTimers = new Map<string, ReturnType<typeof setTimeout>>();
  /** alpha currently applied on the service, per label (sliders send deltas) */
  private appliedAlpha = new Map<string, number>();

  constructor(
    private readonly client: SurfmorphClient,
    private readonly events: EditorEvents = {},
  ) {}

  get state(): Snapshot | null {
    return this.current;
  }

  get id(): string {
    return this.sessionId;
  }

  async start(init: { z?: number[]; sample?: boolean; seed?: number } = {}): Promise<Snapshot> {
    const session = await this.client.createSession(init);
    this.sessionId = session.session_id;
    this.current = { z: session.z, mesh: session.mesh };
    this.undoHistory.clear();
    this.appliedAlpha.clear();
    this.events.onMesh?.(session.mesh);
    return this.current;
  }

  /** Commit a drag: POST the handle displacements, push undo, render. */
  dragCommit(handles: Handle[], commit = false): Promise<void> {
    return this.submit({ kind: "handles", handles, commit });
  }

  /**
   * Slider moved: debounce, then send the delta from the alpha already
   * applied on the service so absolute slider values round-trip exactly.
   */
  semanticSlider(label: string, alpha: number): void {
    const timer = this.sliderTimers.get(label);
    if (timer) clearTimeout(timer);
    this.sliderTimers.set(
      label,
      setTimeout(() => {
        this.sliderTimers.delete(label);
        const applied = this.appliedAlpha.get(label) ?? 0;
        const delta = alpha - applied;
        if (delta === 0) return;
        this.appliedAlpha.set(label, alpha);
        void this.submit({ kind: "semantic", label, alpha: delta });
      }, SLIDER_DEBOUNCE_MS),
    );
  }

  undo(): boolean {
    if (!this.current) return false;
    const prev = this.undoHistory.undo(this.current);
    if (!prev) return false;
    this.current = prev;
    this.events.onMesh?.(prev.mesh);
    return true;
  }

  redo(): boolean {
    if (!this.current) return false;
    const next = this.undoHistory.redo(this.current);
    if (!next) return false;
    this.current = next;
    this.events.onMesh?.(next.mesh);
    return true;
  }

  /** Wait for the in-flight and queued edits to settle (used by tests). */
  async idle(): Promise<void> {
    while (this.inFlight || this.queued || this.sliderTimers.size) {
      await new Promise((resolve) => setTimeout(resolve, 10));
    }
  }

  private async submit(edit: PendingEdit): Promise<void> {
    if (this.inFlight) {
      this.queued = edit; // coalesce: only the latest queued edit survives
      return;
    }
    this.inFlight = true;
    try {
      let response: EditResponse;
      if (edit.kind === "handles") {
        response = await this.client.editHandles(
          this.sessionId, edit.handles, edit.commit,
        );
        if (response.residual_before && response.residual_after) {
          this.events.onResiduals?.(
            response.residual_before, response.residual_after,
          );
        }
      } else {
        response = await this.client.editSemantic(
          this.sessionId, edit.label, edit.alpha,
        );
      }
      if (this.current) this.undoHistory.push(this.current);
      this.current = { z: response.z, mesh: response.mesh };
      this.events.onMesh?.(response.mesh);
    } catch (err) {
      this.events.onError?.(err instanceof Error ? err.message : String(err));
    } finally {
      this.inFlight = false;
      const next = this.queued;
      this.queued = null;
      if (next) void this.submit(next);
    }
  }
}

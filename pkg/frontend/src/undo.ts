/**
 * Undo/redo as a pure stack over (latent, mesh) snapshots.
 *
 * Every committed edit pushes the state it replaced; undo/redo swap the
 * current state with the top of the corresponding stack. Snapshots are
 * deep copies so later edits cannot mutate history.
 */

import type { MeshData } from "./api.js";

export interface Snapshot {
  z: number[];
  mesh: MeshData;
}

function cloneSnapshot(s: Snapshot): Snapshot {
  return {
    z: [...s.z],
    mesh: {
      positions: s.mesh.positions.slice(),
      indices: s.mesh.indices.slice(),
    },
  };
}

export class UndoStack {
  private undoStack: Snapshot[] = [];
  private redoStack: Snapshot[] = [];

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  get canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  get depth(): number {
    return this.undoStack.length;
  }

  /** Record the state being replaced by a new edit. Clears redo history. */
  push(replaced: Snapshot): void {
    this.undoStack.push(cloneSnapshot(replaced));
    this.redoStack = [];
  }

  /** Returns the state to restore, exchanging it for the current one. */
  undo(current: Snapshot): Snapshot | null {
    const prev = this.undoStack.pop();
    if (!prev) return null;
    this.redoStack.push(cloneSnapshot(current));
    return prev;
  }

  redo(current: Snapshot): Snapshot | null {
    const next = this.redoStack.pop();
    if (!next) return null;
    this.undoStack.push(cloneSnapshot(current));
    return next;
  }

  clear(): void {
    this.undoStack = [];
    this.redoStack = [];
  }
}

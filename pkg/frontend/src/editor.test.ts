import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import type { EditResponse, Handle, MeshData, SessionState } from "./api.js";
import { EditorSession, SLIDER_DEBOUNCE_MS } from "./editor.js";

function mesh(tag: number): MeshData {
  return {
    positions: new Float32Array([tag, 0, 0, 0, tag, 0, 0, 0, tag]),
    indices: new Uint32Array([0, 1, 2]),
  };
}

/** In-memory stand-in for the service: z is a 1-vector, semantic adds alpha. */
class FakeClient {
  z = [0];
  editCalls: Array<{ kind: string; payload: unknown }> = [];
  delayMs = 0;

  private async wait(): Promise<void> {
    if (this.delayMs) await new Promise((r) => setTimeout(r, this.delayMs));
  }

  async createSession(): Promise<SessionState> {
    return { session_id: "s1", z: [...this.z], mesh: mesh(this.z[0]) };
  }

  async editHandles(_id: string, handles: Handle[]): Promise<EditResponse> {
    await this.wait();
    this.editCalls.push({ kind: "handles", payload: handles });
    this.z = [this.z[0] + handles.length];
    return {
      z: [...this.z],
      mesh: mesh(this.z[0]),
      residual_before: [1.0],
      residual_after: [0.1],
    };
  }

  async editSemantic(_id: string, label: string, alpha: number): Promise<EditResponse> {
    await this.wait();
    this.editCalls.push({ kind: "semantic", payload: { label, alpha } });
    this.z = [this.z[0] + alpha];
    return { z: [...this.z], mesh: mesh(this.z[0]) };
  }
}

describe("EditorSession", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  async function startSession(client: FakeClient) {
    const meshes: MeshData[] = [];
    const session = new EditorSession(client as never, {
      onMesh: (m) => meshes.push(m),
    });
    await session.start();
    return { session, meshes };
  }

  it("drag commits update state and push undo", async () => {
    vi.useRealTimers();
    const client = new FakeClient();
    const { session } = await startSession(client);
    const before = session.state!;
    await session.dragCommit([{ vertex: 0, dx: 1, dy: 0, dz: 0 }]);
    expect(session.state!.z).toEqual([1]);
    expect(session.undoHistory.depth).toBe(1);
    expect(session.undo()).toBe(true);
    expect(session.state!.z).toEqual(before.z);
    expect(Array.from(session.state!.mesh.positions))
      .toEqual(Array.from(before.mesh.positions));
  });

  it("redo restores the undone edit exactly", async () => {
    vi.useRealTimers();
    const client = new FakeClient();
    const { session } = await startSession(client);
    await session.dragCommit([{ vertex: 2, dx: 0, dy: 1, dz: 0 }]);
    const edited = session.state!;
    session.undo();
    session.redo();
    expect(session.state!.z).toEqual(edited.z);
    expect(Array.from(session.state!.mesh.positions))
      .toEqual(Array.from(edited.mesh.positions));
  });

  it("debounces slider input to a single request with the final value", async () => {
    const client = new FakeClient();
    const { session } = await startSession(client);
    session.semanticSlider("wide", 0.5);
    session.semanticSlider("wide", 1.0);
    session.semanticSlider("wide", 1.5);
    expect(client.editCalls.length).toBe(0);
    await vi.advanceTimersByTimeAsync(SLIDER_DEBOUNCE_MS + 20);
    expect(client.editCalls.length).toBe(1);
    expect(client.editCalls[0].payload).toEqual({ label: "wide", alpha: 1.5 });
  });

  it("slider round-trip sends compensating deltas", async () => {
    const client = new FakeClient();
    const { session } = await startSession(client);
    session.semanticSlider("wide", 1.5);
    await vi.advanceTimersByTimeAsync(SLIDER_DEBOUNCE_MS + 20);
    session.semanticSlider("wide", 0);
    await vi.advanceTimersByTimeAsync(SLIDER_DEBOUNCE_MS + 20);
    const alphas = client.editCalls.map(
      (c) => (c.payload as { alpha: number }).alpha,
    );
    expect(alphas).toEqual([1.5, -1.5]);
    expect(session.state!.z[0]).toBeCloseTo(0, 12);
  });

  it("coalesces edits queued while one is in flight", async () => {
    vi.useRealTimers();
    const client = new FakeClient();
    client.delayMs = 30;
    const { session } = await startSession(client);
    const first = session.dragCommit([{ vertex: 0, dx: 1, dy: 0, dz: 0 }]);
    void session.dragCommit([{ vertex: 1, dx: 1, dy: 0, dz: 0 }]);
    void session.dragCommit([
      { vertex: 1, dx: 2, dy: 0, dz: 0 },
      { vertex: 2, dx: 2, dy: 0, dz: 0 },
    ]);
    await first;
    await session.idle();
    // first ran, the middle one was coalesced away, the last ran
    expect(client.editCalls.length).toBe(2);
    expect((client.editCalls[1].payload as Handle[]).length).toBe(2);
  });

  it("reports residuals from the service response", async () => {
    vi.useRealTimers();
    const client = new FakeClient();
    const residuals: Array<[number[], number[]]> = [];
    const session = new EditorSession(client as never, {
      onResiduals: (b, a) => residuals.push([b, a]),
    });
    await session.start();
    await session.dragCommit([{ vertex: 0, dx: 1, dy: 0, dz: 0 }]);
    expect(residuals).toEqual([[[1.0], [0.1]]]);
    // the optimizer reduced the residual
    expect(residuals[0][1][0]).toBeLessThan(residuals[0][0][0]);
  });

  it("errors surface through the error callback and keep state", async () => {
    vi.useRealTimers();
    const client = new FakeClient();
    client.editHandles = async () => {
      throw new Error("422: numerical failure");
    };
    const errors: string[] = [];
    const session = new EditorSession(client as never, {
      onError: (m) => errors.push(m),
    });
    await session.start();
    const before = session.state!;
    await session.dragCommit([{ vertex: 0, dx: 1, dy: 0, dz: 0 }]);
    expect(errors.length).toBe(1);
    expect(session.state!.z).toEqual(before.z);
    expect(session.undoHistory.depth).toBe(0);
  });
});

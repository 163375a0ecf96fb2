/**
 * Typed client for the surfmorph editing service.
 *
 * Mesh geometry travels as a binary payload: little-endian u32 vertex
 * count, u32 face count, float32 xyz positions, u32 face indices. JSON
 * responses embed it base64-encoded in a `mesh` field; POST /decode
 * returns it raw.
 */

export interface MeshData {
  positions: Float32Array; // length 3V
  indices: Uint32Array; // length 3F
}

export interface ModelInfo {
  latent_dim: number;
  template_vertices: number;
  template_faces: number;
  n_train_examples: number;
  directions: string[];
}

export interface SessionState {
  session_id: string;
  z: number[];
  mesh: MeshData;
}

export interface EditResponse {
  z: number[];
  mesh: MeshData;
  residual_before?: number[];
  residual_after?: number[];
}

export interface Handle {
  vertex: number;
  dx: number;
  dy: number;
  dz: number;
}

export interface Landmark {
  vertex: number;
  x: number;
  y: number;
}

export interface FitResponse {
  z: number[];
  pose: { scale: number; rotation: number[][]; translation: number[] };
  reprojection_rmse: number;
  mesh: MeshData;
}

export function parseMeshPayload(buffer: ArrayBuffer): MeshData {
  const header = new DataView(buffer, 0, 8);
  const nVertices = header.getUint32(0, true);
  const nFaces = header.getUint32(4, true);
  const expected = 8 + 12 * nVertices + 12 * nFaces;
  if (buffer.byteLength !== expected) {
    throw new Error(
      `mesh payload is ${buffer.byteLength} bytes, expected ${expected}`,
    );
  }
  const positions = new Float32Array(buffer, 8, 3 * nVertices);
  const indices = new Uint32Array(buffer, 8 + 12 * nVertices, 3 * nFaces);
  // copy out of the shared buffer so callers own their views
  return { positions: positions.slice(), indices: indices.slice() };
}

export function decodeBase64Mesh(b64: string): MeshData {
  const raw = typeof atob === "function"
    ? Uint8Array.from(atob(b64), (c) => c.charCodeAt(0))
    : new Uint8Array(Buffer.from(b64, "base64"));
  return parseMeshPayload(raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.byteLength));
}

async function expectOk(resp: Response): Promise<Response> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      detail = JSON.stringify(body.detail ?? body);
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new Error(`service error ${resp.status}: ${detail}`);
  }
  return resp;
}

export class SurfmorphClient {
  constructor(readonly baseUrl: string) {}

  private async postJson(path: string, body: unknown): Promise<any> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return (await expectOk(resp)).json();
  }

  async modelInfo(): Promise<ModelInfo> {
    const resp = await fetch(this.baseUrl + "/model/info");
    return (await expectOk(resp)).json();
  }

  async decode(body: {
    z?: number[];
    sample?: boolean;
    subdiv?: number;
    seed?: number;
  }): Promise<MeshData> {
    const resp = await fetch(this.baseUrl + "/decode", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    await expectOk(resp);
    return parseMeshPayload(await resp.arrayBuffer());
  }

  async createSession(body: { z?: number[]; sample?: boolean; seed?: number } = {}): Promise<SessionState> {
    const data = await this.postJson("/session", body);
    return { session_id: data.session_id, z: data.z, mesh: decodeBase64Mesh(data.mesh) };
  }

  async editHandles(sessionId: string, handles: Handle[], commit = false): Promise<EditResponse> {
    const data = await this.postJson(`/session/${sessionId}/handles`, {
      handles,
      commit,
    });
    return { ...data, mesh: decodeBase64Mesh(data.mesh) };
  }

  async editSemantic(sessionId: string, label: string, alpha: number): Promise<EditResponse> {
    const data = await this.postJson(`/session/${sessionId}/semantic`, {
      label,
      alpha,
    });
    return { ...data, mesh: decodeBase64Mesh(data.mesh) };
  }

  async fitLandmarks(landmarks: Landmark[]): Promise<FitResponse> {
    const data = await this.postJson("/fit/landmarks", { landmarks });
    return { ...data, mesh: decodeBase64Mesh(data.mesh) };
  }
}

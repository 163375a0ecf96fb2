import * as THREE from "three";
import { describe, expect, it } from "vitest";

import { dragDisplacement, meshToGeometry, pickVertex } from "./picking.js";

function unitTriangleMesh(): THREE.Mesh {
  const geometry = meshToGeometry({
    positions: new Float32Array([
      -1, -1, 0,
      1, -1, 0,
      0, 1, 0,
    ]),
    indices: new Uint32Array([0, 1, 2]),
  });
  return new THREE.Mesh(geometry, new THREE.MeshBasicMaterial());
}

function frontCamera(): THREE.PerspectiveCamera {
  const camera = new THREE.PerspectiveCamera(45, 1, 0.1, 100);
  camera.position.set(0, 0, 5);
  camera.lookAt(0, 0, 0);
  camera.updateMatrixWorld(true);
  camera.updateProjectionMatrix();
  return camera;
}

describe("pickVertex", () => {
  it("returns a vertex of the hit face nearest to the click", () => {
    const mesh = unitTriangleMesh();
    const camera = frontCamera();
    // clicking near the top corner must select vertex 2
    const world = new THREE.Vector3(0, 0.9, 0).project(camera);
    const picked = pickVertex({ x: world.x, y: world.y }, camera, mesh);
    expect(picked).toBe(2);
  });

  it("returns null on background clicks", () => {
    const mesh = unitTriangleMesh();
    const camera = frontCamera();
    expect(pickVertex({ x: 0.95, y: 0.95 }, camera, mesh)).toBeNull();
  });

  it("picked vertex index is always valid for the geometry", () => {
    const mesh = unitTriangleMesh();
    const camera = frontCamera();
    for (const [x, y] of [[0, 0], [-0.1, -0.1], [0.1, -0.05]]) {
      const picked = pickVertex({ x, y }, camera, mesh);
      if (picked !== null) {
        expect(picked).toBeGreaterThanOrEqual(0);
        expect(picked).toBeLessThan(3);
      }
    }
  });
});

describe("dragDisplacement", () => {
  it("moves the handle to the target screen position", () => {
    const camera = frontCamera();
    const handle = new THREE.Vector3(0.2, -0.3, 0);
    const from = handle.clone().project(camera);
    const to = { x: from.x + 0.1, y: from.y - 0.05 };
    const delta = dragDisplacement(camera, handle, { x: from.x, y: from.y }, to);
    const reprojected = handle.clone().add(delta).project(camera);
    expect(reprojected.x).toBeCloseTo(to.x, 6);
    expect(reprojected.y).toBeCloseTo(to.y, 6);
  });

  it("zero screen delta gives zero displacement", () => {
    const camera = frontCamera();
    const handle = new THREE.Vector3(0.5, 0.5, 0);
    const ndc = handle.clone().project(camera);
    const delta = dragDisplacement(camera, handle, ndc, { x: ndc.x, y: ndc.y });
    expect(delta.length()).toBeLessThan(1e-12);
  });

  it("keeps the displacement in the camera plane at the handle depth", () => {
    const camera = frontCamera();
    const handle = new THREE.Vector3(0, 0, 0.7);
    const from = handle.clone().project(camera);
    const delta = dragDisplacement(
      camera, handle, { x: from.x, y: from.y }, { x: from.x + 0.2, y: from.y },
    );
    // view direction is -z; camera-plane displacement has no z component
    expect(Math.abs(delta.z)).toBeLessThan(1e-9);
  });
});

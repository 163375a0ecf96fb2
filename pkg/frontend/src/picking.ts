/**
 * Vertex picking and drag-to-displacement math. Pure three.js geometry, no
 * renderer involved, so everything here runs headless in tests.
 */

import * as THREE from "three";
import type { MeshData } from "./api.js";

export function meshToGeometry(mesh: MeshData): THREE.BufferGeometry {
  const geometry = new THREE.BufferGeometry();
  geometry.setAttribute(
    "position",
    new THREE.BufferAttribute(mesh.positions.slice(), 3),
  );
  geometry.setIndex(new THREE.BufferAttribute(mesh.indices.slice(), 1));
  geometry.computeVertexNormals();
  return geometry;
}

/**
 * Cast a ray through normalized device coordinates and return the nearest
 * vertex of the hit face, or null when the background is clicked.
 */
export function pickVertex(
  ndc: { x: number; y: number },
  camera: THREE.Camera,
  mesh: THREE.Mesh,
): number | null {
  const raycaster = new THREE.Raycaster();
  raycaster.setFromCamera(new THREE.Vector2(ndc.x, ndc.y), camera);
  const hits = raycaster.intersectObject(mesh, false);
  if (hits.length === 0 || !hits[0].face) return null;
  const hit = hits[0];
  const face = hit.face!;
  const position = mesh.geometry.getAttribute("position") as THREE.BufferAttribute;
  const local = mesh.worldToLocal(hit.point.clone());
  let best = face.a;
  let bestDist = Infinity;
  for (const vi of [face.a, face.b, face.c]) {
    const v = new THREE.Vector3().fromBufferAttribute(position, vi);
    const d = v.distanceToSquared(local);
    if (d < bestDist) {
      bestDist = d;
      best = vi;
    }
  }
  return best;
}

/**
 * World-space displacement for a drag: the screen-space delta is applied in
 * the camera plane at the handle's depth, i.e. both endpoints are
 * unprojected at the handle's NDC depth and subtracted.
 */
export function dragDisplacement(
  camera: THREE.Camera,
  handleWorld: THREE.Vector3,
  fromNdc: { x: number; y: number },
  toNdc: { x: number; y: number },
): THREE.Vector3 {
  const depth = handleWorld.clone().project(camera).z;
  const a = new THREE.Vector3(fromNdc.x, fromNdc.y, depth).unproject(camera);
  const b = new THREE.Vector3(toNdc.x, toNdc.y, depth).unproject(camera);
  return b.sub(a);
}

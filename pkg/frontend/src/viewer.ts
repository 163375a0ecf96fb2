/**
 * Three.js viewer: renders the current mesh, shows handle markers, and
 * translates pointer gestures into picks and drags.
 */

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";
import type { MeshData } from "./api.js";
import { dragDisplacement, meshToGeometry, pickVertex } from "./picking.js";

export interface DragEvent {
  vertex: number;
  delta: THREE.Vector3;
}

export class Viewer {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private controls: OrbitControls;
  private surface: THREE.Mesh | null = null;
  private markers = new THREE.Group();
  private selected: number | null = null;
  private dragStartNdc: { x: number; y: number } | null = null;
  private dragNdc: { x: number; y: number } | null = null;

  onDragCommit: ((drag: DragEvent) => void) | null = null;
  onPick: ((vertex: number | null) => void) | null = null;

  constructor(private readonly container: HTMLElement) {
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setPixelRatio(Math.min(window.devicePixelRatio, 2));
    this.renderer.setSize(container.clientWidth, container.clientHeight);
    this.renderer.setClearColor(0x10141c);
    container.appendChild(this.renderer.domElement);

    const aspect = container.clientWidth / Math.max(1, container.clientHeight);
    this.camera = new THREE.PerspectiveCamera(45, aspect, 0.01, 100);
    this.camera.position.set(0, -3.2, 1.8);
    this.camera.up.set(0, 0, 1);

    this.controls = new OrbitControls(this.camera, this.renderer.domElement);
    this.controls.enableDamping = true;

    this.scene.add(new THREE.HemisphereLight(0xffffff, 0x33384a, 0.9));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(2, -3, 4);
    this.scene.add(key);
    this.scene.add(this.markers);

    this.renderer.domElement.addEventListener("pointerdown", (e) => this.pointerDown(e));
    this.renderer.domElement.addEventListener("pointermove", (e) => this.pointerMove(e));
    this.renderer.domElement.addEventListener("pointerup", (e) => this.pointerUp(e));
    window.addEventListener("resize", () => this.resize());

    const animate = () => {
      requestAnimationFrame(animate);
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
    };
    animate();
  }

  setMesh(mesh: MeshData): void {
    const geometry = meshToGeometry(mesh);
    if (this.surface) {
      this.surface.geometry.dispose();
      this.surface.geometry = geometry;
    } else {
      const material = new THREE.MeshStandardMaterial({
        color: 0x7aa2f7, roughness: 0.55, metalness: 0.05,
        flatShading: false,
      });
      this.surface = new THREE.Mesh(geometry, material);
      this.scene.add(this.surface);
    }
    this.refreshMarker();
  }

  get selectedVertex(): number | null {
    return this.selected;
  }

  private ndcFromEvent(event: PointerEvent): { x: number; y: number } {
    const rect = this.renderer.domElement.getBoundingClientRect();
    return {
      x: ((event.clientX - rect.left) / rect.width) * 2 - 1,
      y: -((event.clientY - rect.top) / rect.height) * 2 + 1,
    };
  }

  private vertexWorld(vertex: number): THREE.Vector3 | null {
    if (!this.surface) return null;
    const attr = this.surface.geometry.getAttribute("position") as THREE.BufferAttribute;
    return this.surface.localToWorld(new THREE.Vector3().fromBufferAttribute(attr, vertex));
  }

  private pointerDown(event: PointerEvent): void {
    if (!this.surface || event.button !== 0 || !event.shiftKey) return;
    const ndc = this.ndcFromEvent(event);
    const vertex = pickVertex(ndc, this.camera, this.surface);
    this.selected = vertex;
    this.onPick?.(vertex);
    this.refreshMarker();
    if (vertex !== null) {
      this.controls.enabled = false;
      this.dragStartNdc = ndc;
      this.dragNdc = ndc;
    }
  }

  private pointerMove(event: PointerEvent): void {
    if (this.selected === null || !this.dragStartNdc) return;
    this.dragNdc = this.ndcFromEvent(event);
    this.refreshMarker(this.currentDragDelta() ?? undefined);
  }

  private pointerUp(_event: PointerEvent): void {
    if (this.selected !== null && this.dragStartNdc && this.dragNdc) {
      const delta = this.currentDragDelta();
      if (delta && delta.length() > 1e-9) {
        this.onDragCommit?.({ vertex: this.selected, delta });
      }
    }
    this.dragStartNdc = null;
    this.dragNdc = null;
    this.controls.enabled = true;
  }

  private currentDragDelta(): THREE.Vector3 | null {
    if (this.selected === null || !this.dragStartNdc || !this.dragNdc) return null;
    const world = this.vertexWorld(this.selected);
    if (!world) return null;
    return dragDisplacement(this.camera, world, this.dragStartNdc, this.dragNdc);
  }

  private refreshMarker(offset?: THREE.Vector3): void {
    this.markers.clear();
    if (this.selected === null) return;
    const world = this.vertexWorld(this.selected);
    if (!world) return;
    const marker = new THREE.Mesh(
      new THREE.SphereGeometry(0.02, 12, 12),
      new THREE.MeshBasicMaterial({ color: 0xff5966 }),
    );
    marker.position.copy(offset ? world.clone().add(offset) : world);
    this.markers.add(marker);
  }

  private resize(): void {
    const w = this.container.clientWidth;
    const h = Math.max(1, this.container.clientHeight);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
    this.renderer.setSize(w, h);
  }
}

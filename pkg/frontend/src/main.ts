/**
 * Page bootstrap: connect to the service, create an edit session, wire the
 * viewer, sliders, and undo/redo buttons.
 */

import { SurfmorphClient } from "./api.js";
import { EditorSession } from "./editor.js";
import { Viewer } from "./viewer.js";

const SERVICE_URL =
  new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8642";

function toast(message: string): void {
  const el = document.getElementById("toast")!;
  el.textContent = message;
  el.classList.add("visible");
  setTimeout(() => el.classList.remove("visible"), 4000);
}

async function boot(): Promise<void> {
  const client = new SurfmorphClient(SERVICE_URL);
  const info = await client.modelInfo();
  document.getElementById("stats")!.textContent =
    `V=${info.template_vertices} F=${info.template_faces} ` +
    `latent=${info.latent_dim}`;

  const viewer = new Viewer(document.getElementById("viewport")!);
  const session = new EditorSession(client, {
    onMesh: (mesh) => viewer.setMesh(mesh),
    onResiduals: (before, after) => {
      const fmt = (xs: number[]) =>
        xs.map((x) => x.toExponential(2)).join(", ");
      document.getElementById("residuals")!.textContent =
        `handle residual ${fmt(before)} -> ${fmt(after)}`;
    },
    onError: (message) => toast(message),
  });
  await session.start({});

  viewer.onDragCommit = ({ vertex, delta }) => {
    void session.dragCommit([
      { vertex, dx: delta.x, dy: delta.y, dz: delta.z },
    ]);
  };
  viewer.onPick = (vertex) => {
    document.getElementById("picked")!.textContent =
      vertex === null ? "no handle" : `handle vertex ${vertex}`;
  };

  const sliders = document.getElementById("sliders")!;
  for (const label of info.directions) {
    const row = document.createElement("div");
    row.className = "slider-row";
    const caption = document.createElement("label");
    caption.textContent = label;
    const input = document.createElement("input");
    input.type = "range";
    input.min = "-3";
    input.max = "3";
    input.step = "0.05";
    input.value = "0";
    input.addEventListener("input", () => {
      session.semanticSlider(label, parseFloat(input.value));
    });
    row.append(caption, input);
    sliders.append(row);
  }
  if (info.directions.length === 0) {
    sliders.textContent = "no semantic directions loaded";
  }

  document.getElementById("undo")!.addEventListener("click", () => {
    if (!session.undo()) toast("nothing to undo");
  });
  document.getElementById("redo")!.addEventListener("click", () => {
    if (!session.redo()) toast("nothing to redo");
  });
}

boot().catch((err) => {
  toast(`failed to connect to ${SERVICE_URL}: ${err.message ?? err}`);
});

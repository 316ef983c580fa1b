// Instructor dashboard: projection explorer plus review queue, a pure client
// of the grading service (reload-safe; all state reconstructable from GETs).

import { ApiClient, type ProjectionPoint } from "./api.js";
import { renderReviewQueue } from "./review.js";
import { renderScatter } from "./scatter.js";

const api = new ApiClient("", window.localStorage.getItem("agp_token") ?? "");

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function openSubmissionPanel(point: ProjectionPoint): Promise<void> {
  const panel = byId<HTMLElement>("side-panel");
  panel.hidden = false;
  byId<HTMLElement>("panel-title").textContent =
    `${point.student_id} — ${point.problem_id} (${point.tier})`;
  const body = byId<HTMLElement>("panel-body");
  body.textContent = "Loading report...";
  try {
    body.textContent = await api.getStudentReport(point.student_id, point.problem_id);
  } catch (error) {
    body.textContent = `Could not load the report: ${(error as Error).message}`;
  }
}

async function loadProjection(): Promise<void> {
  const assignmentId = byId<HTMLInputElement>("assignment-input").value.trim();
  const seed = Number(byId<HTMLInputElement>("seed-input").value) || 42;
  const source = byId<HTMLSelectElement>("source-select").value as "raw" | "projected";
  const status = byId<HTMLElement>("map-status");
  if (!assignmentId) {
    status.textContent = "Enter an assignment id.";
    return;
  }
  status.textContent = "Loading projection...";
  try {
    const projection = await api.getProjection(assignmentId, seed, source);
    renderScatter(byId<HTMLElement>("scatter-container"), projection.points, {
      onSelect: (point) => void openSubmissionPanel(point),
    });
    status.textContent = `${projection.points.length} submissions (seed ${projection.seed}).`;
  } catch (error) {
    status.textContent = `Projection failed: ${(error as Error).message}`;
  }
}

async function loadQueue(): Promise<void> {
  const status = byId<HTMLElement>("queue-status");
  status.textContent = "Loading queue...";
  try {
    const records = await api.getReviewQueue();
    renderReviewQueue(
      byId<HTMLElement>("queue-container"),
      records,
      api,
      () => byId<HTMLInputElement>("reviewer-input").value.trim() || "instructor",
      { onStale: () => void loadQueue() },
    );
    status.textContent = `${records.length} records awaiting review.`;
  } catch (error) {
    status.textContent = `Queue failed: ${(error as Error).message}`;
  }
}

function wireUp(): void {
  byId<HTMLButtonElement>("load-projection").addEventListener("click", () => {
    void loadProjection();
  });
  byId<HTMLButtonElement>("load-queue").addEventListener("click", () => {
    void loadQueue();
  });
  byId<HTMLButtonElement>("panel-close").addEventListener("click", () => {
    byId<HTMLElement>("side-panel").hidden = true;
  });
  const tokenInput = byId<HTMLInputElement>("token-input");
  tokenInput.value = window.localStorage.getItem("agp_token") ?? "";
  tokenInput.addEventListener("change", () => {
    window.localStorage.setItem("agp_token", tokenInput.value.trim());
    api.setToken(tokenInput.value.trim());
  });
}

wireUp();

// Interactive SVG scatter of the cohort projection: one mark per submission,
// shaded by performance tier, with pan (drag), zoom (wheel), hover labels,
// and click-to-inspect.

import type { ProjectionPoint, Tier } from "./api.js";

/** Sequential 3-step shading: light = PASS, dim = PARTIAL, dark = FAIL. */
export const TIER_SHADES: Record<Tier, string> = {
  PASS: "#cfe3cf",
  PARTIAL: "#7f9f7f",
  FAIL: "#2f4f2f",
};

export const EMPTY_STATE_TEXT = "No points to display. Grade a cohort first.";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface ScatterOptions {
  /** Canvas size in CSS pixels. Default: 640x480. */
  width?: number;
  height?: number;
  /** Mark radius in view units. Default: scales with the data extent. */
  onSelect?: (point: ProjectionPoint) => void;
}

export interface ScatterView {
  svg: SVGSVGElement | null;
  marks: SVGCircleElement[];
}

interface ViewBox {
  x: number;
  y: number;
  w: number;
  h: number;
}

function dataExtent(points: ProjectionPoint[]): ViewBox {
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const spanX = maxX - minX || 1;
  const spanY = maxY - minY || 1;
  // 8% padding so edge marks are not clipped
  return {
    x: minX - spanX * 0.08,
    y: minY - spanY * 0.08,
    w: spanX * 1.16,
    h: spanY * 1.16,
  };
}

export function renderScatter(
  container: HTMLElement,
  points: ProjectionPoint[],
  options: ScatterOptions = {},
): ScatterView {
  container.replaceChildren();
  if (points.length === 0) {
    const empty = container.ownerDocument.createElement("p");
    empty.className = "empty-state";
    empty.textContent = EMPTY_STATE_TEXT;
    container.appendChild(empty);
    return { svg: null, marks: [] };
  }

  const doc = container.ownerDocument;
  const svg = doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
  svg.setAttribute("width", String(options.width ?? 640));
  svg.setAttribute("height", String(options.height ?? 480));
  svg.setAttribute("class", "scatter");

  let view = dataExtent(points);
  const applyView = () =>
    svg.setAttribute("viewBox", `${view.x} ${view.y} ${view.w} ${view.h}`);
  applyView();

  const radius = Math.max(view.w, view.h) / 80;
  const marks: SVGCircleElement[] = [];
  for (const point of points) {
    const mark = doc.createElementNS(SVG_NS, "circle") as SVGCircleElement;
    mark.setAttribute("class", "mark");
    mark.setAttribute("cx", String(point.x));
    mark.setAttribute("cy", String(point.y));
    mark.setAttribute("r", String(radius));
    mark.setAttribute("fill", TIER_SHADES[point.tier]);
    mark.dataset.studentId = point.student_id;
    mark.dataset.tier = point.tier;
    const title = doc.createElementNS(SVG_NS, "title");
    title.textContent = `${point.student_id} (${point.tier})`;
    mark.appendChild(title);
    if (options.onSelect) {
      mark.addEventListener("click", () => options.onSelect!(point));
    }
    svg.appendChild(mark);
    marks.push(mark);
  }

  // wheel zoom centered on the cursor position in view coordinates
  svg.addEventListener("wheel", (event: WheelEvent) => {
    event.preventDefault();
    const factor = event.deltaY > 0 ? 1.2 : 1 / 1.2;
    const rect = svg.getBoundingClientRect();
    const fx = rect.width > 0 ? (event.clientX - rect.left) / rect.width : 0.5;
    const fy = rect.height > 0 ? (event.clientY - rect.top) / rect.height : 0.5;
    const cx = view.x + view.w * fx;
    const cy = view.y + view.h * fy;
    view = {
      x: cx - (cx - view.x) * factor,
      y: cy - (cy - view.y) * factor,
      w: view.w * factor,
      h: view.h * factor,
    };
    applyView();
  });

  // drag to pan
  let dragging: { startX: number; startY: number; view: ViewBox } | null = null;
  svg.addEventListener("mousedown", (event: MouseEvent) => {
    dragging = { startX: event.clientX, startY: event.clientY, view: { ...view } };
  });
  svg.addEventListener("mousemove", (event: MouseEvent) => {
    if (!dragging) return;
    const rect = svg.getBoundingClientRect();
    if (rect.width === 0 || rect.height === 0) return;
    const dx = ((event.clientX - dragging.startX) / rect.width) * dragging.view.w;
    const dy = ((event.clientY - dragging.startY) / rect.height) * dragging.view.h;
    view = { ...dragging.view, x: dragging.view.x - dx, y: dragging.view.y - dy };
    applyView();
  });
  const endDrag = () => {
    dragging = null;
  };
  svg.addEventListener("mouseup", endDrag);
  svg.addEventListener("mouseleave", endDrag);

  container.appendChild(svg);
  return { svg, marks };
}

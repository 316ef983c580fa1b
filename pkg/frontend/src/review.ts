// Feedback review queue: pending records with Approve / Edit / Reject.
// Every mutation round-trips through POST /feedback/{id}/review; a row leaves
// the queue only after the server confirms the transition.

import type { ApiClient, ApiError, FeedbackRecord } from "./api.js";

export interface ReviewCallbacks {
  /** Called after a record leaves the queue (any successful review). */
  onReviewed?: (record: FeedbackRecord) => void;
  /** Called when the queue should be refetched (e.g. after a 409). */
  onStale?: () => void;
}

export const QUEUE_EMPTY_TEXT = "Review queue is empty.";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderRow(
  doc: Document,
  record: FeedbackRecord,
  api: ApiClient,
  reviewerName: () => string,
  callbacks: ReviewCallbacks,
): HTMLElement {
  const row = el(doc, "article", "review-row");
  row.dataset.recordId = record.id;

  const header = el(
    doc,
    "header",
    "review-header",
    `${record.student_id} / ${record.assignment_id}`,
  );
  if (record.prompt_id) {
    header.textContent += ` — prompt: ${record.prompt_id}`;
  }
  row.appendChild(header);
  row.appendChild(el(doc, "pre", "review-feedback", record.extracted));

  const errorLine = el(doc, "p", "review-error");
  errorLine.hidden = true;

  const editor = el(doc, "textarea", "review-editor");
  editor.placeholder = "Edited feedback for the student";
  editor.hidden = true;

  const actions = el(doc, "div", "review-actions");
  const approveButton = el(doc, "button", "approve", "Approve");
  const editButton = el(doc, "button", "edit", "Edit");
  const submitEditButton = el(doc, "button", "submit-edit", "Submit edit");
  const rejectButton = el(doc, "button", "reject", "Reject");
  submitEditButton.hidden = true;
  submitEditButton.disabled = true;

  const showError = (error: unknown) => {
    const apiErr = error as Partial<ApiError>;
    errorLine.textContent = `Review failed: ${apiErr.message ?? String(error)} — retry or refresh.`;
    errorLine.hidden = false;
    if (apiErr.status === 409) {
      row.remove();
      callbacks.onStale?.();
    }
  };

  const send = async (
    action: Parameters<ApiClient["postReview"]>[1],
  ): Promise<void> => {
    errorLine.hidden = true;
    try {
      const updated = await api.postReview(record.id, action);
      row.remove();
      callbacks.onReviewed?.(updated);
    } catch (error) {
      showError(error);
    }
  };

  approveButton.addEventListener("click", () =>
    send({ action: "approve", reviewer: reviewerName() }),
  );
  rejectButton.addEventListener("click", () =>
    send({ action: "reject", reviewer: reviewerName() }),
  );
  editButton.addEventListener("click", () => {
    editor.hidden = false;
    submitEditButton.hidden = false;
    editButton.hidden = true;
  });
  editor.addEventListener("input", () => {
    submitEditButton.disabled = editor.value.trim() === "";
  });
  submitEditButton.addEventListener("click", () => {
    const text = editor.value.trim();
    if (text === "") return; // mirrors the server's MissingEditorText rule
    void send({ action: "edit", reviewer: reviewerName(), editor_text: text });
  });

  actions.append(approveButton, editButton, submitEditButton, rejectButton);
  row.append(editor, actions, errorLine);
  return row;
}

export function renderReviewQueue(
  container: HTMLElement,
  records: FeedbackRecord[],
  api: ApiClient,
  reviewerName: () => string,
  callbacks: ReviewCallbacks = {},
): void {
  container.replaceChildren();
  const doc = container.ownerDocument;
  if (records.length === 0) {
    container.appendChild(el(doc, "p", "empty-state", QUEUE_EMPTY_TEXT));
    return;
  }
  for (const record of records) {
    container.appendChild(renderRow(doc, record, api, reviewerName, callbacks));
  }
}

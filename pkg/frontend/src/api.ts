// Typed client for the grading service. The UI holds no state that cannot be
// reconstructed from these endpoints.

export type Tier = "PASS" | "PARTIAL" | "FAIL";

export interface ProjectionPoint {
  student_id: string;
  x: number;
  y: number;
  tier: Tier;
  problem_id: string;
}

export interface ProjectionResponse {
  assignment_id: string;
  points: ProjectionPoint[];
  seed: number;
  config: Record<string, unknown>;
}

export type ReviewState = "GENERATED" | "APPROVED" | "EDITED" | "REJECTED";

export interface FeedbackRecord {
  id: string;
  student_id: string;
  assignment_id: string;
  prompt_id: string | null;
  prompt_score: number | null;
  raw_response: string;
  extracted: string;
  state: ReviewState;
  editor_text: string | null;
  reviewed_by: string | null;
}

export type ReviewAction =
  | { action: "approve"; reviewer: string }
  | { action: "edit"; reviewer: string; editor_text: string }
  | { action: "reject"; reviewer: string };

export interface ApiError extends Error {
  status: number;
  code: string;
}

function apiError(status: number, code: string, message: string): ApiError {
  const error = new Error(message) as ApiError;
  error.status = status;
  error.code = code;
  return error;
}

export class ApiClient {
  constructor(
    private baseUrl = "",
    private token = "",
    private fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async check(response: Response): Promise<Response> {
    if (response.ok) return response;
    let code = "http_error";
    let message = `${response.status}`;
    try {
      const body = await response.json();
      code = body.code ?? code;
      message = body.error ?? message;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw apiError(response.status, code, message);
  }

  async getProjection(
    assignmentId: string,
    seed = 42,
    source: "raw" | "projected" = "raw",
  ): Promise<ProjectionResponse> {
    const url =
      `${this.baseUrl}/assignments/${encodeURIComponent(assignmentId)}` +
      `/projection?seed=${seed}&source=${source}`;
    const response = await this.check(
      await this.fetchFn(url, { headers: this.headers(false) }),
    );
    return (await response.json()) as ProjectionResponse;
  }

  async getStudentReport(studentId: string, assignmentId: string): Promise<string> {
    const url =
      `${this.baseUrl}/submissions/${encodeURIComponent(studentId)}` +
      `/report.md?assignment=${encodeURIComponent(assignmentId)}`;
    const response = await this.check(
      await this.fetchFn(url, { headers: this.headers(false) }),
    );
    return await response.text();
  }

  async getReviewQueue(): Promise<FeedbackRecord[]> {
    const url = `${this.baseUrl}/feedback?state=GENERATED`;
    const response = await this.check(
      await this.fetchFn(url, { headers: this.headers(false) }),
    );
    const body = (await response.json()) as { records: FeedbackRecord[] };
    return body.records;
  }

  async postReview(recordId: string, action: ReviewAction): Promise<FeedbackRecord> {
    const url = `${this.baseUrl}/feedback/${encodeURIComponent(recordId)}/review`;
    const response = await this.check(
      await this.fetchFn(url, {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify(action),
      }),
    );
    return (await response.json()) as FeedbackRecord;
  }
}

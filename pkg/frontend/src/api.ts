/** Typed client for the marking service HTTP API.
 *
 * All access to the service funnels through here; the fetch implementation
 * is injectable so tests can run against a fake transport.
 */

import {
  PutTemplateBody,
  RenderMeta,
  ReviewBody,
  ScheduleJson,
  TemplateStateJson,
} from "./types.js";

export class RevisionConflictError extends Error {}
export class ValidationError extends Error {
  constructor(readonly details: unknown) {
    super("template failed validation");
  }
}
export class ForbiddenError extends Error {}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class MarkingApi {
  constructor(
    private readonly baseUrl: string,
    public subjectId: number,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    return { "X-Subject-Id": String(this.subjectId), ...extra };
  }

  private async checked(response: Response): Promise<Response> {
    if (response.ok) return response;
    const body = await response.json().catch(() => ({ detail: response.statusText }));
    if (response.status === 409) throw new RevisionConflictError(String(body.detail));
    if (response.status === 422) throw new ValidationError(body.detail);
    if (response.status === 403 || response.status === 401) throw new ForbiddenError(String(body.detail));
    throw new Error(`${response.status}: ${JSON.stringify(body.detail)}`);
  }

  async getSchedule(subject: number): Promise<ScheduleJson> {
    const response = await this.checked(await this.fetchFn(`${this.baseUrl}/api/v1/schedule/${subject}`));
    return response.json();
  }

  /** Fetch the PNG and the physical-scale metadata the viewer needs. */
  async getImage(db: string, finger: number, impression: number): Promise<{ png: ArrayBuffer; meta: RenderMeta }> {
    const response = await this.checked(
      await this.fetchFn(`${this.baseUrl}/api/v1/images/${db}/${finger}/${impression}.png`, {
        headers: this.headers(),
      }),
    );
    const meta: RenderMeta = {
      widthPx: Number(response.headers.get("X-Image-Width-Px")),
      heightPx: Number(response.headers.get("X-Image-Height-Px")),
      pxPerCm: Number(response.headers.get("X-Px-Per-Cm")),
      targetDisplayCm: Number(response.headers.get("X-Target-Display-Cm")),
    };
    return { png: await response.arrayBuffer(), meta };
  }

  async getTemplate(db: string, finger: number, impression: number): Promise<TemplateStateJson> {
    const response = await this.checked(
      await this.fetchFn(`${this.baseUrl}/api/v1/templates/${db}/${finger}/${impression}`),
    );
    return response.json();
  }

  async putTemplate(
    db: string,
    finger: number,
    impression: number,
    body: PutTemplateBody,
  ): Promise<TemplateStateJson> {
    const response = await this.checked(
      await this.fetchFn(`${this.baseUrl}/api/v1/templates/${db}/${finger}/${impression}`, {
        method: "PUT",
        headers: this.headers({ "Content-Type": "application/json" }),
        body: JSON.stringify(body),
      }),
    );
    return response.json();
  }

  async postReview(
    db: string,
    finger: number,
    impression: number,
    body: ReviewBody,
  ): Promise<TemplateStateJson> {
    const response = await this.checked(
      await this.fetchFn(`${this.baseUrl}/api/v1/templates/${db}/${finger}/${impression}/reviews`, {
        method: "POST",
        headers: this.headers({ "Content-Type": "application/json" }),
        body: JSON.stringify(body),
      }),
    );
    return response.json();
  }
}

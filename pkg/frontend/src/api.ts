/** Thin typed client for the segmentation service HTTP API. */

import type { ClickOut, JobDoc, VolumeMeta } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function expectJson(res: Response): Promise<any> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      detail = (await res.json()).detail ?? detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(res.status, detail);
  }
  return res.json();
}

export class Client {
  constructor(public baseUrl: string) {}

  async health(): Promise<boolean> {
    try {
      const res = await fetch(`${this.baseUrl}/healthz`);
      return res.ok;
    } catch {
      return false;
    }
  }

  async uploadVolume(body: Uint8Array | ArrayBuffer): Promise<string> {
    const payload: ArrayBuffer =
      body instanceof Uint8Array ? body.slice().buffer : body;
    const res = await fetch(`${this.baseUrl}/volumes`, {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body: payload,
    });
    return (await expectJson(res)).volume_id;
  }

  async getMeta(volumeId: string): Promise<VolumeMeta> {
    return expectJson(await fetch(`${this.baseUrl}/volumes/${volumeId}/meta`));
  }

  sliceUrl(
    volumeId: string,
    plane: string,
    index: number,
    center?: number,
    width?: number,
  ): string {
    const q = new URLSearchParams({ plane, index: String(index) });
    if (center !== undefined) q.set("center", String(center));
    if (width !== undefined) q.set("width", String(width));
    return `${this.baseUrl}/volumes/${volumeId}/slice?${q}`;
  }

  async submitJob(
    volumeId: string,
    clicks: ClickOut[],
    annotationSeconds: number,
  ): Promise<string> {
    const res = await fetch(`${this.baseUrl}/volumes/${volumeId}/jobs`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        clicks,
        annotation_seconds: annotationSeconds,
      }),
    });
    return (await expectJson(res)).job_id;
  }

  async getJob(jobId: string): Promise<JobDoc> {
    return expectJson(await fetch(`${this.baseUrl}/jobs/${jobId}`));
  }

  /** Poll every intervalMs until the job reaches a terminal state. */
  async pollJob(
    jobId: string,
    intervalMs = 500,
    timeoutMs = 120_000,
  ): Promise<JobDoc> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const doc = await this.getJob(jobId);
      if (doc.state === "done" || doc.state === "failed") return doc;
      if (Date.now() > deadline) {
        throw new ApiError(408, `job ${jobId} still ${doc.state}`);
      }
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }

  async scoreJob(
    jobId: string,
    score: string,
    evaluationSeconds: number,
  ): Promise<void> {
    const res = await fetch(`${this.baseUrl}/jobs/${jobId}/score`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        score,
        evaluation_seconds: evaluationSeconds,
      }),
    });
    if (!res.ok) {
      throw new ApiError(res.status, await res.text());
    }
  }
}

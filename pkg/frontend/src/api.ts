/** Typed client for the lighting service HTTP API. */

import type { RenderParams } from "./params.js";

export type View = "edited" | "diffuse" | "shadowed" | "envmap";

export interface FitPayload {
  u: number;
  v: number;
  sigma: number;
  gamma: number;
  ambient: number[];
  peak_to_mean: number;
}

export interface SceneInfo {
  id: string;
  width: number;
  height: number;
  n_lights: number;
  has_env: boolean;
  fit: FitPayload | null;
}

export interface ScenesReply {
  scenes: SceneInfo[];
  builtin_environments: string[];
}

export interface EnvReply {
  fit: FitPayload;
  env_width: number;
  version: number;
}

export type EnvSource =
  | { builtin: string }
  | {
      gaussian: {
        u: number;
        v: number;
        sigma: number;
        gamma: number;
        ambient?: number;
        width?: number;
      };
    }
  | { envmap_b64: string; format: "pfm" | "hdr" };

/** Non-2xx reply decoded from the service's {"error", "detail"} body. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly error: string,
    readonly detail: string,
  ) {
    super(`${error}: ${detail}`);
    this.name = "ServiceError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Query fields that affect each view; the rest are omitted so equal
 * renders share one URL (and one service cache entry). */
const VIEW_FIELDS: Record<View, (keyof RenderParams)[]> = {
  edited: ["u", "v", "sigma", "gamma", "omega_d", "beta", "exposure"],
  diffuse: ["beta", "exposure"],
  shadowed: ["u", "v", "sigma", "gamma", "exposure"],
  envmap: ["exposure"],
};

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let error = "HttpError";
  let detail = `status ${response.status}`;
  try {
    const body = (await response.json()) as { error?: string; detail?: string };
    if (typeof body.error === "string") error = body.error;
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON body: keep the generic detail
  }
  throw new ServiceError(response.status, error, detail);
}

export class ApiClient {
  private readonly base: string;

  constructor(
    baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.base = baseUrl.replace(/\/+$/, "");
  }

  renderUrl(scene: string, view: View, params: RenderParams): string {
    const query = new URLSearchParams({ which: view });
    for (const field of VIEW_FIELDS[view]) {
      query.set(field, String(params[field]));
    }
    return `${this.base}/api/scenes/${encodeURIComponent(scene)}/render?${query}`;
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchFn(`${this.base}/api/health`);
      return response.ok;
    } catch {
      return false;
    }
  }

  async scenes(): Promise<ScenesReply> {
    const response = await this.fetchFn(`${this.base}/api/scenes`);
    await raiseForStatus(response);
    return (await response.json()) as ScenesReply;
  }

  async postEnv(scene: string, body: EnvSource): Promise<EnvReply> {
    const response = await this.fetchFn(
      `${this.base}/api/scenes/${encodeURIComponent(scene)}/env`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    await raiseForStatus(response);
    return (await response.json()) as EnvReply;
  }

  async render(
    scene: string,
    view: View,
    params: RenderParams,
    signal?: AbortSignal,
  ): Promise<Uint8Array> {
    const response = await this.fetchFn(this.renderUrl(scene, view, params), {
      signal,
    });
    await raiseForStatus(response);
    return new Uint8Array(await response.arrayBuffer());
  }
}

import { describe, expect, test } from "vitest";

import { ApiClient, ServiceError } from "../src/api.js";
import { DEFAULT_PARAMS } from "../src/params.js";

function stub(responses: Array<() => Response>) {
  const urls: string[] = [];
  const inits: Array<RequestInit | undefined> = [];
  const fetchFn = (url: string, init?: RequestInit) => {
    urls.push(url);
    inits.push(init);
    const next = responses.shift();
    if (!next) throw new Error("unexpected request");
    return Promise.resolve(next());
  };
  return { fetchFn, urls, inits };
}

const png = () =>
  new Response(new Uint8Array([1, 2, 3]).buffer, {
    status: 200,
    headers: { "content-type": "image/png" },
  });

describe("api client", () => {
  test("render URLs carry only the fields that affect each view", () => {
    const client = new ApiClient("http://svc:9");
    const params = { ...DEFAULT_PARAMS, u: 0.75, beta: 0.9 };
    const edited = new URL(client.renderUrl("head_proxy", "edited", params));
    expect(edited.pathname).toBe("/api/scenes/head_proxy/render");
    expect([...edited.searchParams.keys()]).toEqual([
      "which", "u", "v", "sigma", "gamma", "omega_d", "beta", "exposure",
    ]);
    expect(edited.searchParams.get("u")).toBe("0.75");

    const diffuse = new URL(client.renderUrl("head_proxy", "diffuse", params));
    expect([...diffuse.searchParams.keys()]).toEqual([
      "which", "beta", "exposure",
    ]);

    const shadowed = new URL(client.renderUrl("head_proxy", "shadowed", params));
    expect(shadowed.searchParams.has("omega_d")).toBe(false);
    expect(shadowed.searchParams.has("beta")).toBe(false);

    const envmap = new URL(client.renderUrl("head_proxy", "envmap", params));
    expect([...envmap.searchParams.keys()]).toEqual(["which", "exposure"]);
  });

  test("trailing slash on the base URL is tolerated", () => {
    const client = new ApiClient("http://svc:9//");
    expect(client.renderUrl("s", "envmap", DEFAULT_PARAMS)).toMatch(
      /^http:\/\/svc:9\/api\/scenes\/s\/render\?/,
    );
  });

  test("render resolves the PNG bytes", async () => {
    const { fetchFn } = stub([png]);
    const client = new ApiClient("http://svc:9", fetchFn);
    const bytes = await client.render("s", "edited", DEFAULT_PARAMS);
    expect([...bytes]).toEqual([1, 2, 3]);
  });

  test("service error bodies become typed exceptions", async () => {
    const { fetchFn } = stub([
      () =>
        new Response(
          JSON.stringify({ error: "NoEnvironment", detail: "POST first" }),
          { status: 422, headers: { "content-type": "application/json" } },
        ),
    ]);
    const client = new ApiClient("http://svc:9", fetchFn);
    const failure = await client.render("s", "edited", DEFAULT_PARAMS).catch((e) => e);
    expect(failure).toBeInstanceOf(ServiceError);
    expect(failure.status).toBe(422);
    expect(failure.error).toBe("NoEnvironment");
    expect(failure.detail).toBe("POST first");
  });

  test("non-JSON error bodies still raise with the status", async () => {
    const { fetchFn } = stub([() => new Response("gateway mush", { status: 502 })]);
    const client = new ApiClient("http://svc:9", fetchFn);
    const failure = await client.scenes().catch((e) => e);
    expect(failure).toBeInstanceOf(ServiceError);
    expect(failure.status).toBe(502);
    expect(failure.error).toBe("HttpError");
  });

  test("postEnv sends a JSON body and parses the fit", async () => {
    const reply = {
      fit: { u: 0.5, v: 0.3, sigma: 0.1, gamma: 4, ambient: [0, 0, 0], peak_to_mean: 9 },
      env_width: 64,
      version: 1,
    };
    const { fetchFn, urls, inits } = stub([
      () =>
        new Response(JSON.stringify(reply), {
          status: 200,
          headers: { "content-type": "application/json" },
        }),
    ]);
    const client = new ApiClient("http://svc:9", fetchFn);
    const out = await client.postEnv("s", { builtin: "side_sun" });
    expect(out).toEqual(reply);
    expect(urls[0]).toBe("http://svc:9/api/scenes/s/env");
    expect(inits[0]?.method).toBe("POST");
    expect(JSON.parse(String(inits[0]?.body))).toEqual({ builtin: "side_sun" });
  });
});

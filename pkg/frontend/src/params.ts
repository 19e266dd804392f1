/** Editable parameters and their legal ranges.
 *
 * The ranges mirror what the render endpoint documents; every value that
 * leaves the UI passes through clampParams first, so an out-of-range
 * request is impossible by construction.
 */

export interface RenderParams {
  u: number;
  v: number;
  sigma: number;
  gamma: number;
  omega_d: number;
  beta: number;
  exposure: number;
}

export type ParamName = keyof RenderParams;

export interface ParamRange {
  min: number;
  max: number;
  step: number;
  /** longitude wraps instead of clamping */
  wrap?: boolean;
  label: string;
}

const SIGMA_MAX = Math.PI / 4;

export const RANGES: Record<ParamName, ParamRange> = {
  u: { min: 0, max: 1, step: 0.002, wrap: true, label: "longitude u" },
  v: { min: 0, max: 1, step: 0.002, label: "colatitude v" },
  // the service accepts sigma in (0, pi/4]; keep a positive floor
  sigma: { min: 0.01, max: SIGMA_MAX, step: 0.005, label: "light size σ" },
  gamma: { min: 0.1, max: 8, step: 0.05, label: "intensity γ" },
  omega_d: { min: 0, max: 1, step: 0.01, label: "softness ω_D" },
  beta: { min: 0.05, max: Math.PI, step: 0.01, label: "diffusion β" },
  exposure: { min: 0.1, max: 8, step: 0.05, label: "exposure" },
};

export const DEFAULT_PARAMS: RenderParams = {
  u: 0.5,
  v: 0.3,
  sigma: 0.12,
  gamma: 4,
  omega_d: 0.5,
  beta: 0.8,
  exposure: 2.5,
};

export function clampParam(name: ParamName, value: number): number {
  const range = RANGES[name];
  if (!Number.isFinite(value)) return range.min;
  if (range.wrap) {
    const span = range.max - range.min;
    const wrapped = (((value - range.min) % span) + span) % span;
    return range.min + wrapped;
  }
  return Math.min(range.max, Math.max(range.min, value));
}

export function clampParams(params: RenderParams): RenderParams {
  const out = { ...params };
  for (const name of Object.keys(RANGES) as ParamName[]) {
    out[name] = clampParam(name, params[name]);
  }
  return out;
}

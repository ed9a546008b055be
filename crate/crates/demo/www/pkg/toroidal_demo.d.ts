/* tslint:disable */
/* eslint-disable */

/**
 * `(1 - t) v + t f(v)` for every vertex.
 */
export function morphFrame(vertices: Float64Array, map: Float64Array, t: number): Float64Array;

/**
 * Parameterize a jittered `n_theta x n_phi` torus grid. Returns JSON with
 * the mesh, the initial and optimized maps, per-face area ratios, the
 * energy trace and the quality report.
 */
export function parameterizeTorus(n_theta: number, n_phi: number, jitter_fraction: number, method: string, max_iters: number, seed: number): string;

/**
 * Quality report JSON of a map onto the torus with radii `major`, `minor`.
 */
export function qualityReport(vertices: Float64Array, faces: Uint32Array, map: Float64Array, major: number, minor: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly morphFrame: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly parameterizeTorus: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly qualityReport: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

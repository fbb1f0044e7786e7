/* tslint:disable */
/* eslint-disable */

/**
 * Controller error of a single exact-policy solve on a `grid_n x grid_n` grid.
 */
export function controller_error_map(family: string, lengthscale: number, grid_n: number, quadrature_order: number, probe_n: number): Float64Array;

/**
 * Next greedy center as `[x, y, power]`.
 */
export function greedy_candidate(family: string, lengthscale: number, centers: Float64Array, probe_n: number): Float64Array;

/**
 * Power function of `centers` over a `probe_n x probe_n` grid.
 */
export function power_map(family: string, lengthscale: number, centers: Float64Array, probe_n: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly controller_error_map: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly greedy_candidate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly power_map: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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

/* tslint:disable */
/* eslint-disable */

/**
 * `{remain, forget, error_ratio, subspace_dim}` for `"exact"` or
 * `"pretrained"`.
 */
export function spectra(regime: string, seed: number, per_class: number): string;

/**
 * `{subspace_dim, remain, forget, error_ratio}`.
 */
export function subspace_errors(regime: string, seed: number, dim: number): string;

/**
 * `{subspace_dim, best_step, trace, baseline, unlearned}`. `ablate` is
 * `"none"`, `"rm"` (forgetting terms only) or `"fg"` (retention only).
 */
export function unlearn(seed: number, steps: number, learning_rate: number, ablate: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly spectra: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly subspace_errors: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly unlearn: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __externref_table_alloc: () => number;
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

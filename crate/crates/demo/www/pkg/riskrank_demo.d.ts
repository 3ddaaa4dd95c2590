/* tslint:disable */
/* eslint-disable */

/**
 * Chi-square robust mean at each radius, with the tightness flag.
 */
export function chi2_curve(values: Float64Array, rhos: Float64Array): string;

/**
 * Entropic value and risk premium of `values` at each `beta`.
 */
export function entropic_curve(values: Float64Array, betas: Float64Array): string;

/**
 * Soft-min aggregate of per-scorer values at each `gamma`.
 */
export function softmin_curve(values: Float64Array, gammas: Float64Array): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly chi2_curve: (a: number, b: number, c: number, d: number) => [number, number];
    readonly entropic_curve: (a: number, b: number, c: number, d: number) => [number, number];
    readonly softmin_curve: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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

/* tslint:disable */
/* eslint-disable */

/**
 * Large-sample limit of CPUE, MEM1 and MEM2 divided by the true λ_T, for
 * `n_points` values of λ_NT spread log-uniformly over [1e-4, 1e-1].
 */
export function expected_index_curves(lambda_target: number, p_target: number, p_nontarget: number, soak: number, n_points: number): string;

/**
 * Relative estimates of λ_T over `replicates` simulated surveys.
 */
export function sampling_distribution(lambda_target: number, lambda_nontarget: number, p_target: number, p_nontarget: number, hooks: number, sets: number, soak: number, replicates: number, seed: bigint): string;

/**
 * Simulates one survey and fits every demo method to it.
 */
export function simulate_fit(lambda_target: number, lambda_nontarget: number, p_target: number, p_nontarget: number, hooks: number, sets: number, soak: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly expected_index_curves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly sampling_distribution: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly simulate_fit: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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

/* tslint:disable */
/* eslint-disable */

/**
 * Which candidate frequencies a single transmitter may use along the route.
 */
export function feasibility_map(sir_min_db: number, gamma_dtt_dbm: number, step_m: number): string;

/**
 * Draws a synthetic drive test and fits the map with `segment_len`
 * samples per segment.
 */
export function fit_campaign(seed: number, segment_len: number): string;

/**
 * Places both platoon leaders on the route and runs every strategy once.
 */
export function pick_channels(leader0_m: number, leader1_m: number, sir_min_db: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly feasibility_map: (a: number, b: number, c: number) => [number, number, number, number];
    readonly fit_campaign: (a: number, b: number) => [number, number, number, number];
    readonly pick_channels: (a: number, b: number, c: number) => [number, number, number, number];
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

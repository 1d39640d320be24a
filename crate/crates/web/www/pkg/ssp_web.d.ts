/* tslint:disable */
/* eslint-disable */
/**
 * Soft assignment of the point `(x, y)` over the demo codebook. `kind` is `"cosine"` or `"l2"`.
 */
export function soft_assignment(x: number, y: number, tau: number, kind: string): string;
/**
 * PQ mAP and memory for each subspace count in `subspaces`.
 */
export function pq_tradeoff(seed: number, subspaces: Uint32Array): string;
/**
 * Trains the demo query encoder. `loss` is `"ssp"` or `"reg"`.
 */
export function train_alignment(seed: number, epochs: number, loss: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
  readonly memory: WebAssembly.Memory;
  readonly pq_tradeoff: (a: number, b: number, c: number) => [number, number, number, number];
  readonly soft_assignment: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
  readonly train_alignment: (a: number, b: number, c: number, d: number) => [number, number, number, number];
  readonly __wbindgen_export_0: WebAssembly.Table;
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

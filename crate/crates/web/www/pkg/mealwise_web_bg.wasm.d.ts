/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const ablation_curves: (a: number, b: number) => [number, number];
export const default_requests: () => [number, number];
export const gate_sweep: (a: number, b: number) => [number, number];
export const trace_personalizer: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

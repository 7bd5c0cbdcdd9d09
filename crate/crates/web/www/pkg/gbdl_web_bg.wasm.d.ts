/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_dropoutdemo_free: (a: number, b: number) => void;
export const __wbg_fusion_free: (a: number, b: number) => void;
export const __wbg_sliceview_free: (a: number, b: number) => void;
export const __wbg_uncertainty_free: (a: number, b: number) => void;
export const dropoutdemo_new: (a: bigint, b: number, c: number) => [number, number, number];
export const dropoutdemo_predict: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const fuse_1d: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const fusion_fused_pdf: (a: number) => [number, number];
export const fusion_kl: (a: number) => number;
export const fusion_mean: (a: number) => number;
export const fusion_sd: (a: number) => number;
export const fusion_slice_count: (a: number) => number;
export const fusion_slice_pdf: (a: number, b: number) => [number, number];
export const fusion_xs: (a: number) => [number, number];
export const sliceview_depth: (a: number) => number;
export const sliceview_height: (a: number) => number;
export const sliceview_intensity: (a: number) => [number, number];
export const sliceview_mask: (a: number) => [number, number];
export const sliceview_width: (a: number) => number;
export const synthetic_slice: (a: bigint, b: number, c: number, d: number, e: number) => [number, number, number];
export const uncertainty_entropy: (a: number) => [number, number];
export const uncertainty_height: (a: number) => number;
export const uncertainty_intensity: (a: number) => [number, number];
export const uncertainty_probability: (a: number) => [number, number];
export const uncertainty_truth: (a: number) => [number, number];
export const uncertainty_width: (a: number) => number;
export const sliceview_foreground: (a: number) => number;
export const uncertainty_dice: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

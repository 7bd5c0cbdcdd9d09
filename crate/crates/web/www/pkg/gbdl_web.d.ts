/* tslint:disable */
/* eslint-disable */

/**
 * A small segmentation network trained in the page, queried with MC dropout.
 */
export class DropoutDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Trains on a handful of small labeled volumes; takes a few seconds.
     */
    constructor(seed: bigint, difficulty: number, epochs: number);
    /**
     * Runs `passes` stochastic forward passes on test volume `v` with the
     * given dropout rate and returns slice `z`.
     */
    predict(v: number, passes: number, dropout: number, z: number): Uncertainty;
}

/**
 * Densities of one-dimensional slice Gaussians and their product.
 */
export class Fusion {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    fused_pdf(): Float64Array;
    slice_count(): number;
    slice_pdf(i: number): Float64Array;
    xs(): Float64Array;
    /**
     * KL of the fused Gaussian from the standard normal, in nats.
     */
    readonly kl: number;
    readonly mean: number;
    readonly sd: number;
}

/**
 * One slice of a synthetic volume.
 */
export class SliceView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    intensity(): Float64Array;
    mask(): Uint8Array;
    readonly depth: number;
    /**
     * Foreground fraction of the whole volume.
     */
    readonly foreground: number;
    readonly height: number;
    readonly width: number;
}

/**
 * MC-dropout output for one test slice.
 */
export class Uncertainty {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Voxel entropy in bits.
     */
    entropy(): Float64Array;
    intensity(): Float64Array;
    /**
     * Mean foreground probability over the passes.
     */
    probability(): Float64Array;
    truth(): Uint8Array;
    /**
     * Dice of the hard mask over the whole test volume.
     */
    readonly dice: number;
    readonly height: number;
    readonly width: number;
}

/**
 * Fuses 1-D slices given their means and standard deviations and samples
 * every density on `points` evenly spaced values in `[lo, hi]`.
 */
export function fuse_1d(means: Float64Array, sds: Float64Array, lo: number, hi: number, points: number): Fusion;

/**
 * Generates volume `index` for `seed` at the given noise level and returns
 * slice `z` (clamped to the volume).
 */
export function synthetic_slice(seed: bigint, index: number, difficulty: number, size: number, z: number): SliceView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_dropoutdemo_free: (a: number, b: number) => void;
    readonly __wbg_fusion_free: (a: number, b: number) => void;
    readonly __wbg_sliceview_free: (a: number, b: number) => void;
    readonly __wbg_uncertainty_free: (a: number, b: number) => void;
    readonly dropoutdemo_new: (a: bigint, b: number, c: number) => [number, number, number];
    readonly dropoutdemo_predict: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly fuse_1d: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly fusion_fused_pdf: (a: number) => [number, number];
    readonly fusion_kl: (a: number) => number;
    readonly fusion_mean: (a: number) => number;
    readonly fusion_sd: (a: number) => number;
    readonly fusion_slice_count: (a: number) => number;
    readonly fusion_slice_pdf: (a: number, b: number) => [number, number];
    readonly fusion_xs: (a: number) => [number, number];
    readonly sliceview_depth: (a: number) => number;
    readonly sliceview_height: (a: number) => number;
    readonly sliceview_intensity: (a: number) => [number, number];
    readonly sliceview_mask: (a: number) => [number, number];
    readonly sliceview_width: (a: number) => number;
    readonly synthetic_slice: (a: bigint, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly uncertainty_entropy: (a: number) => [number, number];
    readonly uncertainty_height: (a: number) => number;
    readonly uncertainty_intensity: (a: number) => [number, number];
    readonly uncertainty_probability: (a: number) => [number, number];
    readonly uncertainty_truth: (a: number) => [number, number];
    readonly uncertainty_width: (a: number) => number;
    readonly sliceview_foreground: (a: number) => number;
    readonly uncertainty_dice: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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

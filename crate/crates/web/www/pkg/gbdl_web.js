/* @ts-self-types="./gbdl_web.d.ts" */

/**
 * A small segmentation network trained in the page, queried with MC dropout.
 */
export class DropoutDemo {
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        DropoutDemoFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_dropoutdemo_free(ptr, 0);
    }
    /**
     * Trains on a handful of small labeled volumes; takes a few seconds.
     * @param {bigint} seed
     * @param {number} difficulty
     * @param {number} epochs
     */
    constructor(seed, difficulty, epochs) {
        const ret = wasm.dropoutdemo_new(seed, difficulty, epochs);
        if (ret[2]) {
            throw takeFromExternrefTable0(ret[1]);
        }
        this.__wbg_ptr = ret[0];
        DropoutDemoFinalization.register(this, this.__wbg_ptr, this);
        return this;
    }
    /**
     * Runs `passes` stochastic forward passes on test volume `v` with the
     * given dropout rate and returns slice `z`.
     * @param {number} v
     * @param {number} passes
     * @param {number} dropout
     * @param {number} z
     * @returns {Uncertainty}
     */
    predict(v, passes, dropout, z) {
        const ret = wasm.dropoutdemo_predict(this.__wbg_ptr, v, passes, dropout, z);
        if (ret[2]) {
            throw takeFromExternrefTable0(ret[1]);
        }
        return Uncertainty.__wrap(ret[0]);
    }
}
if (Symbol.dispose) DropoutDemo.prototype[Symbol.dispose] = DropoutDemo.prototype.free;

/**
 * Densities of one-dimensional slice Gaussians and their product.
 */
export class Fusion {
    static __wrap(ptr) {
        const obj = Object.create(Fusion.prototype);
        obj.__wbg_ptr = ptr;
        FusionFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        FusionFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_fusion_free(ptr, 0);
    }
    /**
     * @returns {Float64Array}
     */
    fused_pdf() {
        const ret = wasm.fusion_fused_pdf(this.__wbg_ptr);
        var v1 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
        return v1;
    }
    /**
     * KL of the fused Gaussian from the standard normal, in nats.
     * @returns {number}
     */
    get kl() {
        const ret = wasm.fusion_kl(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get mean() {
        const ret = wasm.fusion_mean(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get sd() {
        const ret = wasm.fusion_sd(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    slice_count() {
        const ret = wasm.fusion_slice_count(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * @param {number} i
     * @returns {Float64Array}
     */
    slice_pdf(i) {
        const ret = wasm.fusion_slice_pdf(this.__wbg_ptr, i);
        var v1 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
        return v1;
    }
    /**
     * @returns {Float64Array}
     */
    xs() {
        const ret = wasm.fusion_xs(this.__wbg_ptr);
        var v1 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
        return v1;
    }
}
if (Symbol.dispose) Fusion.prototype[Symbol.dispose] = Fusion.prototype.free;

/**
 * One slice of a synthetic volume.
 */
export class SliceView {
    static __wrap(ptr) {
        const obj = Object.create(SliceView.prototype);
        obj.__wbg_ptr = ptr;
        SliceViewFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        SliceViewFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_sliceview_free(ptr, 0);
    }
    /**
     * @returns {number}
     */
    get depth() {
        const ret = wasm.sliceview_depth(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * Foreground fraction of the whole volume.
     * @returns {number}
     */
    get foreground() {
        const ret = wasm.sliceview_foreground(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get height() {
        const ret = wasm.sliceview_height(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * @returns {Float64Array}
     */
    intensity() {
        const ret = wasm.sliceview_intensity(this.__wbg_ptr);
        var v1 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
        return v1;
    }
    /**
     * @returns {Uint8Array}
     */
    mask() {
        const ret = wasm.sliceview_mask(this.__wbg_ptr);
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * @returns {number}
     */
    get width() {
        const ret = wasm.sliceview_width(this.__wbg_ptr);
        return ret >>> 0;
    }
}
if (Symbol.dispose) SliceView.prototype[Symbol.dispose] = SliceView.prototype.free;

/**
 * MC-dropout output for one test slice.
 */
export class Uncertainty {
    static __wrap(ptr) {
        const obj = Object.create(Uncertainty.prototype);
        obj.__wbg_ptr = ptr;
        UncertaintyFinalization.register(obj, obj.__wbg_ptr, obj);
        return obj;
    }
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        UncertaintyFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_uncertainty_free(ptr, 0);
    }
    /**
     * Dice of the hard mask over the whole test volume.
     * @returns {number}
     */
    get dice() {
        const ret = wasm.uncertainty_dice(this.__wbg_ptr);
        return ret;
    }
    /**
     * Voxel entropy in bits.
     * @returns {Float64Array}
     */
    entropy() {
        const ret = wasm.uncertainty_entropy(this.__wbg_ptr);
        var v1 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
        return v1;
    }
    /**
     * @returns {number}
     */
    get height() {
        const ret = wasm.uncertainty_height(this.__wbg_ptr);
        return ret >>> 0;
    }
    /**
     * @returns {Float64Array}
     */
    intensity() {
        const ret = wasm.uncertainty_intensity(this.__wbg_ptr);
        var v1 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
        return v1;
    }
    /**
     * Mean foreground probability over the passes.
     * @returns {Float64Array}
     */
    probability() {
        const ret = wasm.uncertainty_probability(this.__wbg_ptr);
        var v1 = getArrayF64FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 8, 8);
        return v1;
    }
    /**
     * @returns {Uint8Array}
     */
    truth() {
        const ret = wasm.uncertainty_truth(this.__wbg_ptr);
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * @returns {number}
     */
    get width() {
        const ret = wasm.uncertainty_width(this.__wbg_ptr);
        return ret >>> 0;
    }
}
if (Symbol.dispose) Uncertainty.prototype[Symbol.dispose] = Uncertainty.prototype.free;

/**
 * Fuses 1-D slices given their means and standard deviations and samples
 * every density on `points` evenly spaced values in `[lo, hi]`.
 * @param {Float64Array} means
 * @param {Float64Array} sds
 * @param {number} lo
 * @param {number} hi
 * @param {number} points
 * @returns {Fusion}
 */
export function fuse_1d(means, sds, lo, hi, points) {
    const ptr0 = passArrayF64ToWasm0(means, wasm.__wbindgen_malloc);
    const len0 = WASM_VECTOR_LEN;
    const ptr1 = passArrayF64ToWasm0(sds, wasm.__wbindgen_malloc);
    const len1 = WASM_VECTOR_LEN;
    const ret = wasm.fuse_1d(ptr0, len0, ptr1, len1, lo, hi, points);
    if (ret[2]) {
        throw takeFromExternrefTable0(ret[1]);
    }
    return Fusion.__wrap(ret[0]);
}

/**
 * Generates volume `index` for `seed` at the given noise level and returns
 * slice `z` (clamped to the volume).
 * @param {bigint} seed
 * @param {number} index
 * @param {number} difficulty
 * @param {number} size
 * @param {number} z
 * @returns {SliceView}
 */
export function synthetic_slice(seed, index, difficulty, size, z) {
    const ret = wasm.synthetic_slice(seed, index, difficulty, size, z);
    if (ret[2]) {
        throw takeFromExternrefTable0(ret[1]);
    }
    return SliceView.__wrap(ret[0]);
}
function __wbg_get_imports() {
    const import0 = {
        __proto__: null,
        __wbg_Error_92b29b0548f8b746: function(arg0, arg1) {
            const ret = Error(getStringFromWasm0(arg0, arg1));
            return ret;
        },
        __wbg___wbindgen_throw_344f42d3211c4765: function(arg0, arg1) {
            throw new Error(getStringFromWasm0(arg0, arg1));
        },
        __wbindgen_init_externref_table: function() {
            const table = wasm.__wbindgen_externrefs;
            const offset = table.grow(4);
            table.set(0, undefined);
            table.set(offset + 0, undefined);
            table.set(offset + 1, null);
            table.set(offset + 2, true);
            table.set(offset + 3, false);
        },
    };
    return {
        __proto__: null,
        "./gbdl_web_bg.js": import0,
    };
}

const DropoutDemoFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_dropoutdemo_free(ptr, 1));
const FusionFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_fusion_free(ptr, 1));
const SliceViewFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_sliceview_free(ptr, 1));
const UncertaintyFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_uncertainty_free(ptr, 1));

function getArrayF64FromWasm0(ptr, len) {
    ptr = ptr >>> 0;
    return getFloat64ArrayMemory0().subarray(ptr / 8, ptr / 8 + len);
}

function getArrayU8FromWasm0(ptr, len) {
    ptr = ptr >>> 0;
    return getUint8ArrayMemory0().subarray(ptr / 1, ptr / 1 + len);
}

let cachedFloat64ArrayMemory0 = null;
function getFloat64ArrayMemory0() {
    if (cachedFloat64ArrayMemory0 === null || cachedFloat64ArrayMemory0.byteLength === 0) {
        cachedFloat64ArrayMemory0 = new Float64Array(wasm.memory.buffer);
    }
    return cachedFloat64ArrayMemory0;
}

function getStringFromWasm0(ptr, len) {
    return decodeText(ptr >>> 0, len);
}

let cachedUint8ArrayMemory0 = null;
function getUint8ArrayMemory0() {
    if (cachedUint8ArrayMemory0 === null || cachedUint8ArrayMemory0.byteLength === 0) {
        cachedUint8ArrayMemory0 = new Uint8Array(wasm.memory.buffer);
    }
    return cachedUint8ArrayMemory0;
}

function passArrayF64ToWasm0(arg, malloc) {
    const ptr = malloc(arg.length * 8, 8) >>> 0;
    getFloat64ArrayMemory0().set(arg, ptr / 8);
    WASM_VECTOR_LEN = arg.length;
    return ptr;
}

function takeFromExternrefTable0(idx) {
    const value = wasm.__wbindgen_externrefs.get(idx);
    wasm.__externref_table_dealloc(idx);
    return value;
}

let cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
cachedTextDecoder.decode();
const MAX_SAFARI_DECODE_BYTES = 2146435072;
let numBytesDecoded = 0;
function decodeText(ptr, len) {
    numBytesDecoded += len;
    if (numBytesDecoded >= MAX_SAFARI_DECODE_BYTES) {
        cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
        cachedTextDecoder.decode();
        numBytesDecoded = len;
    }
    return cachedTextDecoder.decode(getUint8ArrayMemory0().subarray(ptr, ptr + len));
}

let WASM_VECTOR_LEN = 0;

let wasmModule, wasmInstance, wasm;
function __wbg_finalize_init(instance, module) {
    wasmInstance = instance;
    wasm = instance.exports;
    wasmModule = module;
    cachedFloat64ArrayMemory0 = null;
    cachedUint8ArrayMemory0 = null;
    wasm.__wbindgen_start();
    return wasm;
}

async function __wbg_load(module, imports) {
    if (typeof Response === 'function' && module instanceof Response) {
        if (typeof WebAssembly.instantiateStreaming === 'function') {
            try {
                return await WebAssembly.instantiateStreaming(module, imports);
            } catch (e) {
                const validResponse = module.ok && expectedResponseType(module.type);

                if (validResponse && module.headers.get('Content-Type') !== 'application/wasm') {
                    console.warn("`WebAssembly.instantiateStreaming` failed because your server does not serve Wasm with `application/wasm` MIME type. Falling back to `WebAssembly.instantiate` which is slower. Original error:\n", e);

                } else { throw e; }
            }
        }

        const bytes = await module.arrayBuffer();
        return await WebAssembly.instantiate(bytes, imports);
    } else {
        const instance = await WebAssembly.instantiate(module, imports);

        if (instance instanceof WebAssembly.Instance) {
            return { instance, module };
        } else {
            return instance;
        }
    }

    function expectedResponseType(type) {
        switch (type) {
            case 'basic': case 'cors': case 'default': return true;
        }
        return false;
    }
}

function initSync(module) {
    if (wasm !== undefined) return wasm;


    if (module !== undefined) {
        if (Object.getPrototypeOf(module) === Object.prototype) {
            ({module} = module)
        } else {
            console.warn('using deprecated parameters for `initSync()`; pass a single object instead')
        }
    }

    const imports = __wbg_get_imports();
    if (!(module instanceof WebAssembly.Module)) {
        module = new WebAssembly.Module(module);
    }
    const instance = new WebAssembly.Instance(module, imports);
    return __wbg_finalize_init(instance, module);
}

async function __wbg_init(module_or_path) {
    if (wasm !== undefined) return wasm;


    if (module_or_path !== undefined) {
        if (Object.getPrototypeOf(module_or_path) === Object.prototype) {
            ({module_or_path} = module_or_path)
        } else {
            console.warn('using deprecated parameters for the initialization function; pass a single object instead')
        }
    }

    if (module_or_path === undefined) {
        module_or_path = new URL('gbdl_web_bg.wasm', import.meta.url);
    }
    const imports = __wbg_get_imports();

    if (typeof module_or_path === 'string' || (typeof Request === 'function' && module_or_path instanceof Request) || (typeof URL === 'function' && module_or_path instanceof URL)) {
        module_or_path = fetch(module_or_path);
    }

    const { instance, module } = await __wbg_load(await module_or_path, imports);

    return __wbg_finalize_init(instance, module);
}

export { initSync, __wbg_init as default };

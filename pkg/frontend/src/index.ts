/**
 * Node bindings for the gidle masking processors.
 *
 * The math stays in the core package; this layer only marshals flat float64
 * buffers across the `gidle process` JSONL stdio surface. -inf crosses the
 * wire as null (JSON has no infinities) and comes back as -Infinity.
 */

import { spawn, spawnSync, ChildProcessWithoutNullStreams } from 'node:child_process';
import { createInterface, Interface } from 'node:readline';

export type MaskMethod = 'naive' | 'gidle';

const PYTHON = process.env.GIDLE_PYTHON ?? 'python3';

export class DimensionMismatchError extends Error {}
export class NoAllowedTokensError extends Error {}
export class ProcessorError extends Error {
    constructor(message: string, public readonly kind: string) {
        super(message);
    }
}

/** Immutable handle over a validated banned-id list. */
export class BoundBanSet {
    readonly ids: readonly number[];
    readonly vocabSize: number;

    constructor(ids: Iterable<number>, vocabSize: number) {
        if (!Number.isInteger(vocabSize) || vocabSize < 2) {
            throw new DimensionMismatchError(`vocabSize must be an integer >= 2, got ${vocabSize}`);
        }
        const sorted = [...new Set([...ids].map((i) => Math.trunc(i)))].sort((a, b) => a - b);
        for (const id of sorted) {
            if (id < 0 || id >= vocabSize) {
                throw new DimensionMismatchError(`banned id ${id} out of range for vocab size ${vocabSize}`);
            }
        }
        if (sorted.length >= vocabSize) {
            throw new NoAllowedTokensError('ban set covers the entire vocabulary');
        }
        this.ids = Object.freeze(sorted);
        this.vocabSize = vocabSize;
    }
}

interface WireResponse {
    logits?: (number | null)[];
    error?: string;
    kind?: string;
}

function encodeLogits(logits: Float64Array): (number | null)[] {
    const out: (number | null)[] = new Array(logits.length);
    for (let i = 0; i < logits.length; i++) {
        out[i] = logits[i] === -Infinity ? null : logits[i];
    }
    return out;
}

function decodeResponse(resp: WireResponse): Float64Array {
    if (resp.error !== undefined) {
        if (resp.kind === 'NoAllowedTokens' || resp.kind === 'NoAllowedMass') {
            throw new NoAllowedTokensError(resp.error);
        }
        throw new ProcessorError(resp.error, resp.kind ?? 'unknown');
    }
    const values = resp.logits!;
    const out = new Float64Array(values.length);
    for (let i = 0; i < values.length; i++) {
        out[i] = values[i] === null ? -Infinity : (values[i] as number);
    }
    return out;
}

function buildRequest(method: MaskMethod, logits: Float64Array, banset: BoundBanSet): string {
    if (logits.length !== banset.vocabSize) {
        throw new DimensionMismatchError(
            `logit array length ${logits.length} != declared vocab size ${banset.vocabSize}`,
        );
    }
    return JSON.stringify({ method, logits: encodeLogits(logits), banned: banset.ids });
}

/**
 * Apply one masking processor to a logit vector. Spawns one core process per
 * call; use GidleSession for batches.
 */
export function boundProcess(method: MaskMethod, logits: Float64Array, banset: BoundBanSet): Float64Array {
    const request = buildRequest(method, logits, banset);
    const proc = spawnSync(PYTHON, ['-m', 'gidle', 'process'], {
        input: request + '\n',
        encoding: 'utf-8',
        maxBuffer: 64 * 1024 * 1024,
    });
    if (proc.status !== 0) {
        throw new ProcessorError(`gidle process exited with ${proc.status}: ${proc.stderr}`, 'subprocess');
    }
    return decodeResponse(JSON.parse(proc.stdout.trim().split('\n')[0]) as WireResponse);
}

/** Version string of the core package; bindings must match it exactly. */
export function boundVersion(): string {
    const proc = spawnSync(PYTHON, ['-m', 'gidle', '--version'], { encoding: 'utf-8' });
    if (proc.status !== 0) {
        throw new ProcessorError(`cannot query core version: ${proc.stderr}`, 'subprocess');
    }
    return proc.stdout.trim();
}

/**
 * Persistent core process speaking JSONL over stdio. Requests are answered
 * in order; each call resolves with the processed vector.
 */
export class GidleSession {
    private proc: ChildProcessWithoutNullStreams;
    private lines: Interface;
    private pending: { resolve: (v: Float64Array) => void; reject: (e: Error) => void }[] = [];

    constructor() {
        this.proc = spawn(PYTHON, ['-m', 'gidle', 'process'], { stdio: 'pipe' });
        this.lines = createInterface({ input: this.proc.stdout });
        this.lines.on('line', (line) => {
            const waiter = this.pending.shift();
            if (!waiter) return;
            try {
                waiter.resolve(decodeResponse(JSON.parse(line) as WireResponse));
            } catch (err) {
                waiter.reject(err as Error);
            }
        });
    }

    process(method: MaskMethod, logits: Float64Array, banset: BoundBanSet): Promise<Float64Array> {
        const request = buildRequest(method, logits, banset);
        return new Promise((resolve, reject) => {
            this.pending.push({ resolve, reject });
            this.proc.stdin.write(request + '\n');
        });
    }

    close(): void {
        this.proc.stdin.end();
        this.proc.kill();
    }
}

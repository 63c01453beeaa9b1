/**
 * Thin host bindings over the kpp command-line interface.
 *
 * Each bound operation validates shapes at the boundary, hands the work to
 * the core through its documented file formats, and decodes the result; no
 * algorithmic logic lives on this side.  Core errors cross the boundary as
 * typed exceptions carrying the core's message.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import {
    Coupling,
    SampleSet,
    parseSampleSet,
    serializeEmbeddings,
    serializeIsingProblem,
} from "./formats.js";

/** Boundary validation failure (shape/domain mismatch caught host-side). */
export class ValidationError extends Error {}

/** The core rejected the invocation (its message is preserved verbatim). */
export class CoreError extends Error {
    constructor(message: string, public readonly exitCode: number) {
        super(message);
    }
}

export interface SampleParams {
    reads: number;
    seed: number;
    topK?: number | null;
    readOutput?: "best" | "final";
    schedule?: { tInitial: number; tFinal?: number; decay?: number; sweepsPerStage?: number };
}

const KPP_BIN = process.env.KPP_CLI ?? "kpp";

function runCli(args: string[], cwd: string): string {
    try {
        return execFileSync(KPP_BIN, args, { encoding: "utf8", cwd, stdio: ["ignore", "pipe", "pipe"] });
    } catch (error) {
        const err = error as { status?: number | null; stderr?: string | Buffer; message?: string };
        const stderr = (err.stderr ?? "").toString().trim();
        // the core prints its message as the last `error: ...` line; anything
        // before it (e.g. library warnings) is noise
        const match = stderr.match(/^(?:usage )?error:\s*(.*)$/gim);
        const message = match
            ? match[match.length - 1].replace(/^(?:usage )?error:\s*/i, "")
            : stderr || err.message || "kpp invocation failed";
        throw new CoreError(message, err.status ?? -1);
    }
}

function withTempDir<T>(body: (dir: string) => T): T {
    const dir = mkdtempSync(join(tmpdir(), "kpp-host-"));
    try {
        return body(dir);
    } finally {
        rmSync(dir, { recursive: true, force: true });
    }
}

function checkMatrix(name: string, rows: number[][], width?: number): number {
    if (rows.length === 0) throw new ValidationError(`${name} must be nonempty`);
    const d = width ?? rows[0].length;
    for (const row of rows) {
        if (row.length !== d) throw new ValidationError(`${name} rows must all have length ${d}`);
        for (const v of row) {
            if (typeof v !== "number" || !Number.isFinite(v)) {
                throw new ValidationError(`${name} entries must be finite numbers`);
            }
        }
    }
    return d;
}

function checkVector(name: string, v: number[], length?: number): void {
    if (length !== undefined && v.length !== length) {
        throw new ValidationError(`${name} must have length ${length}, got ${v.length}`);
    }
    for (const x of v) {
        if (typeof x !== "number" || !Number.isFinite(x)) {
            throw new ValidationError(`${name} entries must be finite numbers`);
        }
    }
}

/**
 * Draw annealing samples for the Ising problem (field, coupling).
 *
 * Delegates to `kpp sample --backend sa`; results are identical to the CLI's
 * for the same seed, including entry order.
 */
export function boundSample(field: number[], coupling: Coupling[], params: SampleParams): SampleSet {
    checkVector("field", field);
    const n = field.length;
    if (n === 0) throw new ValidationError("field must be nonempty");
    for (const [i, j, c] of coupling) {
        if (!Number.isInteger(i) || !Number.isInteger(j) || i < 0 || j < 0 || i >= n || j >= n || i === j) {
            throw new ValidationError(`coupling key (${i}, ${j}) out of range for n=${n}`);
        }
        if (!Number.isFinite(c)) throw new ValidationError("coupling coefficients must be finite");
    }
    return withTempDir((dir) => {
        const problemPath = join(dir, "problem.ising");
        const outPath = join(dir, "samples.txt");
        writeFileSync(problemPath, serializeIsingProblem(field, coupling));
        const args = [
            "sample",
            "--in", problemPath,
            "--backend", "sa",
            "--reads", String(params.reads),
            "--seed", String(params.seed),
            "--top-k", params.topK == null ? "none" : String(params.topK),
            "--read-output", params.readOutput ?? "best",
            "--out", outPath,
        ];
        if (params.schedule) {
            args.push("--t-initial", String(params.schedule.tInitial));
            if (params.schedule.tFinal !== undefined) args.push("--t-final", String(params.schedule.tFinal));
            if (params.schedule.decay !== undefined) args.push("--decay", String(params.schedule.decay));
            if (params.schedule.sweepsPerStage !== undefined) {
                args.push("--sweeps-per-stage", String(params.schedule.sweepsPerStage));
            }
        }
        runCli(args, dir);
        return parseSampleSet(readFileSync(outPath, "utf8"));
    });
}

/**
 * QUBO-driven diverse batch selection over unit-normalized embeddings.
 *
 * Delegates to `kpp select-batch`; returns the chosen store indices.
 */
export function boundSelectBatch(
    vectors: number[][],
    uncertainty: number[],
    k: number,
    gamma = 1.0,
    lambda: number | "auto" = "auto",
    seed = 0,
): number[] {
    checkMatrix("vectors", vectors);
    checkVector("uncertainty", uncertainty, vectors.length);
    if (!Number.isInteger(k) || k < 1) throw new ValidationError("k must be a positive integer");
    return withTempDir((dir) => {
        const embPath = join(dir, "embeddings.txt");
        const outPath = join(dir, "selection.json");
        writeFileSync(embPath, serializeEmbeddings(vectors, uncertainty));
        runCli(
            [
                "select-batch",
                "--embeddings", embPath,
                "--k", String(k),
                "--gamma", String(gamma),
                "--lambda", lambda === "auto" ? "auto" : String(lambda),
                "--seed", String(seed),
                "--out", outPath,
            ],
            dir,
        );
        const payload = JSON.parse(readFileSync(outPath, "utf8")) as { chosen_indices: number[] };
        return payload.chosen_indices;
    });
}

/**
 * Elementwise continuous relaxation of Bernoulli latents.
 *
 * Delegates to `kpp relax`; matches the core within 1e-12.
 */
export function boundRelaxZeta(rho: number[], q: number[], beta = 0.5): number[] {
    checkVector("rho", rho);
    checkVector("q", q, rho.length);
    if (rho.length === 0) throw new ValidationError("rho must be nonempty");
    return withTempDir((dir) => {
        const outPath = join(dir, "zeta.txt");
        runCli(
            [
                "relax",
                "--rho", rho.map(String).join(","),
                "--q", q.map(String).join(","),
                "--beta", String(beta),
                "--out", outPath,
            ],
            dir,
        );
        return readFileSync(outPath, "utf8")
            .split("\n")
            .filter((line) => line.trim() !== "")
            .map(Number);
    });
}

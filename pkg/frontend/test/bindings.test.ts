/**
 * Boundary parity: every bound operation reproduces the CLI/core results for
 * identical inputs and seeds (bit-exact integers, 1e-12 floats), and core
 * errors surface as typed exceptions with the core message preserved.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
    CoreError,
    ValidationError,
    boundRelaxZeta,
    boundSample,
    boundSelectBatch,
} from "../src/bindings.js";
import { parseSampleSet, serializeEmbeddings, serializeIsingProblem } from "../src/formats.js";

const KPP = process.env.KPP_CLI ?? "kpp";
const scratch = mkdtempSync(join(tmpdir(), "kpp-parity-"));
afterAll(() => rmSync(scratch, { recursive: true, force: true }));

function cli(args: string[]): string {
    return execFileSync(KPP, args, { encoding: "utf8", cwd: scratch });
}

describe("boundSample", () => {
    it("reproduces the CLI sample fixture bit for bit (n=2 ferromagnet, seed 7)", () => {
        const problemPath = join(scratch, "ferro2.ising");
        const outPath = join(scratch, "expected.txt");
        writeFileSync(problemPath, serializeIsingProblem([0, 0], [[0, 1, -1]]));
        cli([
            "sample", "--in", problemPath, "--backend", "sa", "--reads", "40",
            "--seed", "7", "--top-k", "none", "--out", outPath,
        ]);
        const expected = parseSampleSet(readFileSync(outPath, "utf8"));
        const got = boundSample([0, 0], [[0, 1, -1]], { reads: 40, seed: 7, topK: null });
        expect(got.n).toBe(expected.n);
        expect(got.spins).toEqual(expected.spins);
        expect(got.multiplicities).toEqual(expected.multiplicities);
        got.energies.forEach((e, idx) => expect(Math.abs(e - expected.energies[idx])).toBe(0));
        expect(got.energies[0]).toBe(-1);
    });

    it("pools uniform reads on a flat landscape", () => {
        const got = boundSample([0, 0], [], { reads: 200, seed: 3, topK: null });
        expect(got.n).toBe(2);
        expect(got.spins.length).toBe(4); // all four configs show up
        expect(got.multiplicities.reduce((a, b) => a + b, 0)).toBe(200);
        got.energies.forEach((e) => expect(e).toBe(0));
    });

    it("honors schedules and read_output identically to the CLI", () => {
        const field = [0.3, -0.2, 0.1];
        const coupling: [number, number, number][] = [
            [0, 1, -0.7],
            [1, 2, 0.4],
        ];
        const problemPath = join(scratch, "p3.ising");
        const outPath = join(scratch, "p3.txt");
        writeFileSync(problemPath, serializeIsingProblem(field, coupling));
        cli([
            "sample", "--in", problemPath, "--backend", "sa", "--reads", "25",
            "--seed", "11", "--top-k", "none", "--read-output", "final",
            "--t-initial", "2.5", "--t-final", "1.0", "--decay", "0.9",
            "--sweeps-per-stage", "3", "--out", outPath,
        ]);
        const expected = parseSampleSet(readFileSync(outPath, "utf8"));
        const got = boundSample(field, coupling, {
            reads: 25,
            seed: 11,
            topK: null,
            readOutput: "final",
            schedule: { tInitial: 2.5, tFinal: 1.0, decay: 0.9, sweepsPerStage: 3 },
        });
        expect(got).toEqual(expected);
    });

    it("rejects a wrong-length coupling index at the boundary", () => {
        expect(() => boundSample([0, 0], [[0, 5, 1]], { reads: 5, seed: 0 })).toThrow(ValidationError);
        expect(() => boundSample([], [], { reads: 5, seed: 0 })).toThrow(ValidationError);
        expect(() => boundSample([0, Number.NaN], [], { reads: 5, seed: 0 })).toThrow(ValidationError);
    });
});

describe("boundSelectBatch", () => {
    it("chooses exactly one of two identical high-uncertainty candidates", () => {
        const chosen = boundSelectBatch(
            [
                [1, 0],
                [1, 0],
            ],
            [1, 1],
            1,
            3.0,
            0,
            0,
        );
        expect(chosen.length).toBe(1);
        expect([0, 1]).toContain(chosen[0]);
    });

    it("selects every positive-uncertainty candidate when gamma = lambda = 0", () => {
        const vectors = [
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [1, 1, 0],
        ];
        const uncertainty = [0.5, 0.0, 0.25, 0.125];
        const chosen = boundSelectBatch(vectors, uncertainty, 1, 0, 0, 0);
        expect(chosen).toEqual([0, 2, 3]);
    });

    it("matches the CLI result for the same inputs and seed", () => {
        const vectors = [
            [1, 0, 0],
            [0.9, 0.1, 0],
            [0, 1, 0],
            [0, 0.9, 0.2],
            [0, 0, 1],
        ];
        const uncertainty = [0.9, 0.8, 0.7, 0.6, 0.5];
        const embPath = join(scratch, "emb.txt");
        const outPath = join(scratch, "sel.json");
        writeFileSync(embPath, serializeEmbeddings(vectors, uncertainty));
        cli([
            "select-batch", "--embeddings", embPath, "--k", "2", "--gamma", "1.0",
            "--lambda", "auto", "--seed", "5", "--out", outPath,
        ]);
        const expected = JSON.parse(readFileSync(outPath, "utf8")) as { chosen_indices: number[] };
        const got = boundSelectBatch(vectors, uncertainty, 2, 1.0, "auto", 5);
        expect(got).toEqual(expected.chosen_indices);
        expect(got.length).toBe(2);
    });

    it("surfaces the core's k-too-large error with its message", () => {
        expect(() => boundSelectBatch([[1, 0]], [0.5], 3, 1, 0, 0)).toThrow(CoreError);
        try {
            boundSelectBatch([[1, 0]], [0.5], 3, 1, 0, 0);
        } catch (error) {
            expect((error as CoreError).message).toMatch(/k=3/);
        }
    });
});

describe("boundRelaxZeta", () => {
    it("maps rho = 1 to 1 elementwise", () => {
        const zeta = boundRelaxZeta([1, 1, 1], [0.2, 0.5, 0.9]);
        zeta.forEach((z) => expect(Math.abs(z - 1)).toBeLessThan(1e-12));
    });

    it("matches the frozen relaxation value at (0.75, 0.5, 0.5)", () => {
        const zeta = boundRelaxZeta([0.75], [0.5], 0.5);
        expect(Math.abs(zeta[0] - 0.5618596072403227)).toBeLessThan(1e-12);
    });

    it("is zero on the flat region and agrees with the CLI elementwise", () => {
        const rho = [0.1, 0.3, 0.75, 0.99];
        const q = [0.5, 0.5, 0.5, 0.25];
        const direct = cli([
            "relax", "--rho", rho.join(","), "--q", q.join(","), "--beta", "0.5",
        ])
            .split("\n")
            .filter((line) => line.trim() !== "")
            .map(Number);
        const got = boundRelaxZeta(rho, q, 0.5);
        expect(got).toEqual(direct);
        expect(got[0]).toBe(0);
        expect(got[1]).toBe(0);
    });

    it("rejects mismatched lengths at the boundary", () => {
        expect(() => boundRelaxZeta([0.5, 0.6], [0.5])).toThrow(ValidationError);
    });
});

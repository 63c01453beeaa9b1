/**
 * Minimal host training loop: one RBM gradient step whose negative phase is
 * sampled through the bound annealer.
 *
 * The host owns the model math (conditionals, the parameter-to-spin
 * substitution, the update rule), exactly as a deep-learning host would; the
 * binding only moves the sampling work to the core.
 */

import { boundSample } from "../src/bindings.js";
import type { Coupling } from "../src/formats.js";

const sigmoid = (x: number) => 1 / (1 + Math.exp(-x));

export interface Rbm {
    weights: number[][]; // visible x hidden
    visibleBias: number[];
    hiddenBias: number[];
}

/** Data-side statistics with exact hidden conditionals. */
function positivePhase(rbm: Rbm, batch: number[][]) {
    const nv = rbm.visibleBias.length;
    const nh = rbm.hiddenBias.length;
    const meanV = new Array<number>(nv).fill(0);
    const meanH = new Array<number>(nh).fill(0);
    const corr = rbm.weights.map((row) => row.map(() => 0));
    for (const v of batch) {
        const hProb = rbm.hiddenBias.map((c, j) =>
            sigmoid(c + v.reduce((acc, vi, i) => acc + vi * rbm.weights[i][j], 0)),
        );
        v.forEach((vi, i) => (meanV[i] += vi / batch.length));
        hProb.forEach((hj, j) => (meanH[j] += hj / batch.length));
        for (let i = 0; i < nv; i++) {
            for (let j = 0; j < nh; j++) corr[i][j] += (v[i] * hProb[j]) / batch.length;
        }
    }
    return { meanV, meanH, corr };
}

/** Substitute z = (1 + s) / 2 into the RBM energy: the host's model map. */
function rbmToIsing(rbm: Rbm): { field: number[]; coupling: Coupling[] } {
    const nv = rbm.visibleBias.length;
    const nh = rbm.hiddenBias.length;
    const field = [
        ...rbm.visibleBias.map((b, i) => -b / 2 - rbm.weights[i].reduce((a, w) => a + w, 0) / 4),
        ...rbm.hiddenBias.map((c, j) => -c / 2 - rbm.weights.reduce((a, row) => a + row[j], 0) / 4),
    ];
    const coupling: Coupling[] = [];
    for (let i = 0; i < nv; i++) {
        for (let j = 0; j < nh; j++) coupling.push([i, nv + j, -rbm.weights[i][j] / 4]);
    }
    return { field, coupling };
}

/** Model-side statistics from annealer reads (final states near T = 1). */
function negativePhase(rbm: Rbm, seed: number) {
    const nv = rbm.visibleBias.length;
    const nh = rbm.hiddenBias.length;
    const { field, coupling } = rbmToIsing(rbm);
    const samples = boundSample(field, coupling, {
        reads: 500,
        seed,
        topK: null,
        readOutput: "final",
        schedule: { tInitial: 3.0, tFinal: 1.0, decay: 0.8, sweepsPerStage: 8 },
    });
    const total = samples.multiplicities.reduce((a, m) => a + m, 0);
    const meanZ = new Array<number>(nv + nh).fill(0);
    const corr = Array.from({ length: nv }, () => new Array<number>(nh).fill(0));
    samples.spins.forEach((s, row) => {
        const w = samples.multiplicities[row] / total;
        const z = s.map((v) => (1 + v) / 2);
        z.forEach((zi, i) => (meanZ[i] += w * zi));
        for (let i = 0; i < nv; i++) {
            for (let j = 0; j < nh; j++) corr[i][j] += w * z[i] * z[nv + j];
        }
    });
    return { meanV: meanZ.slice(0, nv), meanH: meanZ.slice(nv), corr };
}

/** One descent step on (model - data) statistics; returns the new model. */
export function gradientStep(rbm: Rbm, batch: number[][], lr: number, seed: number): Rbm {
    const pos = positivePhase(rbm, batch);
    const neg = negativePhase(rbm, seed);
    return {
        weights: rbm.weights.map((row, i) =>
            row.map((w, j) => w - lr * (neg.corr[i][j] - pos.corr[i][j])),
        ),
        visibleBias: rbm.visibleBias.map((b, i) => b - lr * (neg.meanV[i] - pos.meanV[i])),
        hiddenBias: rbm.hiddenBias.map((c, j) => c - lr * (neg.meanH[j] - pos.meanH[j])),
    };
}

export function main(): Rbm {
    const rbm: Rbm = {
        weights: [
            [0.2, -0.1],
            [-0.3, 0.4],
            [0.1, 0.1],
        ],
        visibleBias: [0.0, 0.0, 0.0],
        hiddenBias: [0.0, 0.0],
    };
    const batch = [
        [1, 1, 0],
        [1, 1, 1],
        [0, 1, 1],
        [1, 0, 1],
    ];
    const updated = gradientStep(rbm, batch, 0.1, 7);
    console.log("weights before:", JSON.stringify(rbm.weights));
    console.log("weights after: ", JSON.stringify(updated.weights));
    return updated;
}

if (process.argv[1]?.endsWith("rbm-host-loop.js") || process.argv[1]?.endsWith("rbm-host-loop.ts")) {
    main();
}

/**
 * Writers and parsers for the kpp CLI's text formats.
 *
 * Numbers are serialized with JavaScript's shortest round-trip decimal form
 * (`String(x)`), which the core parses back to the identical IEEE double, so
 * nothing is lost crossing the boundary in either direction.
 */

export interface SampleSet {
    n: number;
    /** one row of -1/+1 spins per distinct configuration */
    spins: number[][];
    energies: number[];
    multiplicities: number[];
}

export class FormatError extends Error {}

/** Coupling entry: [i, j, coefficient] with i < j. */
export type Coupling = [number, number, number];

export function serializeIsingProblem(field: number[], coupling: Coupling[], offset = 0): string {
    const lines = [`p ising ${field.length}`];
    if (offset !== 0) lines.push(`offset ${String(offset)}`);
    field.forEach((h, i) => {
        if (h !== 0) lines.push(`${i} ${i} ${String(h)}`);
    });
    const sorted = [...coupling].sort((a, b) => (a[0] - b[0]) || (a[1] - b[1]));
    for (const [i, j, c] of sorted) {
        if (c !== 0) lines.push(`${i} ${j} ${String(c)}`);
    }
    return lines.join("\n") + "\n";
}

export function serializeEmbeddings(vectors: number[][], uncertainty: number[]): string {
    const m = vectors.length;
    const d = vectors[0]?.length ?? 0;
    const lines = [`${d} ${m}`];
    for (let i = 0; i < m; i++) {
        const row = vectors[i].map(String).join(" ");
        lines.push(`v${i} ${String(uncertainty[i])} ${row}`);
    }
    return lines.join("\n") + "\n";
}

export function parseSampleSet(text: string): SampleSet {
    let n = -1;
    const spins: number[][] = [];
    const energies: number[] = [];
    const multiplicities: number[] = [];
    for (const raw of text.split("\n")) {
        const line = raw.trim();
        if (!line) continue;
        if (line.startsWith("#")) {
            const match = /\bn=(\d+)/.exec(line);
            if (match && n < 0) n = Number(match[1]);
            continue;
        }
        const parts = line.split(/\s+/);
        if (parts.length !== 3) throw new FormatError(`malformed sample line: ${line}`);
        energies.push(Number(parts[0]));
        multiplicities.push(Number(parts[1]));
        spins.push([...parts[2]].map((ch) => (ch === "+" ? 1 : -1)));
    }
    if (n < 0) throw new FormatError("sample set missing its header");
    return { n, spins, energies, multiplicities };
}

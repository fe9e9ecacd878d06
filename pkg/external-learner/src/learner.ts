// Softmax-regression learner over the CSV wire formats used by the tritrain
// engine: labeled rows `id,f0..f{d-1},label`, pool rows `id,f0..f{d-1}`,
// predictions `id,label,score`. Everything here is deterministic: the only
// randomness (weight init and epoch shuffles) comes from a seeded PRNG, so
// the same inputs and seed always produce byte-identical predictions.

export class DataError extends Error {}

export interface TrainData {
  ids: string[];
  x: number[][];
  y: number[];
  labels: string[];
  dim: number;
}

export interface PoolData {
  ids: string[];
  x: number[][];
  dim: number;
}

export interface Model {
  weights: number[][];
  bias: number[];
  labels: string[];
}

export interface Prediction {
  id: string;
  label: string;
  score: number;
}

// Deterministic 32-bit PRNG (mulberry32). Uses only exact integer ops, so
// the stream is identical on every platform.
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const FLOAT_RE = /^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$/;

function splitLines(text: string, source: string): string[] {
  const lines = text.split(/\r?\n/);
  while (lines.length > 0 && lines[lines.length - 1] === '') {
    lines.pop();
  }
  for (const line of lines) {
    if (line.includes('"')) {
      throw new DataError(`${source}: quoted CSV cells are not supported`);
    }
  }
  return lines;
}

function parseFeature(cell: string, source: string, row: number): number {
  if (!FLOAT_RE.test(cell)) {
    throw new DataError(`${source}: non-numeric feature ${JSON.stringify(cell)} in row ${row}`);
  }
  const value = Number(cell);
  if (!Number.isFinite(value)) {
    throw new DataError(`${source}: non-finite feature in row ${row}`);
  }
  return value;
}

function checkFeatureHeader(cells: string[], source: string): void {
  for (let i = 0; i < cells.length; i++) {
    if (cells[i] !== `f${i}`) {
      throw new DataError(`${source}: expected feature column f${i}, got ${JSON.stringify(cells[i])}`);
    }
  }
}

function checkIdsUnique(ids: string[], source: string): void {
  const seen = new Set<string>();
  for (const id of ids) {
    if (seen.has(id)) {
      throw new DataError(`${source}: duplicate id ${JSON.stringify(id)}`);
    }
    seen.add(id);
  }
}

// Parse a labeled training CSV: header `id,f0..f{d-1},label` with d >= 1,
// one finite real per feature cell. The class alphabet is the sorted set of
// distinct label names seen in the file.
export function parseTrainCsv(text: string, source: string): TrainData {
  const lines = splitLines(text, source);
  if (lines.length === 0) {
    throw new DataError(`${source}: empty file`);
  }
  const header = lines[0].split(',');
  if (header.length < 3 || header[0] !== 'id' || header[header.length - 1] !== 'label') {
    throw new DataError(`${source}: expected header id,f0..,label, got ${JSON.stringify(lines[0])}`);
  }
  checkFeatureHeader(header.slice(1, -1), source);
  const dim = header.length - 2;

  const ids: string[] = [];
  const x: number[][] = [];
  const names: string[] = [];
  for (let n = 1; n < lines.length; n++) {
    const cells = lines[n].split(',');
    if (cells.length !== header.length) {
      throw new DataError(`${source}: row ${n - 1} has ${cells.length} cells, expected ${header.length}`);
    }
    ids.push(cells[0]);
    x.push(cells.slice(1, -1).map((cell) => parseFeature(cell, source, n - 1)));
    names.push(cells[cells.length - 1]);
  }
  if (ids.length === 0) {
    throw new DataError(`${source}: no data rows`);
  }
  checkIdsUnique(ids, source);

  const labels = Array.from(new Set(names)).sort();
  const labelToIdx = new Map(labels.map((name, i) => [name, i]));
  const y = names.map((name) => labelToIdx.get(name) as number);
  return { ids, x, y, labels, dim };
}

// Parse a pool CSV: header `id,f0..f{d-1}` with d >= 0. A drained pool is
// legitimately written as a lone `id` header with no rows.
export function parsePoolCsv(text: string, source: string): PoolData {
  const lines = splitLines(text, source);
  if (lines.length === 0) {
    throw new DataError(`${source}: empty file`);
  }
  const header = lines[0].split(',');
  if (header[0] !== 'id') {
    throw new DataError(`${source}: expected header id,f0.., got ${JSON.stringify(lines[0])}`);
  }
  checkFeatureHeader(header.slice(1), source);
  const dim = header.length - 1;

  const ids: string[] = [];
  const x: number[][] = [];
  for (let n = 1; n < lines.length; n++) {
    const cells = lines[n].split(',');
    if (cells.length !== header.length) {
      throw new DataError(`${source}: row ${n - 1} has ${cells.length} cells, expected ${header.length}`);
    }
    ids.push(cells[0]);
    x.push(cells.slice(1).map((cell) => parseFeature(cell, source, n - 1)));
  }
  checkIdsUnique(ids, source);
  return { ids, x, dim };
}

function softmaxRow(logits: number[]): number[] {
  let top = logits[0];
  for (const v of logits) {
    if (v > top) top = v;
  }
  const exps = logits.map((v) => Math.exp(v - top));
  const total = exps.reduce((a, b) => a + b, 0);
  return exps.map((v) => v / total);
}

function logits(weights: number[][], bias: number[], row: number[]): number[] {
  return weights.map((w, c) => {
    let z = bias[c];
    for (let j = 0; j < row.length; j++) {
      z += w[j] * row[j];
    }
    return z;
  });
}

// Mini-batch gradient descent on mean cross-entropy. Learning rate and batch
// size are fixed; only epochs and seed vary across invocations, so two runs
// with the same inputs and seed walk the exact same sequence of updates.
export function trainSoftmax(data: TrainData, epochs: number, seed: number): Model {
  const n = data.ids.length;
  const k = data.labels.length;
  const learningRate = 0.1;
  const batchSize = 32;
  const rand = mulberry32(seed);

  const weights: number[][] = [];
  for (let c = 0; c < k; c++) {
    weights.push(Array.from({ length: data.dim }, () => (rand() * 2 - 1) * 0.01));
  }
  const bias: number[] = new Array(k).fill(0);

  const order = Array.from({ length: n }, (_, i) => i);
  for (let epoch = 0; epoch < epochs; epoch++) {
    for (let i = n - 1; i > 0; i--) {
      const j = Math.floor(rand() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    for (let start = 0; start < n; start += batchSize) {
      const batch = order.slice(start, start + batchSize);
      const gradW = weights.map((w) => new Array(w.length).fill(0));
      const gradB = new Array(k).fill(0);
      for (const idx of batch) {
        const row = data.x[idx];
        const probs = softmaxRow(logits(weights, bias, row));
        for (let c = 0; c < k; c++) {
          const delta = (probs[c] - (c === data.y[idx] ? 1 : 0)) / batch.length;
          for (let j = 0; j < row.length; j++) {
            gradW[c][j] += delta * row[j];
          }
          gradB[c] += delta;
        }
      }
      for (let c = 0; c < k; c++) {
        for (let j = 0; j < data.dim; j++) {
          weights[c][j] -= learningRate * gradW[c][j];
        }
        bias[c] -= learningRate * gradB[c];
      }
    }
  }

  for (let c = 0; c < k; c++) {
    if (!Number.isFinite(bias[c]) || weights[c].some((v) => !Number.isFinite(v))) {
      throw new DataError('training produced non-finite parameters');
    }
  }
  return { weights, bias, labels: data.labels };
}

// Score every pool row: predicted label is the argmax class (first index on
// ties), score its softmax probability.
export function predictPool(model: Model, pool: PoolData): Prediction[] {
  return pool.ids.map((id, i) => {
    const probs = softmaxRow(logits(model.weights, model.bias, pool.x[i]));
    let best = 0;
    for (let c = 1; c < probs.length; c++) {
      if (probs[c] > probs[best]) best = c;
    }
    if (!Number.isFinite(probs[best])) {
      throw new DataError(`non-finite score for pool id ${JSON.stringify(id)}`);
    }
    return { id, label: model.labels[best], score: probs[best] };
  });
}

export function formatPredictionsCsv(preds: Prediction[]): string {
  const lines = ['id,label,score'];
  for (const p of preds) {
    lines.push(`${p.id},${p.label},${String(p.score)}`);
  }
  return lines.join('\n') + '\n';
}

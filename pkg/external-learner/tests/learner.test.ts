import { describe, expect, it } from 'vitest';
import {
  DataError,
  formatPredictionsCsv,
  mulberry32,
  parsePoolCsv,
  parseTrainCsv,
  predictPool,
  trainSoftmax,
} from '../src/learner';

const TRAIN_TEXT = 'id,f0,f1,label\na,1.0,2.0,c1\nb,-1.0,0.5,c0\nc,3.0,-2.0,c1\n';

// Two well-separated 2-D clusters around (-3,-3) and (3,3).
function blobs(n: number, seed: number): { train: string; poolHeader: string; rows: string[]; truth: string[] } {
  const rand = mulberry32(seed);
  const trainLines = ['id,f0,f1,label'];
  const rows: string[] = [];
  const truth: string[] = [];
  for (let i = 0; i < n; i++) {
    const cls = i % 2;
    const center = cls === 0 ? [-3, -3] : [3, 3];
    const f0 = center[0] + (rand() * 2 - 1) * 0.8;
    const f1 = center[1] + (rand() * 2 - 1) * 0.8;
    trainLines.push(`t${i},${f0},${f1},c${cls}`);
    const g0 = center[0] + (rand() * 2 - 1) * 0.8;
    const g1 = center[1] + (rand() * 2 - 1) * 0.8;
    rows.push(`p${i},${g0},${g1}`);
    truth.push(`c${cls}`);
  }
  return { train: trainLines.join('\n') + '\n', poolHeader: 'id,f0,f1', rows, truth };
}

describe('mulberry32', () => {
  it('yields the same stream for the same seed', () => {
    const a = mulberry32(42);
    const b = mulberry32(42);
    for (let i = 0; i < 10; i++) {
      const v = a();
      expect(v).toBe(b());
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThan(1);
    }
  });

  it('yields different streams for different seeds', () => {
    const a = mulberry32(1);
    const b = mulberry32(2);
    const va = [a(), a(), a()];
    const vb = [b(), b(), b()];
    expect(va).not.toEqual(vb);
  });
});

describe('parseTrainCsv', () => {
  it('reads ids, features, and a sorted label alphabet', () => {
    const data = parseTrainCsv(TRAIN_TEXT, 'train');
    expect(data.ids).toEqual(['a', 'b', 'c']);
    expect(data.dim).toBe(2);
    expect(data.x[1]).toEqual([-1.0, 0.5]);
    expect(data.labels).toEqual(['c0', 'c1']);
    expect(data.y).toEqual([1, 0, 1]);
  });

  it('rejects an empty file', () => {
    expect(() => parseTrainCsv('', 'train')).toThrow(DataError);
    expect(() => parseTrainCsv('', 'train')).toThrow(/empty file/);
  });

  it('rejects a header without feature columns', () => {
    expect(() => parseTrainCsv('id,label\na,c0\n', 'train')).toThrow(/header/);
  });

  it('rejects misnamed feature columns', () => {
    expect(() => parseTrainCsv('id,f1,label\na,1.0,c0\n', 'train')).toThrow(/f0/);
  });

  it('rejects a ragged row', () => {
    expect(() => parseTrainCsv('id,f0,f1,label\na,1.0,c0\n', 'train')).toThrow(/expected 4/);
  });

  it('rejects non-numeric and hex features', () => {
    expect(() => parseTrainCsv('id,f0,f1,label\na,oops,2.0,c0\n', 'train')).toThrow(/non-numeric/);
    expect(() => parseTrainCsv('id,f0,f1,label\na,0x10,2.0,c0\n', 'train')).toThrow(/non-numeric/);
  });

  it('rejects duplicate ids', () => {
    const text = 'id,f0,f1,label\na,1.0,2.0,c0\na,3.0,4.0,c1\n';
    expect(() => parseTrainCsv(text, 'train')).toThrow(/duplicate id/);
  });

  it('rejects a file with no data rows', () => {
    expect(() => parseTrainCsv('id,f0,f1,label\n', 'train')).toThrow(/no data rows/);
  });

  it('rejects quoted cells instead of mis-parsing them', () => {
    const text = 'id,f0,f1,label\na,1.0,2.0,"c,0"\n';
    expect(() => parseTrainCsv(text, 'train')).toThrow(/quoted/);
  });
});

describe('parsePoolCsv', () => {
  it('reads ids and features', () => {
    const pool = parsePoolCsv('id,f0,f1\np,0.5,-0.5\nq,1e-05,2.0\n', 'pool');
    expect(pool.ids).toEqual(['p', 'q']);
    expect(pool.dim).toBe(2);
    expect(pool.x[1]).toEqual([1e-5, 2.0]);
  });

  it('accepts a drained pool written as a lone id header', () => {
    const pool = parsePoolCsv('id\n', 'pool');
    expect(pool.ids).toEqual([]);
    expect(pool.dim).toBe(0);
  });

  it('rejects a header that does not start with id', () => {
    expect(() => parsePoolCsv('f0,f1\n1.0,2.0\n', 'pool')).toThrow(/header/);
  });

  it('rejects ragged rows and duplicate ids', () => {
    expect(() => parsePoolCsv('id,f0,f1\np,1.0\n', 'pool')).toThrow(/expected 3/);
    expect(() => parsePoolCsv('id,f0\np,1.0\np,2.0\n', 'pool')).toThrow(/duplicate id/);
  });
});

describe('trainSoftmax', () => {
  it('is deterministic for a fixed seed and sensitive to seed changes', () => {
    const data = parseTrainCsv(blobs(20, 7).train, 'train');
    const a = trainSoftmax(data, 5, 3);
    const b = trainSoftmax(data, 5, 3);
    const c = trainSoftmax(data, 5, 4);
    expect(JSON.stringify(a)).toBe(JSON.stringify(b));
    expect(JSON.stringify(a.weights)).not.toBe(JSON.stringify(c.weights));
  });

  it('separates two well-separated clusters', () => {
    const fixture = blobs(30, 11);
    const data = parseTrainCsv(fixture.train, 'train');
    const pool = parsePoolCsv([fixture.poolHeader, ...fixture.rows].join('\n') + '\n', 'pool');
    const model = trainSoftmax(data, 30, 0);
    const preds = predictPool(model, pool);
    expect(preds.map((p) => p.id)).toEqual(pool.ids);
    let correct = 0;
    for (let i = 0; i < preds.length; i++) {
      if (preds[i].label === fixture.truth[i]) correct++;
      expect(preds[i].score).toBeGreaterThan(0);
      expect(preds[i].score).toBeLessThanOrEqual(1);
    }
    expect(correct / preds.length).toBeGreaterThanOrEqual(0.9);
  });
});

describe('predictPool', () => {
  it('stays finite under extreme logits', () => {
    const model = { weights: [[1000], [0]], bias: [0, 0], labels: ['hot', 'cold'] };
    const preds = predictPool(model, { ids: ['z'], x: [[1]], dim: 1 });
    expect(preds[0].label).toBe('hot');
    expect(preds[0].score).toBe(1);
  });
});

describe('formatPredictionsCsv', () => {
  it('writes the exact wire format with a trailing newline', () => {
    const text = formatPredictionsCsv([
      { id: 'a', label: 'c0', score: 0.5 },
      { id: 'b', label: 'c1', score: 1 },
    ]);
    expect(text).toBe('id,label,score\na,c0,0.5\nb,c1,1\n');
  });

  it('writes a header-only file for an empty prediction set', () => {
    expect(formatPredictionsCsv([])).toBe('id,label,score\n');
  });
});

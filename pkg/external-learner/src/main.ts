// Command-line entry point. Usage:
//
//   node dist/main.js --train <csv> --pool <csv> --out <csv> --epochs N --seed S
//
// Fits a softmax regression on the labeled training CSV and writes one
// `id,label,score` prediction row per pool example. Exit status: 0 on
// success, 1 on bad input data or a training failure, 2 on usage errors.

import * as fs from 'fs';
import {
  DataError,
  formatPredictionsCsv,
  parsePoolCsv,
  parseTrainCsv,
  predictPool,
  trainSoftmax,
} from './learner';

interface CliArgs {
  train: string;
  pool: string;
  out: string;
  epochs: number;
  seed: number;
}

const USAGE = 'usage: main.js --train <csv> --pool <csv> --out <csv> --epochs <n> --seed <n>';

function usageError(message: string): never {
  console.error(`error: ${message}`);
  console.error(USAGE);
  process.exit(2);
}

function parseIntArg(flag: string, value: string): number {
  if (!/^[+-]?\d+$/.test(value)) {
    usageError(`${flag} expects an integer, got ${JSON.stringify(value)}`);
  }
  return parseInt(value, 10);
}

function parseArgs(argv: string[]): CliArgs {
  const values: { [flag: string]: string } = {};
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!['--train', '--pool', '--out', '--epochs', '--seed'].includes(flag)) {
      usageError(`unknown argument ${JSON.stringify(flag)}`);
    }
    if (i + 1 >= argv.length) {
      usageError(`${flag} expects a value`);
    }
    values[flag] = argv[i + 1];
  }
  for (const flag of ['--train', '--pool', '--out', '--epochs', '--seed']) {
    if (!(flag in values)) {
      usageError(`${flag} is required`);
    }
  }
  const epochs = parseIntArg('--epochs', values['--epochs']);
  const seed = parseIntArg('--seed', values['--seed']);
  if (epochs < 1) {
    usageError('--epochs must be >= 1');
  }
  if (seed < 0) {
    usageError('--seed must be >= 0');
  }
  return { train: values['--train'], pool: values['--pool'], out: values['--out'], epochs, seed };
}

function readFile(path: string): string {
  try {
    return fs.readFileSync(path, 'utf-8');
  } catch (err) {
    throw new DataError(`cannot read ${path}: ${(err as Error).message}`);
  }
}

function main(argv: string[]): number {
  const args = parseArgs(argv);
  try {
    const train = parseTrainCsv(readFile(args.train), args.train);
    const pool = parsePoolCsv(readFile(args.pool), args.pool);
    if (pool.ids.length > 0 && pool.dim !== train.dim) {
      throw new DataError(
        `pool dimensionality ${pool.dim} does not match training dimensionality ${train.dim}`
      );
    }
    const model = trainSoftmax(train, args.epochs, args.seed);
    const preds = predictPool(model, pool);
    fs.writeFileSync(args.out, formatPredictionsCsv(preds));
  } catch (err) {
    if (err instanceof DataError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    if (err instanceof Error && 'code' in err) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
  return 0;
}

process.exit(main(process.argv.slice(2)));

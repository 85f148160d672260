// Parity validator: run a recorded input through an exported graph and compare
// against the reference output captured at export time.
//
// Usage: node validate.js <graph.onnx> <input.f32> <expected.f32>
// Prints a one-line JSON report; exit 0 when max |diff| < 1e-4 and the output
// length matches the expected fixture.

import * as fs from 'fs';
import * as ort from 'onnxruntime-node';

const THRESHOLD = 1e-4;
const INPUT_DIMS = [1, 3, 224, 224];

function readF32(path: string): Float32Array {
  const buf = fs.readFileSync(path);
  return new Float32Array(buf.buffer, buf.byteOffset, buf.length / 4);
}

async function main(): Promise<number> {
  const [graphPath, inputPath, expectedPath] = process.argv.slice(2);
  if (!graphPath || !inputPath || !expectedPath) {
    console.error('usage: validate.js <graph.onnx> <input.f32> <expected.f32>');
    return 2;
  }
  const input = readF32(inputPath);
  const expected = readF32(expectedPath);

  const session = await ort.InferenceSession.create(graphPath);
  const feeds = { [session.inputNames[0]]: new ort.Tensor('float32', input, INPUT_DIMS) };
  const results = await session.run(feeds);
  const output = results[session.outputNames[0]];
  const data = output.data as Float32Array;

  let maxAbsDiff = Infinity;
  if (data.length === expected.length) {
    maxAbsDiff = 0;
    for (let i = 0; i < data.length; i++) {
      const diff = Math.abs(data[i] - expected[i]);
      if (diff > maxAbsDiff) maxAbsDiff = diff;
    }
  }
  const pass = data.length === expected.length && maxAbsDiff < THRESHOLD;
  console.log(
    JSON.stringify({
      runtime: 'onnxruntime-node',
      graph: graphPath,
      output_shape: output.dims,
      output_dim: data.length,
      max_abs_diff: maxAbsDiff,
      pass,
    }),
  );
  return pass ? 0 : 1;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`validation failed: ${err}`);
    process.exit(1);
  },
);

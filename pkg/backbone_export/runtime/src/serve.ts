// Framed-protocol feature server so pipelines without a local onnxruntime can
// still run exported graphs out of process.
//
// Usage: node serve.js <graph.onnx>
// Handshake: one JSON line {"output_dim": N} on stdout. Then, per request:
// read 3*224*224 little-endian float32 CHW bytes from stdin, write N float32
// bytes back. Exits when stdin closes.

import * as ort from 'onnxruntime-node';

const INPUT_DIMS = [1, 3, 224, 224];
const FRAME_BYTES = 3 * 224 * 224 * 4;

async function* frames(stream: NodeJS.ReadStream, size: number): AsyncGenerator<Buffer> {
  let pending = Buffer.alloc(0);
  for await (const chunk of stream) {
    pending = Buffer.concat([pending, chunk as Buffer]);
    while (pending.length >= size) {
      yield pending.subarray(0, size);
      pending = pending.subarray(size);
    }
  }
}

async function main(): Promise<void> {
  const graphPath = process.argv[2];
  if (!graphPath) {
    console.error('usage: serve.js <graph.onnx>');
    process.exit(2);
  }
  const session = await ort.InferenceSession.create(graphPath);
  const inputName = session.inputNames[0];
  const outputName = session.outputNames[0];

  const probe = await session.run({
    [inputName]: new ort.Tensor('float32', new Float32Array(FRAME_BYTES / 4), INPUT_DIMS),
  });
  const outputDim = (probe[outputName].data as Float32Array).length;
  process.stdout.write(JSON.stringify({ output_dim: outputDim }) + '\n');

  for await (const frame of frames(process.stdin, FRAME_BYTES)) {
    // copy out of the pooled buffer before handing it to the runtime
    const data = new Float32Array(
      frame.buffer.slice(frame.byteOffset, frame.byteOffset + FRAME_BYTES),
    );
    const results = await session.run({
      [inputName]: new ort.Tensor('float32', data, INPUT_DIMS),
    });
    const out = results[outputName].data as Float32Array;
    process.stdout.write(Buffer.from(out.buffer, out.byteOffset, out.length * 4));
  }
}

main().catch((err) => {
  console.error(`serve failed: ${err}`);
  process.exit(1);
});

/**
 * VDNAACT1 activation dump files: the only coupling point between this
 * exporter and the fingerprint toolkit that consumes its output.
 *
 * Layout (little-endian):
 *   magic "VDNAACT1" (8 bytes) | version u32 = 1 | meta_len u32 |
 *   UTF-8 JSON metadata {extractor_id, layers: [{name, neurons}]} |
 *   records: id_len u32, image_id utf8, then per layer in header order
 *   a spatial size u32 >= 1 followed by neurons * S float32 values,
 *   neuron-major (all S values of neuron 0, then neuron 1, ...).
 */
import * as fs from 'fs';

export const MAGIC = 'VDNAACT1';
export const VERSION = 1;

export interface LayerSpec {
  name: string;
  neurons: number;
}

export interface DumpHeader {
  extractorId: string;
  layers: LayerSpec[];
}

export interface ImageRecord {
  imageId: string;
  /** One (neurons * S) float32 array per layer, neuron-major. */
  layerValues: { spatial: number; values: Float32Array }[];
}

function headerMeta(header: DumpHeader): Buffer {
  const meta = {
    extractor_id: header.extractorId,
    layers: header.layers.map((l) => ({ name: l.name, neurons: l.neurons })),
  };
  return Buffer.from(JSON.stringify(meta), 'utf-8');
}

export class DumpWriter {
  private readonly fd: number;
  private readonly header: DumpHeader;
  private count = 0;

  constructor(path: string, header: DumpHeader) {
    if (header.layers.length === 0) throw new Error('layer table must be non-empty');
    const names = new Set(header.layers.map((l) => l.name));
    if (names.size !== header.layers.length) throw new Error('layer names must be unique');
    for (const l of header.layers) {
      if (l.neurons < 1) throw new Error(`layer ${l.name}: neuron count must be >= 1`);
    }
    this.header = header;
    this.fd = fs.openSync(path, 'w');
    const meta = headerMeta(header);
    const head = Buffer.alloc(16);
    head.write(MAGIC, 0, 'ascii');
    head.writeUInt32LE(VERSION, 8);
    head.writeUInt32LE(meta.length, 12);
    fs.writeSync(this.fd, head);
    fs.writeSync(this.fd, meta);
  }

  writeRecord(record: ImageRecord): void {
    if (record.layerValues.length !== this.header.layers.length) {
      throw new Error(
        `record ${record.imageId}: ${record.layerValues.length} layers, ` +
          `header declares ${this.header.layers.length}`,
      );
    }
    const id = Buffer.from(record.imageId, 'utf-8');
    const idLen = Buffer.alloc(4);
    idLen.writeUInt32LE(id.length, 0);
    const parts: Buffer[] = [idLen, id];
    for (let i = 0; i < this.header.layers.length; i++) {
      const spec = this.header.layers[i];
      const { spatial, values } = record.layerValues[i];
      if (spatial < 1 || values.length !== spec.neurons * spatial) {
        throw new Error(
          `record ${record.imageId}, layer ${spec.name}: expected ` +
            `${spec.neurons} x S values with S >= 1, got ${values.length} (S=${spatial})`,
        );
      }
      for (const v of values) {
        if (!Number.isFinite(v)) {
          throw new Error(`record ${record.imageId}, layer ${spec.name}: non-finite activation`);
        }
      }
      const block = Buffer.alloc(4 + values.length * 4);
      block.writeUInt32LE(spatial, 0);
      for (let j = 0; j < values.length; j++) {
        block.writeFloatLE(values[j], 4 + j * 4);
      }
      parts.push(block);
    }
    fs.writeSync(this.fd, Buffer.concat(parts));
    this.count += 1;
  }

  close(): number {
    fs.closeSync(this.fd);
    return this.count;
  }
}

export function readDump(path: string): { header: DumpHeader; records: ImageRecord[] } {
  const buf = fs.readFileSync(path);
  if (buf.length < 16) throw new Error('truncated file: envelope header incomplete');
  if (buf.toString('ascii', 0, 8) !== MAGIC) {
    throw new Error(`bad magic: expected ${MAGIC}`);
  }
  const version = buf.readUInt32LE(8);
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const metaLen = buf.readUInt32LE(12);
  const meta = JSON.parse(buf.toString('utf-8', 16, 16 + metaLen));
  const header: DumpHeader = {
    extractorId: meta.extractor_id,
    layers: meta.layers.map((l: { name: string; neurons: number }) => ({
      name: l.name,
      neurons: l.neurons,
    })),
  };
  let offset = 16 + metaLen;
  const records: ImageRecord[] = [];
  while (offset < buf.length) {
    if (offset + 4 > buf.length) throw new Error('truncated record');
    const idLen = buf.readUInt32LE(offset);
    offset += 4;
    const imageId = buf.toString('utf-8', offset, offset + idLen);
    offset += idLen;
    const layerValues: ImageRecord['layerValues'] = [];
    for (const spec of header.layers) {
      if (offset + 4 > buf.length) throw new Error('truncated record');
      const spatial = buf.readUInt32LE(offset);
      offset += 4;
      const byteLen = spec.neurons * spatial * 4;
      if (offset + byteLen > buf.length) throw new Error('truncated record');
      const values = new Float32Array(spec.neurons * spatial);
      for (let i = 0; i < values.length; i++) {
        values[i] = buf.readFloatLE(offset + i * 4);
        if (!Number.isFinite(values[i])) {
          const neuron = Math.floor(i / spatial);
          throw new Error(
            `non-finite activation in record ${imageId}, layer ${spec.name}, neuron ${neuron}`,
          );
        }
      }
      offset += byteLen;
      layerValues.push({ spatial, values });
    }
    records.push({ imageId, layerValues });
  }
  return { header, records };
}

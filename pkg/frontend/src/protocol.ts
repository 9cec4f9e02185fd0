/**
 * Binary stdio frame protocol spoken by `python3 -m hideseek.server`.
 *
 * Every frame is: u32 LE length (bytes after the length field), u8 type,
 * payload. One request gets exactly one response, in order.
 */

export const ABI = "hideseek-bridge-1";

export const REQ_CREATE = 0x01;
export const REQ_RESET = 0x02;
export const REQ_STEP = 0x03;
export const REQ_CLOSE = 0x04;
export const RSP_CREATED = 0x81;
export const RSP_RESET = 0x82;
export const RSP_STEP = 0x83;
export const RSP_CLOSED = 0x84;
export const RSP_ERROR = 0xff;

export interface Frame {
  type: number;
  payload: Buffer;
}

export function encodeFrame(type: number, payload: Uint8Array = new Uint8Array(0)): Buffer {
  const out = Buffer.allocUnsafe(4 + 1 + payload.byteLength);
  out.writeUInt32LE(payload.byteLength + 1, 0);
  out.writeUInt8(type, 4);
  out.set(payload, 5);
  return out;
}

/** Incremental decoder: feed arbitrary chunks, get back completed frames. */
export class FrameParser {
  private pending: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): Frame[] {
    this.pending = this.pending.length === 0 ? chunk : Buffer.concat([this.pending, chunk]);
    const frames: Frame[] = [];
    for (;;) {
      if (this.pending.length < 4) break;
      const length = this.pending.readUInt32LE(0);
      if (this.pending.length < 4 + length) break;
      if (length < 1) throw new Error("zero-length frame body");
      frames.push({
        type: this.pending.readUInt8(4),
        // copy: the source chunk buffer gets reused by the stream
        payload: Buffer.from(this.pending.subarray(5, 4 + length)),
      });
      this.pending = this.pending.subarray(4 + length);
    }
    return frames;
  }
}

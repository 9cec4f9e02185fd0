export {
  ABI,
  FrameParser,
  REQ_CLOSE,
  REQ_CREATE,
  REQ_RESET,
  REQ_STEP,
  RSP_CLOSED,
  RSP_CREATED,
  RSP_ERROR,
  RSP_RESET,
  RSP_STEP,
  encodeFrame,
} from "./protocol.js";
export type { Frame } from "./protocol.js";
export { RemotePool } from "./pool.js";
export type {
  BufferDescriptor,
  CreatedInfo,
  MapRequest,
  OutputView,
  OutputViews,
  RemotePoolOptions,
  VecRequest,
} from "./pool.js";

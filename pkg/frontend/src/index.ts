export * from "./csv";
export * from "./svg";
export * from "./figures";
export { KINDS, Kind, Rendered, renderKind, main } from "./cli";

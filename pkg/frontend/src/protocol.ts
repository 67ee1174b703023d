/** Wire types of the session HTTP + WebSocket API. */

export type PathPair = [number, number];

export interface RangeWire {
  lo: number | null;
  hi: number | null;
  color?: number[] | null;
  fraction?: number;
  locked?: boolean;
  empty?: boolean;
  children?: NodeWire[];
}

export interface NodeWire {
  attribute: string;
  ranges: RangeWire[];
}

export interface HierarchyDoc {
  roots: NodeWire[];
}

export interface AttributeInfo {
  name: string;
  kind: "scalar" | "vector3";
  derived: boolean;
}

export interface DatasetInfo {
  dims: number[];
  spacing: number[];
  instances: number;
  attributes: AttributeInfo[];
}

export interface GroupState {
  index: number;
  pathKey: string;
  path: PathPair[];
  color: number[];
  fraction: number;
  count: number;
  hidden: number;
}

export interface HistogramWire {
  attribute: string;
  lo: number | null;
  hi: number | null;
  counts: number[];
}

export interface ReportRow {
  group: number;
  total: number;
  hidden: number;
  visible: number;
  occluded: number;
  pathKey?: string;
  histogram?: HistogramWire;
}

export interface ReportDoc {
  epoch: number;
  cameraHash: string;
  groups: ReportRow[];
}

export interface CameraWire {
  eye: number[];
  target: number[];
  up: number[];
  fovY: number;
  width: number;
  height: number;
}

export interface SessionState {
  epoch: number;
  dataset: DatasetInfo | null;
  hierarchy: HierarchyDoc;
  groups: GroupState[];
  sparsify: { mode: string; kappaT: number; kappaS: number; seed: number };
  weights: { wColor: number; wTransfer: number; wAlpha: number };
  rawTF: { x: number; rgba: number[] }[];
  camera: CameraWire | null;
  lastReport: ReportDoc | null;
}

export type Command =
  | { cmd: "loadDataset"; descriptor: string }
  | { cmd: "setHierarchy"; hierarchy: HierarchyDoc }
  | { cmd: "setFraction"; path: PathPair[]; f: number }
  | { cmd: "setLock"; path: PathPair[]; locked: boolean }
  | { cmd: "setSparsifyParams"; mode?: string; kappaT?: number; kappaS?: number; seed?: number }
  | { cmd: "setBlendWeights"; wColor?: number; wTransfer?: number; wAlpha?: number }
  | { cmd: "setRawTF"; points: { x: number; rgba: number[] }[] }
  | { cmd: "setCamera"; eye: number[]; target: number[]; up?: number[]; fovY?: number; width?: number; height?: number }
  | { cmd: "requestFrame" }
  | { cmd: "requestAssessment" };

export interface StreamEnvelope {
  event: "frame" | "report" | "state" | "warning" | "error";
  epoch: number;
  binary?: boolean;
  payload?: ReportDoc;
  message?: string;
  cameraHash?: string;
  [key: string]: unknown;
}

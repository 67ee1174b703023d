/**
 * Scented-slider view models.
 *
 * One row per range entry of the expanded hierarchy (internal rows show the
 * cascaded weighted average). Leaf rows carry the group color, the attribute
 * histogram and the hidden/occluded proportion tracks. Track data is only
 * ever taken from reports whose epoch matches the current session epoch;
 * stale reports are counted and dropped, never displayed.
 */
import type {
  GroupState,
  HierarchyDoc,
  HistogramWire,
  NodeWire,
  PathPair,
  ReportDoc,
  SessionState,
} from "./protocol.js";

export interface SliderRow {
  path: PathPair[];
  depth: number;
  label: string;
  fraction: number;
  locked: boolean;
  empty: boolean;
  isLeaf: boolean;
  groupIndex: number | null;
  color: number[] | null;
  count: number;
  histogram: HistogramWire | null;
  hiddenTrack: number;
  occludedTrack: number;
}

function rangeLabel(attribute: string, lo: number | null, hi: number | null): string {
  const l = lo === null ? "-inf" : String(lo);
  const h = hi === null ? "inf" : String(hi);
  return `${attribute} [${l}, ${h})`;
}

export function buildRows(hierarchy: HierarchyDoc, groups: GroupState[]): SliderRow[] {
  const byPath = new Map<string, GroupState>(groups.map((g) => [JSON.stringify(g.path), g]));
  const rows: SliderRow[] = [];

  const walk = (nodes: NodeWire[], prefix: PathPair[], depth: number): void => {
    nodes.forEach((node, ni) => {
      node.ranges.forEach((range, ri) => {
        const path: PathPair[] = [...prefix, [ni, ri]];
        const children = range.children ?? [];
        const isLeaf = children.length === 0;
        const group = isLeaf ? byPath.get(JSON.stringify(path)) : undefined;
        rows.push({
          path,
          depth,
          label: rangeLabel(node.attribute, range.lo, range.hi),
          fraction: group?.fraction ?? range.fraction ?? 1.0,
          locked: range.locked ?? false,
          empty: range.empty ?? false,
          isLeaf,
          groupIndex: group?.index ?? null,
          color: group?.color ?? range.color ?? null,
          count: group?.count ?? 0,
          histogram: null,
          hiddenTrack: 0,
          occludedTrack: 0,
        });
        walk(children, path, depth + 1);
      });
    });
  };
  walk(hierarchy.roots, [], 0);
  return rows;
}

function isPrefix(prefix: PathPair[], path: PathPair[]): boolean {
  if (prefix.length > path.length) return false;
  return prefix.every(([a, b], i) => path[i][0] === a && path[i][1] === b);
}

export class SliderPanel {
  rows: SliderRow[] = [];
  epoch = -1;
  appliedReports = 0;
  rejectedReports = 0;
  lastWarning: string | null = null;

  /** Rebuild rows from an authoritative session state snapshot. */
  setState(state: SessionState): void {
    this.epoch = state.epoch;
    this.rows = buildRows(state.hierarchy, state.groups);
    if (state.lastReport && state.lastReport.epoch === state.epoch) {
      this.applyReport(state.lastReport);
    }
  }

  /**
   * Fold an assessment report into the tracks. Reports from any other epoch
   * than the one currently shown are rejected outright.
   */
  applyReport(report: ReportDoc): boolean {
    if (report.epoch !== this.epoch) {
      this.rejectedReports += 1;
      return false;
    }
    const byGroup = new Map(report.groups.map((r) => [r.group, r]));
    const leafRows = this.rows.filter((r) => r.isLeaf && r.groupIndex !== null);
    for (const row of leafRows) {
      const rep = byGroup.get(row.groupIndex as number);
      if (!rep) continue;
      row.count = rep.total;
      row.hiddenTrack = rep.total > 0 ? rep.hidden / rep.total : 0;
      row.occludedTrack = rep.total > 0 ? rep.occluded / rep.total : 0;
      row.histogram = rep.histogram ?? null;
    }
    // Internal rows aggregate their leaf descendants.
    for (const row of this.rows) {
      if (row.isLeaf) continue;
      let total = 0;
      let hidden = 0;
      let occluded = 0;
      for (const leaf of leafRows) {
        if (!isPrefix(row.path, leaf.path)) continue;
        const rep = byGroup.get(leaf.groupIndex as number);
        if (!rep) continue;
        total += rep.total;
        hidden += rep.hidden;
        occluded += rep.occluded;
      }
      row.count = total;
      row.hiddenTrack = total > 0 ? hidden / total : 0;
      row.occludedTrack = total > 0 ? occluded / total : 0;
    }
    this.appliedReports += 1;
    return true;
  }

  /** Optimistic local update while the slider drags; the next state echo corrects it. */
  previewFraction(path: PathPair[], f: number): void {
    const key = JSON.stringify(path);
    for (const row of this.rows) {
      if (JSON.stringify(row.path) === key && !row.locked) {
        row.fraction = f;
      }
    }
  }

  rowAt(path: PathPair[]): SliderRow | undefined {
    const key = JSON.stringify(path);
    return this.rows.find((r) => JSON.stringify(r.path) === key);
  }
}

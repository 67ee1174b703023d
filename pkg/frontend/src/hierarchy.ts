/**
 * Abstract hierarchy editor model.
 *
 * The user stacks attribute levels, each with an ordered list of value
 * ranges; expansion copies the child level's ranges under every parent range,
 * so the group count is the product of the per-level range counts. Per-path
 * fractions, locks and colors survive structural edits whenever the path
 * (attribute + bounds at every level) still exists after re-expansion.
 */
import type { HierarchyDoc, NodeWire, RangeWire } from "./protocol.js";

export interface RangeDef {
  lo: number | null;
  hi: number | null;
}

export interface LevelDef {
  attribute: string;
  ranges: RangeDef[];
}

export interface RangeError {
  level: number;
  range: number;
  message: string;
}

function boundsValid(r: RangeDef): boolean {
  if (r.lo === null || r.hi === null) return true;
  return r.lo < r.hi;
}

function rangeKey(attribute: string, r: RangeDef): string {
  const lo = r.lo === null ? "-inf" : String(r.lo);
  const hi = r.hi === null ? "inf" : String(r.hi);
  return `${attribute}[${lo},${hi})`;
}

interface PathStyle {
  fraction?: number;
  locked?: boolean;
  color?: number[] | null;
}

/** Collect per-path styling of an expanded document, keyed by bounds path. */
function collectStyles(doc: HierarchyDoc, into: Map<string, PathStyle>, prefix = ""): void {
  for (const node of doc.roots) {
    walkNode(node, prefix);
  }
  function walkNode(node: NodeWire, pre: string): void {
    for (const range of node.ranges) {
      const key = pre + "/" + rangeKey(node.attribute, range);
      into.set(key, {
        fraction: range.fraction,
        locked: range.locked,
        color: range.color ?? undefined,
      });
      for (const child of range.children ?? []) {
        walkNode(child, key);
      }
    }
  }
}

export class HierarchyEditor {
  levels: LevelDef[] = [];
  private styles = new Map<string, PathStyle>();

  addLevel(attribute: string): void {
    this.levels.push({ attribute, ranges: [{ lo: null, hi: null }] });
  }

  removeLevel(index: number): void {
    this.levels.splice(index, 1);
  }

  setAttribute(level: number, attribute: string): void {
    this.levels[level].attribute = attribute;
  }

  addRange(level: number, lo: number | null, hi: number | null): RangeError | null {
    const err = this.checkBounds(level, lo, hi);
    if (err) return err;
    this.levels[level].ranges.push({ lo, hi });
    return null;
  }

  updateRange(level: number, index: number, lo: number | null, hi: number | null): RangeError | null {
    const err = this.checkBounds(level, lo, hi, index);
    if (err) return err;
    this.levels[level].ranges[index] = { lo, hi };
    return null;
  }

  removeRange(level: number, index: number): void {
    const ranges = this.levels[level].ranges;
    ranges.splice(index, 1);
    if (ranges.length === 0) {
      this.removeLevel(level);
    }
  }

  private checkBounds(
    level: number,
    lo: number | null,
    hi: number | null,
    _index?: number,
  ): RangeError | null {
    if (!boundsValid({ lo, hi })) {
      return { level, range: _index ?? this.levels[level].ranges.length, message: "lo must be < hi" };
    }
    return null;
  }

  /** Number of leaf groups after expansion. */
  groupCount(): number {
    if (this.levels.length === 0) return 0;
    return this.levels.reduce((acc, level) => acc * level.ranges.length, 1);
  }

  /** Remember fractions/locks/colors of the current server-side tree. */
  absorbStyles(doc: HierarchyDoc): void {
    this.styles = new Map();
    collectStyles(doc, this.styles);
  }

  /** Load the level structure back from an expanded document (uniform trees only). */
  loadFrom(doc: HierarchyDoc): void {
    this.levels = [];
    this.absorbStyles(doc);
    let nodes = doc.roots;
    while (nodes.length === 1) {
      const node = nodes[0];
      this.levels.push({
        attribute: node.attribute,
        ranges: node.ranges.map((r) => ({ lo: r.lo, hi: r.hi })),
      });
      const next = node.ranges[0]?.children ?? [];
      if (next.length !== 1) break;
      nodes = next;
    }
  }

  /** Expand to the wire document, reapplying surviving per-path styles. */
  expand(): HierarchyDoc {
    const build = (levelIdx: number, prefix: string): NodeWire[] => {
      if (levelIdx >= this.levels.length) return [];
      const level = this.levels[levelIdx];
      const ranges: RangeWire[] = level.ranges.map((r) => {
        const key = prefix + "/" + rangeKey(level.attribute, r);
        const style = this.styles.get(key) ?? {};
        const wire: RangeWire = {
          lo: r.lo,
          hi: r.hi,
          children: build(levelIdx + 1, key),
        };
        if (style.fraction !== undefined) wire.fraction = style.fraction;
        if (style.locked !== undefined) wire.locked = style.locked;
        if (style.color != null) wire.color = style.color;
        return wire;
      });
      return [{ attribute: level.attribute, ranges }];
    };
    return { roots: build(0, "") };
  }
}

/** The demo hierarchy: volume x orientation, three value ranges each. */
export function threeByThreeHierarchy(
  volumeAttr = "volume",
  orientationAttr = "orientation.polar",
  volumeCuts: [number, number] = [30, 90],
  orientationCuts: [number, number] = [30, 60],
): HierarchyEditor {
  const editor = new HierarchyEditor();
  editor.addLevel(volumeAttr);
  editor.updateRange(0, 0, null, volumeCuts[0]);
  editor.addRange(0, volumeCuts[0], volumeCuts[1]);
  editor.addRange(0, volumeCuts[1], null);
  editor.addLevel(orientationAttr);
  editor.updateRange(1, 0, null, orientationCuts[0]);
  editor.addRange(1, orientationCuts[0], orientationCuts[1]);
  editor.addRange(1, orientationCuts[1], null);
  return editor;
}

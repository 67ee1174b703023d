/**
 * Viewport state: orbit camera math and the epoch gate for incoming frames.
 */
import type { Command } from "./protocol.js";

/** Only the newest frame of the current epoch is ever shown. */
export class FrameGate {
  currentEpoch = 0;
  shownSeq = -1;
  displayed = 0;
  dropped = 0;
  private seq = 0;

  setEpoch(epoch: number): void {
    this.currentEpoch = epoch;
  }

  /** Returns true when the frame should be displayed. */
  offer(frame: { epoch: number }): boolean {
    const seq = this.seq++;
    if (frame.epoch !== this.currentEpoch || seq < this.shownSeq) {
      this.dropped += 1;
      return false;
    }
    this.shownSeq = seq;
    this.displayed += 1;
    return true;
  }
}

export class OrbitCamera {
  center: [number, number, number];
  distance: number;
  /** Azimuth around +z, radians. */
  theta: number;
  /** Elevation from the xy-plane, radians; clamped shy of the poles. */
  phi: number;
  fovY = 45;

  constructor(center: [number, number, number], distance: number) {
    this.center = center;
    this.distance = distance;
    this.theta = Math.PI / 4;
    this.phi = Math.PI / 8;
  }

  orbit(dxPixels: number, dyPixels: number, pixelsPerRadian = 200): void {
    this.theta -= dxPixels / pixelsPerRadian;
    const limit = Math.PI / 2 - 0.05;
    this.phi = Math.min(limit, Math.max(-limit, this.phi + dyPixels / pixelsPerRadian));
  }

  zoom(factor: number): void {
    this.distance = Math.max(1e-3, this.distance * factor);
  }

  eye(): [number, number, number] {
    const cp = Math.cos(this.phi);
    return [
      this.center[0] + this.distance * cp * Math.cos(this.theta),
      this.center[1] + this.distance * cp * Math.sin(this.theta),
      this.center[2] + this.distance * Math.sin(this.phi),
    ];
  }

  toCommand(width: number, height: number): Command {
    return {
      cmd: "setCamera",
      eye: this.eye(),
      target: [...this.center],
      up: [0, 0, 1],
      fovY: this.fovY,
      width,
      height,
    };
  }
}

/** Frame the whole volume box from its diagonal. */
export function fitOrbit(dims: number[], spacing: number[], fovY = 45): OrbitCamera {
  const size = dims.map((n, i) => n * spacing[i]);
  const center: [number, number, number] = [size[0] / 2, size[1] / 2, size[2] / 2];
  const radius = Math.hypot(...size) / 2;
  const distance = (radius / Math.sin(((fovY / 2) * Math.PI) / 180)) * 1.05;
  return new OrbitCamera(center, distance);
}

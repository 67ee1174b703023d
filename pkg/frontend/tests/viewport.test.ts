import { describe, expect, it, vi } from "vitest";

import { debounce, throttle } from "../src/util.js";
import { FrameGate, OrbitCamera, fitOrbit } from "../src/viewport.js";

describe("FrameGate", () => {
  it("shows only frames of the current epoch", () => {
    const gate = new FrameGate();
    gate.setEpoch(3);
    expect(gate.offer({ epoch: 3 })).toBe(true);
    expect(gate.offer({ epoch: 2 })).toBe(false);
    expect(gate.offer({ epoch: 4 })).toBe(false);
    expect(gate.displayed).toBe(1);
    expect(gate.dropped).toBe(2);
  });

  it("keeps dropping stale epochs after the epoch advances", () => {
    const gate = new FrameGate();
    gate.setEpoch(1);
    gate.offer({ epoch: 1 });
    gate.setEpoch(2);
    expect(gate.offer({ epoch: 1 })).toBe(false);
    expect(gate.offer({ epoch: 2 })).toBe(true);
  });
});

describe("OrbitCamera", () => {
  it("orbits around the center at a fixed distance", () => {
    const cam = new OrbitCamera([10, 10, 10], 50);
    const d0 = Math.hypot(...cam.eye().map((v, i) => v - [10, 10, 10][i]));
    cam.orbit(120, -60);
    const d1 = Math.hypot(...cam.eye().map((v, i) => v - [10, 10, 10][i]));
    expect(d0).toBeCloseTo(50, 9);
    expect(d1).toBeCloseTo(50, 9);
  });

  it("clamps elevation shy of the poles", () => {
    const cam = new OrbitCamera([0, 0, 0], 10);
    cam.orbit(0, 10000);
    expect(cam.phi).toBeLessThan(Math.PI / 2);
    cam.orbit(0, -20000);
    expect(cam.phi).toBeGreaterThan(-Math.PI / 2);
  });

  it("zoom scales the distance and never hits zero", () => {
    const cam = new OrbitCamera([0, 0, 0], 10);
    cam.zoom(0.5);
    expect(cam.distance).toBe(5);
    for (let i = 0; i < 100; i++) cam.zoom(0.01);
    expect(cam.distance).toBeGreaterThan(0);
  });

  it("emits a setCamera command", () => {
    const cam = fitOrbit([64, 64, 64], [1, 1, 1]);
    const cmd = cam.toCommand(512, 256);
    expect(cmd.cmd).toBe("setCamera");
    if (cmd.cmd === "setCamera") {
      expect(cmd.target).toEqual([32, 32, 32]);
      expect(cmd.width).toBe(512);
      expect(cmd.height).toBe(256);
      const dist = Math.hypot(...cmd.eye.map((v, i) => v - cmd.target[i]));
      expect(dist).toBeGreaterThan(Math.hypot(32, 32, 32)); // outside the volume
    }
  });
});

describe("timing helpers", () => {
  it("debounce fires once with the last arguments", async () => {
    vi.useFakeTimers();
    try {
      const calls: number[] = [];
      const fn = debounce((v: number) => calls.push(v), 50);
      fn(1);
      fn(2);
      fn(3);
      await vi.advanceTimersByTimeAsync(60);
      expect(calls).toEqual([3]);
    } finally {
      vi.useRealTimers();
    }
  });

  it("throttle fires immediately, then at most once per interval", async () => {
    vi.useFakeTimers();
    try {
      const calls: number[] = [];
      const fn = throttle((v: number) => calls.push(v), 100);
      fn(1);
      fn(2);
      fn(3);
      expect(calls).toEqual([1]);
      await vi.advanceTimersByTimeAsync(110);
      expect(calls).toEqual([1, 3]); // trailing call with the last args
      await vi.advanceTimersByTimeAsync(110);
      fn(4);
      expect(calls).toEqual([1, 3, 4]); // interval elapsed, leading edge again
    } finally {
      vi.useRealTimers();
    }
  });
});

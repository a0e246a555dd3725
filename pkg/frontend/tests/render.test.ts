import { describe, expect, it } from "vitest";

import {
  buildScene,
  cartpoleScene,
  describe as describeRender,
  intersectionScene,
  Viewport,
} from "../src/render.js";

const vp: Viewport = { width: 640, height: 360 };

describe("cartpoleScene", () => {
  const base = {
    kind: "cartpole",
    cart_x: 0,
    pole_angle: 0,
    pole_half_length: 0.5,
    position_limit: 2.4,
  };

  it("centers a zero-position cart and points an upright pole straight up", () => {
    const sc = cartpoleScene(base, vp);
    expect(sc.cartX).toBeCloseTo(vp.width / 2, 6);
    expect(sc.poleEnd[0]).toBeCloseTo(sc.cartX, 6);
    expect(sc.poleEnd[1]).toBeLessThan(sc.trackY); // up is smaller pixel y
  });

  it("maps the track limits onto the drawable width", () => {
    const left = cartpoleScene({ ...base, cart_x: -2.4 }, vp);
    const right = cartpoleScene({ ...base, cart_x: 2.4 }, vp);
    expect(left.cartX).toBeCloseTo(left.limitLeft, 6);
    expect(right.cartX).toBeCloseTo(right.limitRight, 6);
  });

  it("leans the pole tip toward positive x for a positive angle", () => {
    const sc = cartpoleScene({ ...base, pole_angle: 0.2 }, vp);
    expect(sc.poleEnd[0]).toBeGreaterThan(sc.cartX);
  });
});

describe("intersectionScene", () => {
  const base = {
    kind: "intersection",
    ego: [0, 0],
    other: [0.5, 0.5],
    goal: [0, 1],
    goal_dist: 0.1,
    collision_dist: 0.2,
  };

  it("places the origin at the canvas center with world y pointing up", () => {
    const sc = intersectionScene(base, vp);
    expect(sc.ego.x).toBeCloseTo(vp.width / 2, 6);
    expect(sc.ego.y).toBeCloseTo(vp.height / 2, 6);
    expect(sc.goal.y).toBeLessThan(sc.ego.y); // goal is above the ego
    expect(sc.other.x).toBeGreaterThan(sc.ego.x);
  });

  it("scales disc radii with the arena", () => {
    const sc = intersectionScene(base, vp);
    expect(sc.goal.r).toBeGreaterThan(0);
    expect(sc.ego.r).toBeCloseTo(sc.other.r, 6);
  });
});

describe("buildScene", () => {
  it("dispatches on the render kind", () => {
    const sc = buildScene(
      { kind: "cartpole", cart_x: 0, pole_angle: 0, pole_half_length: 0.5, position_limit: 2.4 },
      vp,
    );
    expect(sc.kind).toBe("cartpole");
  });

  it("falls back to a textual dump for unknown kinds", () => {
    const sc = buildScene({ kind: "absval", s: -0.35 }, vp);
    expect(sc.kind).toBe("fallback");
    if (sc.kind === "fallback") {
      expect(sc.lines).toEqual(['kind: "absval"', "s: -0.35"]);
    }
  });
});

describe("describe", () => {
  it("lists fields sorted by key", () => {
    expect(describeRender({ b: 2, a: [1, 2] })).toEqual(["a: [1,2]", "b: 2"]);
  });
});

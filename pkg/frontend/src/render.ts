/** Scene construction from server render payloads.
 *
 * Geometry is computed by pure functions (tested headlessly); the canvas
 * painter is a thin dispatcher over them. Unknown render kinds fall back
 * to a key/value listing, so a new server env displays without a frontend
 * change.
 */

export interface Viewport {
  width: number;
  height: number;
}

export interface CartpoleScene {
  kind: "cartpole";
  trackY: number;
  cartX: number;
  cartWidth: number;
  cartHeight: number;
  poleEnd: [number, number];
  limitLeft: number;
  limitRight: number;
}

export interface Disc {
  x: number;
  y: number;
  r: number;
}

export interface IntersectionScene {
  kind: "intersection";
  ego: Disc;
  other: Disc;
  goal: Disc;
}

export interface FallbackScene {
  kind: "fallback";
  lines: string[];
}

export type Scene = CartpoleScene | IntersectionScene | FallbackScene;

function num(render: Record<string, unknown>, key: string): number {
  const v = render[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new Error(`render field ${key} is not a finite number`);
  }
  return v;
}

function pair(render: Record<string, unknown>, key: string): [number, number] {
  const v = render[key];
  if (!Array.isArray(v) || v.length !== 2 || v.some((x) => typeof x !== "number")) {
    throw new Error(`render field ${key} is not an [x, y] pair`);
  }
  return [v[0], v[1]];
}

export function cartpoleScene(render: Record<string, unknown>, vp: Viewport): CartpoleScene {
  const limit = num(render, "position_limit");
  const margin = 20;
  const scale = (vp.width - 2 * margin) / (2 * limit);
  const trackY = vp.height * 0.7;
  const cartX = margin + (num(render, "cart_x") + limit) * scale;
  const poleLen = 2 * num(render, "pole_half_length") * scale;
  const angle = num(render, "pole_angle"); // 0 is upright, positive leans right
  return {
    kind: "cartpole",
    trackY,
    cartX,
    cartWidth: Math.max(24, scale * 0.3),
    cartHeight: 16,
    poleEnd: [cartX + poleLen * Math.sin(angle), trackY - poleLen * Math.cos(angle)],
    limitLeft: margin,
    limitRight: vp.width - margin,
  };
}

const ARENA = 1.3; // world half-width shown for the crossing task

export function intersectionScene(
  render: Record<string, unknown>,
  vp: Viewport,
): IntersectionScene {
  const side = Math.min(vp.width, vp.height);
  const scale = side / (2 * ARENA);
  const cx = vp.width / 2;
  const cy = vp.height / 2;
  const toPx = ([x, y]: [number, number]): [number, number] => [
    cx + x * scale,
    cy - y * scale, // world y points up
  ];
  const disc = (key: string, r: number): Disc => {
    const [x, y] = toPx(pair(render, key));
    return { x, y, r: r * scale };
  };
  const half = num(render, "collision_dist") / 2; // cars collide center-to-center
  return {
    kind: "intersection",
    ego: disc("ego", half),
    other: disc("other", half),
    goal: disc("goal", num(render, "goal_dist")),
  };
}

export function describe(render: Record<string, unknown>): string[] {
  return Object.keys(render)
    .sort()
    .map((k) => `${k}: ${JSON.stringify(render[k])}`);
}

export function buildScene(render: Record<string, unknown>, vp: Viewport): Scene {
  switch (render.kind) {
    case "cartpole":
      return cartpoleScene(render, vp);
    case "intersection":
      return intersectionScene(render, vp);
    default:
      return { kind: "fallback", lines: describe(render) };
  }
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  render: Record<string, unknown>,
): void {
  const scene = buildScene(render, vp);
  ctx.clearRect(0, 0, vp.width, vp.height);
  ctx.lineWidth = 2;
  if (scene.kind === "cartpole") {
    ctx.strokeStyle = "#555";
    ctx.beginPath();
    ctx.moveTo(scene.limitLeft, scene.trackY);
    ctx.lineTo(scene.limitRight, scene.trackY);
    ctx.stroke();
    ctx.fillStyle = "#4a90d9";
    ctx.fillRect(
      scene.cartX - scene.cartWidth / 2,
      scene.trackY - scene.cartHeight,
      scene.cartWidth,
      scene.cartHeight,
    );
    ctx.strokeStyle = "#e8a33d";
    ctx.beginPath();
    ctx.moveTo(scene.cartX, scene.trackY - scene.cartHeight);
    ctx.lineTo(scene.poleEnd[0], scene.poleEnd[1] - scene.cartHeight);
    ctx.stroke();
  } else if (scene.kind === "intersection") {
    ctx.strokeStyle = "#3fae6a";
    ctx.beginPath();
    ctx.arc(scene.goal.x, scene.goal.y, scene.goal.r, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillStyle = "#4a90d9";
    ctx.beginPath();
    ctx.arc(scene.ego.x, scene.ego.y, scene.ego.r, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#d95c4a";
    ctx.beginPath();
    ctx.arc(scene.other.x, scene.other.y, scene.other.r, 0, 2 * Math.PI);
    ctx.fill();
  } else {
    ctx.fillStyle = "#ccc";
    ctx.font = "13px monospace";
    scene.lines.forEach((line, i) => ctx.fillText(line, 10, 20 + 16 * i));
  }
}

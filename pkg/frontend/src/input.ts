/** Keyboard capture: held keys become continuous action components.
 *
 * Arrow keys and WASD map onto two axes; a held key contributes plus or
 * minus one to its axis and opposing keys cancel. One-dimensional envs
 * consume the x axis only; extra action dimensions beyond the two axes
 * stay zero.
 */

type Axis = 0 | 1;

const KEY_AXES: Record<string, [Axis, number]> = {
  ArrowLeft: [0, -1],
  ArrowRight: [0, 1],
  ArrowUp: [1, 1],
  ArrowDown: [1, -1],
  a: [0, -1],
  d: [0, 1],
  w: [1, 1],
  s: [1, -1],
};

export function keyBinding(key: string): [Axis, number] | null {
  return KEY_AXES[key.length === 1 ? key.toLowerCase() : key] ?? null;
}

export class KeyTracker {
  private down = new Set<string>();

  /** Register a keydown; true when it maps to an axis and was not held. */
  press(key: string): boolean {
    const binding = keyBinding(key);
    if (binding === null) return false;
    const name = key.length === 1 ? key.toLowerCase() : key;
    if (this.down.has(name)) return false;
    this.down.add(name);
    return true;
  }

  /** Register a keyup; true when it maps to an axis and was held. */
  release(key: string): boolean {
    const name = key.length === 1 ? key.toLowerCase() : key;
    if (!this.down.has(name)) return false;
    this.down.delete(name);
    return true;
  }

  /** Drop all held keys (window blur, disconnect). */
  clear(): boolean {
    const had = this.down.size > 0;
    this.down.clear();
    return had;
  }

  /** The current action vector for an env with the given dimension. */
  action(actionDim: number): number[] {
    const axes = [0, 0];
    for (const name of this.down) {
      const [axis, sign] = KEY_AXES[name];
      axes[axis] += sign;
    }
    const a = new Array(actionDim).fill(0);
    for (let d = 0; d < Math.min(2, actionDim); d++) {
      a[d] = Math.max(-1, Math.min(1, axes[d]));
    }
    return a;
  }
}

export interface GateClock {
  now(): number;
  schedule(fn: () => void, ms: number): void;
}

const wallClock: GateClock = {
  now: () => Date.now(),
  schedule: (fn, ms) => setTimeout(fn, ms),
};

/** Rate limiter for action messages: change-triggered, trailing-edge.
 *
 * A change arriving outside the interval goes out immediately (the key
 * press to wire latency is one call); changes inside the interval collapse
 * into one trailing send carrying the latest value, so the stream never
 * exceeds one message per interval and never drops the final state.
 */
export class SendGate {
  private lastSentAt = -Infinity;
  private lastValue: number[] | null = null;
  private pending: number[] | null = null;

  constructor(
    private readonly intervalMs: number,
    private readonly send: (a: number[]) => void,
    private readonly clock: GateClock = wallClock,
  ) {}

  offer(a: number[]): void {
    const target = this.pending ?? this.lastValue;
    if (target !== null && target.length === a.length && target.every((v, i) => v === a[i])) {
      return; // not a change
    }
    const now = this.clock.now();
    if (this.pending !== null) {
      this.pending = a; // a trailing send is already scheduled
      return;
    }
    if (now - this.lastSentAt >= this.intervalMs) {
      this.fire(a, now);
      return;
    }
    this.pending = a;
    this.clock.schedule(() => this.flush(), this.lastSentAt + this.intervalMs - now);
  }

  private flush(): void {
    if (this.pending === null) return;
    const a = this.pending;
    this.pending = null;
    this.fire(a, this.clock.now());
  }

  private fire(a: number[], now: number): void {
    this.lastSentAt = now;
    this.lastValue = a;
    this.send(a);
  }
}

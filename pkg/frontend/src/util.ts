/** Timing helpers for slider debounce and camera throttle. */

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
  timers: { set: typeof setTimeout; clear: typeof clearTimeout } = {
    set: setTimeout,
    clear: clearTimeout,
  },
): (...args: A) => void {
  let handle: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (handle !== null) timers.clear(handle);
    handle = timers.set(() => {
      handle = null;
      fn(...args);
    }, ms);
  };
}

/** Leading-edge throttle: at most one call per interval, last args win at the tick. */
export function throttle<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
  now: () => number = () => Date.now(),
  timers: { set: typeof setTimeout } = { set: setTimeout },
): (...args: A) => void {
  let last = -Infinity;
  let trailing: A | null = null;
  let scheduled = false;
  return (...args: A) => {
    const t = now();
    if (t - last >= ms) {
      last = t;
      fn(...args);
      return;
    }
    trailing = args;
    if (!scheduled) {
      scheduled = true;
      timers.set(() => {
        scheduled = false;
        if (trailing) {
          last = now();
          const args2 = trailing;
          trailing = null;
          fn(...args2);
        }
      }, ms - (t - last));
    }
  };
}

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
}

/** Trailing-edge debounce; at most one queued call, last arguments win. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
): Debounced<A> {
  let handle: ReturnType<typeof setTimeout> | null = null;
  const call = (...args: A): void => {
    if (handle !== null) clearTimeout(handle);
    handle = setTimeout(() => {
      handle = null;
      fn(...args);
    }, ms);
  };
  return Object.assign(call, {
    cancel(): void {
      if (handle !== null) clearTimeout(handle);
      handle = null;
    },
  });
}

/** At most one live request per panel, latest wins.

    A newer run aborts the previous one's signal and the superseded call
    resolves to undefined, so stale responses can never overwrite fresh
    state. Errors surface only from the run that is still current. */
export class LatestGate {
  private generation = 0;
  private controller: AbortController | null = null;

  get pending(): boolean {
    return this.controller !== null;
  }

  async run<T>(fn: (signal: AbortSignal) => Promise<T>): Promise<T | undefined> {
    const mine = ++this.generation;
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    try {
      const value = await fn(controller.signal);
      return mine === this.generation ? value : undefined;
    } catch (err) {
      if (mine !== this.generation || (err as Error)?.name === "AbortError") {
        return undefined;
      }
      throw err;
    } finally {
      if (mine === this.generation) this.controller = null;
    }
  }
}

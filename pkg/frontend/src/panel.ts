/** Single-flight render queue for one preview panel.
 *
 * Slider scrubbing can emit hundreds of parameter changes per second; the
 * panel serializes them so that at most one HTTP request is ever in flight
 * and the newest requested parameters always win.  Requests arriving while
 * one is active are coalesced: when the active request settles, exactly one
 * more is issued for the latest parameters, and a response that was
 * superseded while in flight is discarded rather than displayed.
 */

export interface PanelEvents<P> {
  onImage(bytes: Uint8Array, params: P): void;
  onError(error: unknown, params: P): void;
}

export type PanelFetcher<P> = (
  params: P,
  signal: AbortSignal,
) => Promise<Uint8Array>;

export class RenderPanel<P> {
  private latest: P | null = null;
  private dirty = false;
  private active = false;
  private disposed = false;
  private displayedKey: string | null = null;
  private abort: AbortController | null = null;

  constructor(
    private readonly fetcher: PanelFetcher<P>,
    private readonly events: PanelEvents<P>,
    private readonly keyOf: (params: P) => string,
  ) {}

  /** True while an HTTP request is outstanding. */
  inFlight(): boolean {
    return this.active;
  }

  /** Ask for a render; safe to call at any rate. */
  request(params: P): void {
    if (this.disposed) return;
    const key = this.keyOf(params);
    if (!this.active && key === this.displayedKey) return;
    this.latest = params;
    this.dirty = true;
    if (!this.active) void this.pump();
  }

  /** Forget the displayed result (server state changed under the same URL). */
  invalidate(): void {
    this.displayedKey = null;
  }

  /** Abort any in-flight request and refuse further ones. */
  dispose(): void {
    this.disposed = true;
    this.dirty = false;
    this.abort?.abort();
  }

  private async pump(): Promise<void> {
    this.active = true;
    try {
      while (this.dirty && !this.disposed) {
        this.dirty = false;
        const params = this.latest as P;
        this.abort = new AbortController();
        try {
          const bytes = await this.fetcher(params, this.abort.signal);
          if (!this.dirty && !this.disposed) {
            this.displayedKey = this.keyOf(params);
            this.events.onImage(bytes, params);
          }
        } catch (error) {
          // superseded or disposed requests may fail; nobody is waiting
          if (!this.dirty && !this.disposed) {
            this.events.onError(error, params);
          }
        }
      }
    } finally {
      this.abort = null;
      this.active = false;
    }
  }
}

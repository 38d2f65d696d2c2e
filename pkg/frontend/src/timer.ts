export type Clock = () => number;

/**
 * Measures one question's response time on a monotonic clock. The timer must
 * only be started after every stimulus image has finished loading, so the
 * measurement excludes network latency.
 */
export class QuestionTimer {
  private startedAt: number | null = null;

  constructor(private readonly now: Clock = () => performance.now()) {}

  get running(): boolean {
    return this.startedAt !== null;
  }

  /** Starts exactly once per question; repeated starts are ignored. */
  start(): void {
    if (this.startedAt === null) {
      this.startedAt = this.now();
    }
  }

  /** Elapsed whole milliseconds since start; stops the timer. */
  stop(): number {
    if (this.startedAt === null) {
      throw new Error("timer was never started");
    }
    const elapsed = Math.round(this.now() - this.startedAt);
    this.startedAt = null;
    return elapsed;
  }

  reset(): void {
    this.startedAt = null;
  }
}

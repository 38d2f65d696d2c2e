import { ApiClient } from "./api.js";
import { QuestionTimer } from "./timer.js";
import { QuestionPayload, isDone } from "./types.js";

/**
 * What the controller needs from the page. `awaitImages` resolves once every
 * stimulus has loaded (retrying failures once) and reports whether anything
 * still failed; the timer starts only after it resolves.
 */
export interface View {
  renderQuestion(q: QuestionPayload, total: number, loadFailed: boolean): void;
  awaitImages(q: QuestionPayload): Promise<boolean>;
  setInputEnabled(enabled: boolean): void;
  renderDone(): void;
  renderError(message: string): void;
}

export interface SessionHandle {
  sessionId: string;
  nQuestions: number;
}

/**
 * Drives one subject through one survey: fetch question, wait for stimuli,
 * time the decision, submit exactly once, advance. Answered questions are
 * unreachable; the flow only moves forward.
 */
export class SessionController {
  private current: QuestionPayload | null = null;
  private submitting = false;
  private readonly flagged: string[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly view: View,
    private readonly session: SessionHandle,
    private readonly timer: QuestionTimer = new QuestionTimer(),
  ) {}

  get flaggedQuestions(): readonly string[] {
    return this.flagged;
  }

  async start(): Promise<void> {
    await this.advance();
  }

  private async advance(): Promise<void> {
    this.timer.reset();
    this.current = null;
    let next;
    try {
      next = await this.api.nextQuestion(this.session.sessionId);
    } catch (error) {
      this.view.renderError(String(error));
      return;
    }
    if (isDone(next)) {
      this.view.renderDone();
      return;
    }
    const loadFailed = !(await this.view.awaitImages(next));
    if (loadFailed) {
      this.flagged.push(next.question_id);
    }
    this.view.renderQuestion(next, this.session.nQuestions, loadFailed);
    this.current = next;
    this.view.setInputEnabled(true);
    this.timer.start();
  }

  /** Called by the view on a choice click (1..5 candidates, 6 = not present). */
  async handleChoice(option: number): Promise<void> {
    if (this.current === null || this.submitting || !this.timer.running) {
      return; // double click, or no active question
    }
    const question = this.current;
    const rtMs = this.timer.stop();
    this.submitting = true;
    this.view.setInputEnabled(false);
    try {
      await this.api.submitResponse(this.session.sessionId, {
        question_id: question.question_id,
        chosen_option: option,
        rt_ms: rtMs,
      });
    } catch (error) {
      this.view.renderError(String(error));
      return;
    } finally {
      this.submitting = false;
    }
    await this.advance();
  }
}

import { SessionController, View } from "./controller.js";
import { NOT_PRESENT_OPTION, QuestionPayload } from "./types.js";

/** Loads one image, retrying once; resolves false when it still fails. */
function loadImage(img: HTMLImageElement, url: string): Promise<boolean> {
  const attempt = (src: string) =>
    new Promise<boolean>((resolve) => {
      img.onload = () => resolve(true);
      img.onerror = () => resolve(false);
      img.src = src;
    });
  return attempt(url).then((ok) => {
    if (ok) return true;
    return attempt(`${url}${url.includes("?") ? "&" : "?"}retry=1`);
  });
}

export class DomView implements View {
  private controller: SessionController | null = null;
  private buttons: HTMLButtonElement[] = [];
  private readonly referenceRow: HTMLElement;
  private readonly candidateRow: HTMLElement;
  private readonly optionsRow: HTMLElement;
  private readonly status: HTMLElement;
  private pendingImages: HTMLImageElement[] = [];

  constructor(private readonly root: HTMLElement) {
    this.root.innerHTML = `
      <div class="status"></div>
      <div class="reference-box"><div class="row reference"></div></div>
      <div class="row candidates"></div>
      <div class="row options"></div>
    `;
    this.status = this.root.querySelector(".status") as HTMLElement;
    this.referenceRow = this.root.querySelector(".reference") as HTMLElement;
    this.candidateRow = this.root.querySelector(".candidates") as HTMLElement;
    this.optionsRow = this.root.querySelector(".options") as HTMLElement;
  }

  bind(controller: SessionController): void {
    this.controller = controller;
  }

  awaitImages(q: QuestionPayload): Promise<boolean> {
    this.pendingImages = [];
    const jobs: Promise<boolean>[] = [];
    for (const url of [...q.reference_images, ...q.candidate_images]) {
      const img = document.createElement("img");
      this.pendingImages.push(img);
      jobs.push(loadImage(img, url));
    }
    return Promise.all(jobs).then((results) => results.every(Boolean));
  }

  renderQuestion(q: QuestionPayload, total: number, loadFailed: boolean): void {
    this.status.textContent = `Question ${q.index + 1} of ${total}`;
    if (loadFailed) {
      console.warn(`load_failed:${q.question_id}`);
      this.status.textContent += " (some images failed to load)";
    }
    this.referenceRow.replaceChildren(...this.pendingImages.slice(0, 5));
    this.candidateRow.replaceChildren();
    this.optionsRow.replaceChildren();
    this.buttons = [];

    this.pendingImages.slice(5).forEach((img, i) => {
      const button = document.createElement("button");
      button.className = "candidate";
      button.append(img);
      const label = document.createElement("span");
      label.textContent = String(i + 1);
      button.append(label);
      button.addEventListener("click", () => this.choose(i + 1));
      this.candidateRow.append(button);
      this.buttons.push(button);
    });

    if (q.allow_not_present) {
      const none = document.createElement("button");
      none.className = "not-present";
      none.textContent = "Not present";
      none.addEventListener("click", () => this.choose(NOT_PRESENT_OPTION));
      this.optionsRow.append(none);
      this.buttons.push(none);
    }
    this.pendingImages = [];
  }

  private choose(option: number): void {
    void this.controller?.handleChoice(option);
  }

  setInputEnabled(enabled: boolean): void {
    for (const button of this.buttons) {
      button.disabled = !enabled;
    }
  }

  renderDone(): void {
    this.root.innerHTML = `<div class="done">Survey complete. Thank you!</div>`;
  }

  renderError(message: string): void {
    this.status.textContent = `Error: ${message}`;
  }
}

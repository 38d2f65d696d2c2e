import { ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { DomView } from "./dom.js";

const SESSION_KEY = "rtosr_session";

interface StoredSession {
  sessionId: string;
  nQuestions: number;
  subjectId: string;
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");

  const params = new URLSearchParams(window.location.search);
  const subjectId = params.get("subject") ?? window.prompt("Subject id:") ?? "";
  if (!subjectId) {
    root.textContent = "A subject id is required (append ?subject=YOURID).";
    return;
  }

  const api = new ApiClient("");
  // Reloads resume the same session; everything else is refetched.
  let session: StoredSession | null = null;
  const stored = window.sessionStorage.getItem(SESSION_KEY);
  if (stored) {
    const parsed = JSON.parse(stored) as StoredSession;
    if (parsed.subjectId === subjectId) session = parsed;
  }
  if (!session) {
    const created = await api.createSession(subjectId);
    session = {
      sessionId: created.session_id,
      nQuestions: created.n_questions,
      subjectId,
    };
    window.sessionStorage.setItem(SESSION_KEY, JSON.stringify(session));
  }

  const view = new DomView(root);
  const controller = new SessionController(api, view, {
    sessionId: session.sessionId,
    nQuestions: session.nQuestions,
  });
  view.bind(controller);
  await controller.start();
}

boot().catch((error) => {
  const root = document.getElementById("app");
  if (root) root.textContent = `Failed to start: ${error}`;
});

"""Collection service: survey assignment, timed response recording, CSV export.

The store keeps an append-only response log guarded by a lock; a session's
responses are strictly ordered by question index, recording is idempotent on
exact duplicates, and exports see a consistent snapshot of completed
sessions. The HTTP layer is a thin FastAPI app over the store.
"""

import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import (
    SequencingError,
    SessionNotFoundError,
    SurveyExhaustedError,
)
from .rt_data import RTMeasurement, rt_raw_csv_text
from .survey import Session, Survey, SurveyQuestion

DEFAULT_QUORUM = 5

_IMAGE_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass
class StoredResponse:
    session_id: str
    measurement: RTMeasurement
    # server-side serve->receive delta, kept for auditing only; never
    # substituted for the client-measured RT
    audit_delta_ms: float | None


@dataclass
class _SessionState:
    session: Session
    answered: dict  # question_id -> (chosen_option, rt_ms)
    served_at: float | None = None


class SurveyStore:
    """In-memory state for one collection run."""

    def __init__(self, surveys: Sequence[Survey], quorum: int = DEFAULT_QUORUM):
        if not surveys:
            raise ValueError("at least one survey required")
        if quorum < 1:
            raise ValueError("quorum must be >= 1")
        self._surveys: dict[str, Survey] = {s.survey_id: s for s in surveys}
        if len(self._surveys) != len(surveys):
            raise ValueError("duplicate survey_id")
        self._order = [s.survey_id for s in surveys]
        self._quorum = quorum
        self._assignments: dict[str, int] = {sid: 0 for sid in self._order}
        self._subject_history: dict[str, set[str]] = {}
        self._sessions: dict[str, _SessionState] = {}
        self._responses: list[StoredResponse] = []
        self._counter = 0
        self._lock = threading.Lock()

    # -- assignment ---------------------------------------------------------

    def assign_survey(self, subject_id: str) -> Session:
        """Bind the subject to a survey they have not seen, consuming one
        quorum slot; raises when no eligible survey remains."""
        if not subject_id:
            raise ValueError("subject_id required")
        with self._lock:
            history = self._subject_history.setdefault(subject_id, set())
            eligible = [
                sid
                for sid in self._order
                if sid not in history and self._assignments[sid] < self._quorum
            ]
            if not eligible:
                raise SurveyExhaustedError(
                    f"no eligible survey for subject {subject_id!r}"
                )
            sid = eligible[0]
            self._assignments[sid] += 1
            history.add(sid)
            self._counter += 1
            session = Session(
                session_id=f"session_{self._counter:06d}",
                subject_id=subject_id,
                survey_id=sid,
            )
            self._sessions[session.session_id] = _SessionState(session=session, answered={})
            return session

    # -- question flow ------------------------------------------------------

    def current_question(self, session_id: str) -> tuple[int, SurveyQuestion] | None:
        """The session's next unanswered question, or None when done."""
        with self._lock:
            state = self._state(session_id)
            questions = self._surveys[state.session.survey_id].questions
            if state.session.cursor >= len(questions):
                return None
            state.served_at = time.monotonic()
            return state.session.cursor, questions[state.session.cursor]

    def record_response(
        self, session_id: str, question_id: str, chosen_option: int, rt_ms: int
    ) -> None:
        if not 1 <= chosen_option <= 6:
            raise ValueError("chosen_option must be in 1..6")
        if rt_ms < 0:
            raise ValueError("rt_ms must be >= 0")
        with self._lock:
            state = self._state(session_id)
            questions = self._surveys[state.session.survey_id].questions

            if question_id in state.answered:
                if state.answered[question_id] == (chosen_option, rt_ms):
                    return  # exact duplicate: idempotent
                raise SequencingError(
                    f"question {question_id!r} already answered with a different payload"
                )
            if state.session.cursor >= len(questions):
                raise SequencingError("session already complete")
            current = questions[state.session.cursor]
            if question_id != current.question_id:
                raise SequencingError(
                    f"expected response to {current.question_id!r}, got {question_id!r}"
                )

            measurement = RTMeasurement(
                subject_id=state.session.subject_id,
                survey_id=state.session.survey_id,
                question_id=question_id,
                image_id=current.target_image_id or "",
                chosen_option=chosen_option,
                correct_option=current.correct_option,
                is_control=current.is_control,
                rt_seconds=rt_ms / 1000.0,
            )
            delta = None
            if state.served_at is not None:
                delta = (time.monotonic() - state.served_at) * 1000.0
            self._responses.append(
                StoredResponse(session_id, measurement, audit_delta_ms=delta)
            )
            state.answered[question_id] = (chosen_option, rt_ms)
            state.session.responses.append(measurement)
            state.session.cursor += 1
            state.served_at = None

    # -- export -------------------------------------------------------------

    def _state(self, session_id: str) -> _SessionState:
        state = self._sessions.get(session_id)
        if state is None:
            raise SessionNotFoundError(f"unknown session {session_id!r}")
        return state

    def session_length(self, session_id: str) -> int:
        with self._lock:
            state = self._state(session_id)
            return len(self._surveys[state.session.survey_id].questions)

    def completed_measurements(self) -> list[RTMeasurement]:
        """Snapshot of all responses belonging to completed sessions."""
        with self._lock:
            done = {
                sid
                for sid, state in self._sessions.items()
                if state.session.cursor
                >= len(self._surveys[state.session.survey_id].questions)
            }
            return [r.measurement for r in self._responses if r.session_id in done]

    def export_rt_raw(self) -> str:
        return rt_raw_csv_text(self.completed_measurements())


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

def create_app(
    store: SurveyStore,
    images_dir: str | Path | None = None,
    frontend_dir: str | Path | None = None,
):
    from fastapi import FastAPI, Request
    from fastapi.responses import FileResponse, JSONResponse, Response
    from pydantic import BaseModel, Field

    app = FastAPI(title="rt collection service")

    class SessionRequest(BaseModel):
        subject_id: str = Field(min_length=1)

    class ResponseBody(BaseModel):
        question_id: str
        chosen_option: int = Field(ge=1, le=6)
        rt_ms: int = Field(ge=0)

    def _error(status: int, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "message": str(exc)},
        )

    @app.exception_handler(SurveyExhaustedError)
    async def _exhausted(request: Request, exc: SurveyExhaustedError):
        return _error(409, exc)

    @app.exception_handler(SequencingError)
    async def _sequencing(request: Request, exc: SequencingError):
        return _error(409, exc)

    @app.exception_handler(SessionNotFoundError)
    async def _not_found(request: Request, exc: SessionNotFoundError):
        return _error(404, exc)

    @app.post("/api/sessions")
    def create_session(body: SessionRequest):
        session = store.assign_survey(body.subject_id)
        return {
            "session_id": session.session_id,
            "survey_id": session.survey_id,
            "n_questions": store.session_length(session.session_id),
        }

    @app.get("/api/sessions/{session_id}/next")
    def next_question(session_id: str):
        item = store.current_question(session_id)
        if item is None:
            return {"done": True}
        index, q = item
        return {
            "question_id": q.question_id,
            "index": index,
            "reference_images": [f"/static/images/{i}" for i in q.reference_images],
            "candidate_images": [f"/static/images/{i}" for i in q.candidate_images],
            "allow_not_present": True,
        }

    @app.post("/api/sessions/{session_id}/responses")
    def post_response(session_id: str, body: ResponseBody):
        store.record_response(session_id, body.question_id, body.chosen_option, body.rt_ms)
        return {"ok": True}

    @app.get("/api/export/rt_raw")
    def export_rt_raw():
        return Response(content=store.export_rt_raw(), media_type="text/csv")

    @app.get("/static/images/{image_id}")
    def get_image(image_id: str):
        if images_dir is None:
            return _error(404, FileNotFoundError("no images directory configured"))
        if not _IMAGE_ID_RE.match(image_id):
            return _error(404, FileNotFoundError(f"bad image id {image_id!r}"))
        path = Path(images_dir) / image_id
        if not path.is_file():
            return _error(404, FileNotFoundError(f"no such image {image_id!r}"))
        return FileResponse(path)

    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")

    return app


def serve(
    store: SurveyStore,
    images_dir,
    host: str = "127.0.0.1",
    port: int = 8000,
    frontend_dir=None,
):
    import uvicorn

    uvicorn.run(create_app(store, images_dir, frontend_dir), host=host, port=port)

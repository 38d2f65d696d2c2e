"""Survey construction for the timed two-row recognition task.

Each question shows five reference images of one class above five candidate
images; the subject picks the first candidate of the reference class, or a
sixth "not present" option. For n classes, every ordered class pair
(including self-pairs) yields one survey of 20 task questions plus 5
trivially easy control questions, for n^2 survey sets in total.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import SurveyGenerationError
from .rt_data import NOT_PRESENT_OPTION

QUESTIONS_PER_PAIR = 20
CONTROLS_PER_SURVEY = 5
QUESTIONS_PER_SURVEY = QUESTIONS_PER_PAIR + CONTROLS_PER_SURVEY
MIN_IMAGES_PER_CLASS = 10
DEFAULT_NOT_PRESENT_FRACTION = 0.2


@dataclass(frozen=True)
class SurveyQuestion:
    question_id: str
    reference_class: str
    reference_images: tuple[str, ...]
    candidate_images: tuple[str, ...]
    correct_option: int
    is_control: bool
    target_image_id: str | None

    def __post_init__(self) -> None:
        object.__setattr__(self, "reference_images", tuple(self.reference_images))
        object.__setattr__(self, "candidate_images", tuple(self.candidate_images))
        if len(self.reference_images) != 5:
            raise ValueError("exactly 5 reference images required")
        if len(self.candidate_images) != 5:
            raise ValueError("exactly 5 candidate images required")
        if not 1 <= self.correct_option <= 6:
            raise ValueError("correct_option must be in 1..6")
        if self.correct_option == NOT_PRESENT_OPTION:
            if self.target_image_id is not None:
                raise ValueError("not-present questions have no target image")
        else:
            if self.target_image_id != self.candidate_images[self.correct_option - 1]:
                raise ValueError("target_image_id must be the correct candidate")


@dataclass(frozen=True)
class Survey:
    survey_id: str
    questions: tuple[SurveyQuestion, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "questions", tuple(self.questions))
        if len(self.questions) != QUESTIONS_PER_SURVEY:
            raise ValueError(f"a survey holds exactly {QUESTIONS_PER_SURVEY} questions")
        n_controls = sum(1 for q in self.questions if q.is_control)
        if n_controls != CONTROLS_PER_SURVEY:
            raise ValueError(f"expected {CONTROLS_PER_SURVEY} controls, got {n_controls}")
        qids = [q.question_id for q in self.questions]
        if len(set(qids)) != len(qids):
            raise ValueError("duplicate question_id within survey")


@dataclass
class Session:
    """One subject working through one survey; responses are append-only."""

    session_id: str
    subject_id: str
    survey_id: str
    cursor: int = 0
    responses: list = field(default_factory=list)


def _default_control_pairing(classes: Sequence[str]) -> dict[str, str]:
    # Stand-in for a curated "maximally dissimilar" table: pair each class
    # with the one halfway across the class list.
    n = len(classes)
    return {c: classes[(i + n // 2) % n] for i, c in enumerate(classes)}


def _build_question(
    rng: random.Random,
    qid: str,
    ref_class: str,
    distractor_class: str,
    image_pool: Mapping[str, Sequence[str]],
    not_present: bool,
    is_control: bool,
) -> SurveyQuestion:
    refs = tuple(rng.sample(list(image_pool[ref_class]), 5))
    if not_present:
        candidates = tuple(rng.sample(list(image_pool[distractor_class]), 5))
        return SurveyQuestion(
            qid, ref_class, refs, candidates, NOT_PRESENT_OPTION, is_control, None
        )
    remaining = [img for img in image_pool[ref_class] if img not in refs]
    if ref_class == distractor_class:
        # Self-pair: every candidate shows the reference class, so the first
        # one is by definition the answer.
        candidates = tuple(rng.sample(remaining, 5))
        option = 1
    else:
        target = rng.choice(remaining)
        distractors = rng.sample(list(image_pool[distractor_class]), 4)
        option = rng.randint(1, 5)
        merged = distractors[: option - 1] + [target] + distractors[option - 1 :]
        candidates = tuple(merged)
    return SurveyQuestion(
        qid, ref_class, refs, candidates, option, is_control, candidates[option - 1]
    )


def generate_survey_sets(
    classes: Sequence[str],
    image_pool: Mapping[str, Sequence[str]],
    rng_seed: int,
    not_present_fraction: float = DEFAULT_NOT_PRESENT_FRACTION,
    control_pairing: Mapping[str, str] | None = None,
) -> list[Survey]:
    """One survey per ordered class pair, deterministically from the seed."""
    n = len(classes)
    if n < 2:
        raise SurveyGenerationError("need at least 2 classes")
    if len(set(classes)) != n:
        raise SurveyGenerationError("duplicate class labels")
    if not 0.0 <= not_present_fraction <= 0.5:
        raise SurveyGenerationError("not_present_fraction must be in [0, 0.5]")
    for c in classes:
        if len(image_pool.get(c, ())) < MIN_IMAGES_PER_CLASS:
            raise SurveyGenerationError(
                f"class {c!r} has {len(image_pool.get(c, ()))} images; "
                f"need >= {MIN_IMAGES_PER_CLASS}"
            )
    pairing = dict(control_pairing) if control_pairing else _default_control_pairing(classes)
    for ref, ctrl in pairing.items():
        if ref == ctrl:
            raise SurveyGenerationError(f"control pairing maps {ref!r} to itself")

    rng = random.Random(rng_seed)
    surveys: list[Survey] = []
    for i, ref_class in enumerate(classes):
        for j, distractor in enumerate(classes):
            pair_idx = i * n + j
            n_not_present = (
                0 if ref_class == distractor else round(QUESTIONS_PER_PAIR * not_present_fraction)
            )
            not_present_slots = set(rng.sample(range(QUESTIONS_PER_PAIR), n_not_present))
            questions = [
                _build_question(
                    rng,
                    f"q{pair_idx:05d}_{t:02d}",
                    ref_class,
                    distractor,
                    image_pool,
                    not_present=t in not_present_slots,
                    is_control=False,
                )
                for t in range(QUESTIONS_PER_PAIR)
            ]
            questions += [
                _build_question(
                    rng,
                    f"q{pair_idx:05d}_c{t}",
                    ref_class,
                    pairing[ref_class],
                    image_pool,
                    not_present=False,
                    is_control=True,
                )
                for t in range(CONTROLS_PER_SURVEY)
            ]
            rng.shuffle(questions)
            surveys.append(Survey(f"survey_{pair_idx:05d}", tuple(questions)))
    return surveys


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _question_to_dict(q: SurveyQuestion) -> dict:
    return {
        "question_id": q.question_id,
        "reference_class": q.reference_class,
        "reference_images": list(q.reference_images),
        "candidate_images": list(q.candidate_images),
        "correct_option": q.correct_option,
        "is_control": q.is_control,
        "target_image_id": q.target_image_id,
    }


def _question_from_dict(d: dict) -> SurveyQuestion:
    return SurveyQuestion(
        question_id=d["question_id"],
        reference_class=d["reference_class"],
        reference_images=tuple(d["reference_images"]),
        candidate_images=tuple(d["candidate_images"]),
        correct_option=int(d["correct_option"]),
        is_control=bool(d["is_control"]),
        target_image_id=d["target_image_id"],
    )


def surveys_to_json(surveys: Sequence[Survey]) -> str:
    return json.dumps(
        {
            "surveys": [
                {
                    "survey_id": s.survey_id,
                    "questions": [_question_to_dict(q) for q in s.questions],
                }
                for s in surveys
            ]
        },
        indent=2,
    )


def surveys_from_json(text: str) -> list[Survey]:
    obj = json.loads(text)
    return [
        Survey(
            s["survey_id"],
            tuple(_question_from_dict(q) for q in s["questions"]),
        )
        for s in obj["surveys"]
    ]

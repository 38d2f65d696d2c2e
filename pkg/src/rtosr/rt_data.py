"""Reaction-time data handling.

Ingests raw timed responses from the collection service, enforces the
validity rules (attention controls, outlier cutoff, sixth-option and
wrong-answer exclusion), aggregates per-image mean RTs, and derives the
quantile binning that maps a mean RT to a target exit index.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable, Mapping, TextIO

from .errors import DegenerateBinningError, MalformedSubmissionError

# Upper validity bound for a single response time, in seconds. Responses at or
# above this value are discarded as inattentive.
DEFAULT_MAX_RT_SECONDS = 28.0

# Option index meaning "no image of the reference class is present".
NOT_PRESENT_OPTION = 6

CONTROLS_PER_SURVEY = 5
MAX_WRONG_CONTROLS = 2

RT_RAW_COLUMNS = (
    "subject_id",
    "survey_id",
    "question_id",
    "image_id",
    "chosen_option",
    "correct_option",
    "is_control",
    "rt_seconds",
)

RT_AGG_COLUMNS = ("image_id", "mean_rt_seconds", "n_measurements")


@dataclass(frozen=True)
class RTMeasurement:
    """One timed response to one survey question.

    ``image_id`` names the known-class image the RT is attributed to (the
    image to be found in the candidate row); it is empty for questions whose
    correct answer is the "not present" option.
    """

    subject_id: str
    survey_id: str
    question_id: str
    image_id: str
    chosen_option: int
    correct_option: int
    is_control: bool
    rt_seconds: float

    def __post_init__(self) -> None:
        if not 1 <= self.chosen_option <= 6:
            raise ValueError(f"chosen_option must be in 1..6, got {self.chosen_option}")
        if not 1 <= self.correct_option <= 6:
            raise ValueError(f"correct_option must be in 1..6, got {self.correct_option}")
        if self.rt_seconds < 0:
            raise ValueError(f"rt_seconds must be >= 0, got {self.rt_seconds}")

    @property
    def answered_correctly(self) -> bool:
        return self.chosen_option == self.correct_option


@dataclass(frozen=True)
class ImageRT:
    """Aggregated mean reaction time for one image."""

    image_id: str
    mean_rt_seconds: float
    n_measurements: int

    def __post_init__(self) -> None:
        if not 0 < self.mean_rt_seconds <= DEFAULT_MAX_RT_SECONDS:
            raise ValueError(
                f"mean_rt_seconds must be in (0, {DEFAULT_MAX_RT_SECONDS}], "
                f"got {self.mean_rt_seconds}"
            )
        if self.n_measurements < 1:
            raise ValueError("n_measurements must be >= 1")


@dataclass(frozen=True)
class RTDataset:
    """A batch of raw measurements plus the validity cutoff applied to them."""

    measurements: tuple[RTMeasurement, ...]
    r_max_seconds: float = DEFAULT_MAX_RT_SECONDS

    def __post_init__(self) -> None:
        object.__setattr__(self, "measurements", tuple(self.measurements))
        if self.r_max_seconds <= 0:
            raise ValueError("r_max_seconds must be positive")


@dataclass(frozen=True)
class ExitBinning:
    """Cutoffs splitting (0, r_max] into ``n_exits`` right-closed RT bins."""

    cutoffs: tuple[float, ...]
    n_exits: int = 5

    def __post_init__(self) -> None:
        object.__setattr__(self, "cutoffs", tuple(float(c) for c in self.cutoffs))
        if self.n_exits < 2:
            raise ValueError("n_exits must be >= 2")
        if len(self.cutoffs) != self.n_exits - 1:
            raise ValueError(
                f"expected {self.n_exits - 1} cutoffs, got {len(self.cutoffs)}"
            )
        if any(a >= b for a, b in zip(self.cutoffs, self.cutoffs[1:])):
            raise ValueError("cutoffs must be strictly ascending")


@dataclass(frozen=True)
class SubmissionVerdict:
    accepted: bool
    reason: str


@dataclass(frozen=True)
class PairRTStats:
    """Summary statistics for one (reference class, distractor class) pairing."""

    count: int
    min_rt: float
    median_rt: float
    mean_rt: float
    max_rt: float


def validate_submission(survey_responses: list[RTMeasurement]) -> SubmissionVerdict:
    """Accept or reject one subject's completed survey.

    A submission is rejected when 3 or more of its 5 control questions were
    answered incorrectly. Structural problems (wrong control count, duplicate
    question ids, mixed subject/survey ids) raise
    :class:`MalformedSubmissionError` instead of producing a rejection.
    """
    if not survey_responses:
        raise MalformedSubmissionError("empty submission")
    keys = {(m.subject_id, m.survey_id) for m in survey_responses}
    if len(keys) != 1:
        raise MalformedSubmissionError(
            f"submission mixes {len(keys)} (subject_id, survey_id) pairs"
        )
    qids = [m.question_id for m in survey_responses]
    if len(set(qids)) != len(qids):
        raise MalformedSubmissionError("duplicate question_id in submission")
    controls = [m for m in survey_responses if m.is_control]
    if len(controls) != CONTROLS_PER_SURVEY:
        raise MalformedSubmissionError(
            f"expected {CONTROLS_PER_SURVEY} control questions, got {len(controls)}"
        )
    wrong = sum(1 for m in controls if not m.answered_correctly)
    if wrong > MAX_WRONG_CONTROLS:
        return SubmissionVerdict(False, f"{wrong} of {len(controls)} control questions wrong")
    return SubmissionVerdict(True, f"{wrong} of {len(controls)} control questions wrong")


def filter_valid_measurements(ds: RTDataset) -> list[RTMeasurement]:
    """Return the measurements usable for training-data aggregation.

    A measurement is retained iff all of the following hold:

    * its submission (one subject x one survey) was accepted by
      :func:`validate_submission`;
    * it is not a control question;
    * its correct answer is not the "not present" option;
    * the subject answered it correctly (the RT attaches to a correctly
      identified known image);
    * its RT is strictly under the dataset's ``r_max_seconds`` cutoff.

    Malformed submissions are excluded wholesale; this function never raises.
    """
    groups: dict[tuple[str, str], list[RTMeasurement]] = {}
    for m in ds.measurements:
        groups.setdefault((m.subject_id, m.survey_id), []).append(m)

    kept: list[RTMeasurement] = []
    for submission in groups.values():
        try:
            verdict = validate_submission(submission)
        except MalformedSubmissionError:
            continue
        if not verdict.accepted:
            continue
        for m in submission:
            if m.is_control:
                continue
            if m.correct_option == NOT_PRESENT_OPTION:
                continue
            if not m.answered_correctly:
                continue
            if m.rt_seconds >= ds.r_max_seconds:
                continue
            kept.append(m)
    return kept


def aggregate_mean_rt(valid: list[RTMeasurement]) -> list[ImageRT]:
    """Group already-filtered measurements by image and average their RTs.

    Uses exact-rational averaging so the mean always lands inside the range
    of its inputs.
    """
    by_image: dict[str, list[float]] = {}
    for m in valid:
        by_image.setdefault(m.image_id, []).append(m.rt_seconds)
    return [
        ImageRT(image_id, statistics.mean(rts), len(rts))
        for image_id, rts in sorted(by_image.items())
    ]


def _type7_cutoffs(sorted_values: list[float], n_bins: int) -> list[float]:
    """Quantiles at k/n_bins via linear interpolation between order statistics.

    Positions are computed in integer arithmetic so a cutoff landing exactly
    on an order statistic equals it bit-for-bit.
    """
    m = len(sorted_values) - 1
    cutoffs = []
    for k in range(1, n_bins):
        j, rem = divmod(m * k, n_bins)
        if rem == 0:
            cutoffs.append(sorted_values[j])
        else:
            frac = rem / n_bins
            lo, hi = sorted_values[j], sorted_values[j + 1]
            cutoffs.append(lo + frac * (hi - lo))
    return cutoffs


def compute_quintile_binning(rts: list[ImageRT], n_exits: int = 5) -> ExitBinning:
    """Place bin cutoffs at the k/n_exits quantiles of the mean RT values.

    Quantiles use linear interpolation between order statistics (the common
    "type 7" convention). Raises :class:`DegenerateBinningError` when the data
    cannot support ``n_exits`` distinct bins.
    """
    if not rts:
        raise ValueError("rts must be nonempty")
    if n_exits < 2:
        raise ValueError("n_exits must be >= 2")
    values = [r.mean_rt_seconds for r in rts]
    if len(set(values)) < n_exits:
        raise DegenerateBinningError(
            f"{len(set(values))} distinct RT values cannot fill {n_exits} bins"
        )
    cutoffs = _type7_cutoffs(sorted(values), n_exits)
    if any(a >= b for a, b in zip(cutoffs, cutoffs[1:])):
        raise DegenerateBinningError("quantile cutoffs are not strictly ascending")
    return ExitBinning(tuple(cutoffs), n_exits)


def target_exit(
    binning: ExitBinning,
    mean_rt: float,
    max_rt_seconds: float = DEFAULT_MAX_RT_SECONDS,
) -> int:
    """Map a mean RT to its 1-based target exit index.

    Bins are left-open/right-closed: an RT equal to a cutoff falls in the
    lower bin. RTs above the last cutoff map to the final exit.
    """
    if not 0 < mean_rt <= max_rt_seconds:
        raise ValueError(
            f"mean_rt must be in (0, {max_rt_seconds}], got {mean_rt}"
        )
    return 1 + bisect_left(binning.cutoffs, mean_rt)


def summarize_by_class_pair(
    valid: list[RTMeasurement],
    class_of: Mapping[str, str],
    distractor_class_of: Mapping[str, str],
) -> dict[tuple[str, str], PairRTStats]:
    """Summarize RTs per (reference class, distractor class) pairing.

    ``class_of`` maps image ids to class labels; ``distractor_class_of`` maps
    question ids to the distractor class shown alongside the reference class.
    Pairs with no measurements are absent from the output.
    """
    groups: dict[tuple[str, str], list[float]] = {}
    for m in valid:
        if m.image_id not in class_of:
            raise KeyError(f"image_id {m.image_id!r} has no class label")
        if m.question_id not in distractor_class_of:
            raise KeyError(f"question_id {m.question_id!r} has no distractor class")
        pair = (class_of[m.image_id], distractor_class_of[m.question_id])
        groups.setdefault(pair, []).append(m.rt_seconds)

    return {
        pair: PairRTStats(
            count=len(rts),
            min_rt=min(rts),
            median_rt=statistics.median(rts),
            mean_rt=statistics.mean(rts),
            max_rt=max(rts),
        )
        for pair, rts in sorted(groups.items())
    }


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def write_rt_raw_csv(measurements: Iterable[RTMeasurement], f: TextIO) -> None:
    w = csv.writer(f)
    w.writerow(RT_RAW_COLUMNS)
    for m in measurements:
        w.writerow(
            [
                m.subject_id,
                m.survey_id,
                m.question_id,
                m.image_id,
                m.chosen_option,
                m.correct_option,
                "true" if m.is_control else "false",
                repr(m.rt_seconds),
            ]
        )


def rt_raw_csv_text(measurements: Iterable[RTMeasurement]) -> str:
    buf = io.StringIO()
    write_rt_raw_csv(measurements, buf)
    return buf.getvalue()


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1"):
        return True
    if v in ("false", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def read_rt_raw_csv(f: TextIO) -> list[RTMeasurement]:
    reader = csv.DictReader(f)
    missing = set(RT_RAW_COLUMNS) - set(reader.fieldnames or [])
    if missing:
        raise ValueError(f"rt_raw CSV missing columns: {sorted(missing)}")
    return [
        RTMeasurement(
            subject_id=row["subject_id"],
            survey_id=row["survey_id"],
            question_id=row["question_id"],
            image_id=row["image_id"],
            chosen_option=int(row["chosen_option"]),
            correct_option=int(row["correct_option"]),
            is_control=_parse_bool(row["is_control"]),
            rt_seconds=float(row["rt_seconds"]),
        )
        for row in reader
    ]


def write_rt_agg_csv(rts: Iterable[ImageRT], f: TextIO) -> None:
    w = csv.writer(f)
    w.writerow(RT_AGG_COLUMNS)
    for r in rts:
        w.writerow([r.image_id, repr(r.mean_rt_seconds), r.n_measurements])


def read_rt_agg_csv(f: TextIO) -> list[ImageRT]:
    reader = csv.DictReader(f)
    missing = set(RT_AGG_COLUMNS) - set(reader.fieldnames or [])
    if missing:
        raise ValueError(f"rt_agg CSV missing columns: {sorted(missing)}")
    return [
        ImageRT(row["image_id"], float(row["mean_rt_seconds"]), int(row["n_measurements"]))
        for row in reader
    ]


def binning_to_json(binning: ExitBinning) -> str:
    return json.dumps({"n_exits": binning.n_exits, "cutoffs": list(binning.cutoffs)})


def binning_from_json(text: str) -> ExitBinning:
    obj = json.loads(text)
    return ExitBinning(tuple(obj["cutoffs"]), int(obj["n_exits"]))

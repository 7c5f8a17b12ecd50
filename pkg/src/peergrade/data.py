"""Core grading data model, validation, normalization and serialization.

A :class:`Dataset` bundles exercises, submissions, group membership, cardinal
grades, ordinal ballots and optional exam grades.  Values are immutable after
construction; normalization returns a new dataset.  Identifiers are coerced
to strings at construction so datasets round-trip through CSV/JSON unchanged.
"""

from __future__ import annotations

import csv
import enum
import json
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from peergrade.errors import (
    DataError,
    DegenerateExerciseError,
    InvalidExerciseError,
)

CSV_FILES = ("exercises.csv", "groups.csv", "grades.csv", "ballots.csv", "exams.csv")


class GradeRole(enum.Enum):
    """Who produced a cardinal grade."""

    SELF = "self"
    PEER = "peer"
    TA = "ta"


def _as_role(role) -> GradeRole:
    if isinstance(role, GradeRole):
        return role
    try:
        return GradeRole(str(role))
    except ValueError:
        raise DataError(f"unknown grade role {role!r} (expected self, peer or ta)")


def as_roles(roles) -> frozenset[GradeRole]:
    """Normalize a role set given as enum members or strings."""
    return frozenset(_as_role(r) for r in roles)


@dataclass(frozen=True)
class CardinalGrade:
    """One (exercise, submission, grader, role, value) observation."""

    exercise: str
    submission: str
    grader: str
    role: GradeRole
    value: float

    def sort_key(self):
        return (self.exercise, self.submission, self.grader, self.role.value)


@dataclass(frozen=True)
class OrdinalBallot:
    """One grader's worst-to-best ranking over submissions of one exercise.

    ``ranking`` is a tuple of tie-groups; members within a group are sorted so
    equal ballots compare equal.
    """

    exercise: str
    grader: str
    ranking: tuple[tuple[str, ...], ...]

    def submissions(self) -> tuple[str, ...]:
        return tuple(s for group in self.ranking for s in group)

    def sort_key(self):
        return (self.exercise, self.grader)


def make_ballot(exercise, grader, ranking: Sequence[Iterable]) -> OrdinalBallot:
    """Build a canonical ballot from any worst-to-best nested id sequence."""
    groups = tuple(tuple(sorted(str(s) for s in group)) for group in ranking)
    return OrdinalBallot(str(exercise), str(grader), groups)


@dataclass(frozen=True)
class TruthSet:
    """True scores keyed by (exercise, submission), with a provenance tag."""

    scores: Mapping[tuple[str, str], float]
    provenance: str = "synthetic"  # "ta" | "synthetic"

    def for_exercise(self, exercise: str) -> dict[str, float]:
        return {s: v for (e, s), v in self.scores.items() if e == exercise}


@dataclass(frozen=True)
class Dataset:
    """Validated, canonically ordered grading data for one course.

    Fields are treated as immutable; derive modified datasets through the
    module-level constructors (``make_dataset``, ``normalize_scores``,
    ``with_exam_grades``).
    """

    exercises: dict[str, float]            # exercise -> raw score maximum
    submissions: dict[str, str]            # submission -> exercise
    groups: dict[str, frozenset[str]]      # submission -> member graders
    grades: tuple[CardinalGrade, ...]
    ballots: tuple[OrdinalBallot, ...]
    exam_grades: dict[str, float]          # grader -> exam grade

    def graders(self) -> frozenset[str]:
        ids = set()
        for members in self.groups.values():
            ids.update(members)
        ids.update(g.grader for g in self.grades)
        ids.update(b.grader for b in self.ballots)
        ids.update(self.exam_grades)
        return frozenset(ids)

    def submissions_of(self, exercise: str) -> tuple[str, ...]:
        return tuple(s for s, e in self.submissions.items() if e == exercise)

    def grades_of(self, roles=None, exercise: str | None = None):
        roles = None if roles is None else as_roles(roles)
        for g in self.grades:
            if roles is not None and g.role not in roles:
                continue
            if exercise is not None and g.exercise != exercise:
                continue
            yield g


def make_dataset(
    exercises: Mapping,
    submissions: Mapping,
    groups: Mapping | None = None,
    grades: Iterable[CardinalGrade] = (),
    ballots: Iterable[OrdinalBallot] = (),
    exam_grades: Mapping | None = None,
    max_group_size: int = 3,
) -> Dataset:
    """Validate and canonicalize raw pieces into a :class:`Dataset`.

    Raises :class:`DataError` naming the offending record on any invariant
    violation (dangling ids, duplicate grade tuples, self grades by
    non-members, peer grades by members, oversized groups, ...).
    """
    ex = {str(e): float(m) for e, m in sorted(exercises.items(), key=lambda kv: str(kv[0]))}
    subs = {str(s): str(e) for s, e in sorted(submissions.items(), key=lambda kv: str(kv[0]))}
    grp = {
        str(s): frozenset(str(g) for g in members)
        for s, members in sorted((groups or {}).items(), key=lambda kv: str(kv[0]))
    }
    exams = {
        str(g): float(v)
        for g, v in sorted((exam_grades or {}).items(), key=lambda kv: str(kv[0]))
    }

    for e in ex:
        if not e:
            raise DataError("empty exercise id")
    for s, e in subs.items():
        if not s:
            raise DataError("empty submission id")
        if e not in ex:
            raise DataError(f"submission {s!r} references unknown exercise {e!r}")
    for s, members in grp.items():
        if s not in subs:
            raise DataError(f"group for unknown submission {s!r}")
        if not members or any(not g for g in members):
            raise DataError(f"group of submission {s!r} has an empty member id")
        if len(members) > max_group_size:
            raise DataError(
                f"group of submission {s!r} has {len(members)} members "
                f"(maximum {max_group_size})"
            )
    for g, v in exams.items():
        if not g:
            raise DataError("empty grader id in exam grades")
        if v < 0:
            raise DataError(f"negative exam grade for grader {g!r}")

    canon_grades = []
    seen = set()
    for raw in grades:
        rec = CardinalGrade(
            str(raw.exercise), str(raw.submission), str(raw.grader),
            _as_role(raw.role), float(raw.value),
        )
        where = f"grade ({rec.exercise}, {rec.submission}, {rec.grader}, {rec.role.value})"
        if not rec.grader:
            raise DataError(f"empty grader id in {where}")
        if rec.exercise not in ex:
            raise DataError(f"{where}: unknown exercise")
        if subs.get(rec.submission) != rec.exercise:
            raise DataError(f"{where}: submission does not belong to this exercise")
        key = (rec.exercise, rec.submission, rec.grader, rec.role)
        if key in seen:
            raise DataError(f"duplicate {where}")
        seen.add(key)
        members = grp.get(rec.submission, frozenset())
        if rec.role is GradeRole.SELF and rec.grader not in members:
            raise DataError(f"{where}: self grade by a non-member of the group")
        if rec.role is GradeRole.PEER and rec.grader in members:
            raise DataError(f"{where}: peer grade by a member of the group")
        canon_grades.append(rec)
    canon_grades.sort(key=CardinalGrade.sort_key)

    canon_ballots = []
    seen_ballots = set()
    for raw in ballots:
        rec = make_ballot(raw.exercise, raw.grader, raw.ranking)
        where = f"ballot ({rec.exercise}, {rec.grader})"
        if not rec.grader:
            raise DataError(f"empty grader id in {where}")
        if (rec.exercise, rec.grader) in seen_ballots:
            raise DataError(f"duplicate {where}")
        seen_ballots.add((rec.exercise, rec.grader))
        if rec.exercise not in ex:
            raise DataError(f"{where}: unknown exercise")
        ranked = rec.submissions()
        if len(ranked) < 2:
            raise DataError(f"{where}: fewer than 2 submissions ranked")
        if len(set(ranked)) != len(ranked):
            raise DataError(f"{where}: repeated submission")
        for s in ranked:
            if subs.get(s) != rec.exercise:
                raise DataError(f"{where}: submission {s!r} not in this exercise")
            if rec.grader in grp.get(s, frozenset()):
                raise DataError(f"{where}: grader is a member of ranked submission {s!r}")
        canon_ballots.append(rec)
    canon_ballots.sort(key=OrdinalBallot.sort_key)

    return Dataset(ex, subs, grp, tuple(canon_grades), tuple(canon_ballots), exams)


def with_exam_grades(dataset: Dataset, exam_grades: Mapping) -> Dataset:
    """New dataset with the exam grade map replaced."""
    return make_dataset(
        dataset.exercises, dataset.submissions, dataset.groups,
        dataset.grades, dataset.ballots, exam_grades,
        max_group_size=max((len(m) for m in dataset.groups.values()), default=3),
    )


# ---------------------------------------------------------------------------
# normalization

def normalize_scores(dataset: Dataset, mode: str = "unit-interval") -> Dataset:
    """Rescale grades per exercise.

    ``unit-interval`` divides by the exercise's declared maximum (full credit
    maps to exactly 1.0) and sets the stored maximum to 1, which makes the
    operation idempotent.  ``z-score`` shifts/scales each exercise's grades to
    sample mean 0 and variance 1 (ddof=1).
    """
    if mode not in ("unit-interval", "z-score"):
        raise ValueError(f"unknown normalization mode {mode!r}")

    by_exercise: dict[str, list[CardinalGrade]] = {}
    for g in dataset.grades:
        by_exercise.setdefault(g.exercise, []).append(g)

    new_grades = []
    new_max = dict(dataset.exercises)
    if mode == "unit-interval":
        for e, maximum in dataset.exercises.items():
            if maximum <= 0:
                raise InvalidExerciseError(f"exercise {e!r} has non-positive maximum {maximum}")
            for g in by_exercise.get(e, []):
                if g.value < 0 or g.value > maximum:
                    raise DataError(
                        f"grade ({g.exercise}, {g.submission}, {g.grader}, {g.role.value}) "
                        f"value {g.value} outside [0, {maximum}]"
                    )
                new_grades.append(
                    CardinalGrade(g.exercise, g.submission, g.grader, g.role, g.value / maximum)
                )
            new_max[e] = 1.0
    else:
        for e in dataset.exercises:
            recs = by_exercise.get(e, [])
            if len(recs) < 2:
                raise DegenerateExerciseError(
                    f"exercise {e!r} has {len(recs)} grades; z-score needs at least 2"
                )
            vals = [g.value for g in recs]
            mean = sum(vals) / len(vals)
            var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
            if var == 0:
                raise DegenerateExerciseError(f"exercise {e!r} has zero grade variance")
            sd = var ** 0.5
            for g in recs:
                new_grades.append(
                    CardinalGrade(g.exercise, g.submission, g.grader, g.role, (g.value - mean) / sd)
                )

    return make_dataset(
        new_max, dataset.submissions, dataset.groups, new_grades,
        dataset.ballots, dataset.exam_grades,
        max_group_size=max((len(m) for m in dataset.groups.values()), default=3),
    )


# ---------------------------------------------------------------------------
# induced ballots

def induce_ballots(dataset: Dataset, roles=(GradeRole.PEER,)) -> list[OrdinalBallot]:
    """Turn cardinal grades into per-(grader, exercise) ballots.

    Equal values form one tie-group; tie-groups are ordered worst to best.
    Graders with fewer than 2 graded submissions on an exercise yield no
    ballot.  Note that when ``roles`` includes self grades, a ballot may rank
    the grader's own submission; such ballots are meant to be fed directly to
    the ordinal fitters, not stored in a dataset.
    """
    roles = as_roles(roles)
    per: dict[tuple[str, str], list[CardinalGrade]] = {}
    for g in dataset.grades:
        if g.role in roles:
            per.setdefault((g.exercise, g.grader), []).append(g)

    ballots = []
    for (exercise, grader) in sorted(per):
        recs = per[(exercise, grader)]
        if len(recs) < 2:
            continue
        by_value: dict[float, list[str]] = {}
        for g in recs:
            by_value.setdefault(g.value, []).append(g.submission)
        ranking = [sorted(by_value[v]) for v in sorted(by_value)]
        ballots.append(make_ballot(exercise, grader, ranking))
    return ballots


def ta_truth(dataset: Dataset) -> TruthSet:
    """TruthSet from TA grades (mean when a submission has several TA grades)."""
    acc: dict[tuple[str, str], list[float]] = {}
    for g in dataset.grades:
        if g.role is GradeRole.TA:
            acc.setdefault((g.exercise, g.submission), []).append(g.value)
    if not acc:
        raise DataError("dataset has no TA grades to use as ground truth")
    scores = {key: sum(vs) / len(vs) for key, vs in sorted(acc.items())}
    return TruthSet(scores, provenance="ta")


# ---------------------------------------------------------------------------
# serialization

def _fmt(value: float) -> str:
    return repr(float(value))


def _referenced_submissions(dataset: Dataset) -> set[str]:
    refs = {g.submission for g in dataset.grades}
    for b in dataset.ballots:
        refs.update(b.submissions())
    return refs


def save_dataset(dataset: Dataset, path: str, format: str = "csv") -> None:
    """Write a dataset deterministically; two saves yield identical bytes.

    CSV mode writes one file per record kind into the directory ``path``
    (files for empty record kinds are omitted); JSON mode writes a single
    document to the file ``path``.  Submissions are serialized through the
    records that reference them, so a submission that appears in no grade and
    no ballot cannot be represented and raises :class:`DataError`.
    """
    orphans = set(dataset.submissions) - _referenced_submissions(dataset)
    if orphans:
        raise DataError(
            "submissions not serializable (no grade or ballot references them): "
            + ", ".join(sorted(orphans))
        )

    if format == "csv":
        os.makedirs(path, exist_ok=True)
        _write_csv(
            os.path.join(path, "exercises.csv"),
            ["exercise", "max_points"],
            [[e, _fmt(m)] for e, m in sorted(dataset.exercises.items())],
        )
        if dataset.groups:
            _write_csv(
                os.path.join(path, "groups.csv"),
                ["submission", "grader"],
                [
                    [s, g]
                    for s in sorted(dataset.groups)
                    for g in sorted(dataset.groups[s])
                ],
            )
        if dataset.grades:
            _write_csv(
                os.path.join(path, "grades.csv"),
                ["exercise", "submission", "grader", "role", "value"],
                [
                    [g.exercise, g.submission, g.grader, g.role.value, _fmt(g.value)]
                    for g in dataset.grades
                ],
            )
        if dataset.ballots:
            _write_csv(
                os.path.join(path, "ballots.csv"),
                ["exercise", "grader", "position", "submission"],
                [
                    [b.exercise, b.grader, str(pos), s]
                    for b in dataset.ballots
                    for pos, group in enumerate(b.ranking)
                    for s in group
                ],
            )
        if dataset.exam_grades:
            _write_csv(
                os.path.join(path, "exams.csv"),
                ["grader", "exam_grade"],
                [[g, _fmt(v)] for g, v in sorted(dataset.exam_grades.items())],
            )
    elif format == "json":
        doc = {
            "exercises": [
                {"exercise": e, "max_points": m} for e, m in sorted(dataset.exercises.items())
            ],
            "groups": [
                {"submission": s, "grader": g}
                for s in sorted(dataset.groups)
                for g in sorted(dataset.groups[s])
            ],
            "grades": [
                {
                    "exercise": g.exercise,
                    "submission": g.submission,
                    "grader": g.grader,
                    "role": g.role.value,
                    "value": g.value,
                }
                for g in dataset.grades
            ],
            "ballots": [
                {"exercise": b.exercise, "grader": b.grader, "ranking": [list(t) for t in b.ranking]}
                for b in dataset.ballots
            ],
            "exams": [
                {"grader": g, "exam_grade": v} for g, v in sorted(dataset.exam_grades.items())
            ],
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {format!r}")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path, columns):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        if header != list(columns):
            raise DataError(f"{path}: expected header {','.join(columns)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise DataError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
            yield lineno, row


def _parse_float(path, lineno, text, what):
    try:
        return float(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: invalid {what} {text!r}")


def load_dataset(path: str, format: str = "csv", max_group_size: int = 3) -> Dataset:
    """Load and validate a dataset saved by :func:`save_dataset`.

    CSV mode reads the record-kind files present in the directory ``path``
    (``exercises.csv`` is required); JSON mode reads one document.  All
    Dataset invariants are checked; violations raise :class:`DataError` with
    the file/row or record that caused them.
    """
    if format == "csv":
        ex_path = os.path.join(path, "exercises.csv")
        if not os.path.exists(ex_path):
            raise DataError(f"{ex_path}: missing required file")
        exercises = {}
        for lineno, (e, m) in _read_csv(ex_path, ["exercise", "max_points"]):
            if e in exercises:
                raise DataError(f"{ex_path}:{lineno}: duplicate exercise {e!r}")
            exercises[e] = _parse_float(ex_path, lineno, m, "max_points")

        groups: dict[str, set[str]] = {}
        gr_path = os.path.join(path, "groups.csv")
        if os.path.exists(gr_path):
            for lineno, (s, g) in _read_csv(gr_path, ["submission", "grader"]):
                groups.setdefault(s, set()).add(g)

        grades = []
        g_path = os.path.join(path, "grades.csv")
        if os.path.exists(g_path):
            for lineno, (e, s, g, role, v) in _read_csv(
                g_path, ["exercise", "submission", "grader", "role", "value"]
            ):
                if role not in ("self", "peer", "ta"):
                    raise DataError(f"{g_path}:{lineno}: invalid role {role!r}")
                grades.append(
                    CardinalGrade(e, s, g, GradeRole(role), _parse_float(g_path, lineno, v, "value"))
                )

        raw_ballots: dict[tuple[str, str], dict[int, list[str]]] = {}
        b_path = os.path.join(path, "ballots.csv")
        if os.path.exists(b_path):
            for lineno, (e, g, pos, s) in _read_csv(
                b_path, ["exercise", "grader", "position", "submission"]
            ):
                try:
                    position = int(pos)
                except ValueError:
                    raise DataError(f"{b_path}:{lineno}: invalid position {pos!r}")
                raw_ballots.setdefault((e, g), {}).setdefault(position, []).append(s)
        ballots = []
        for (e, g), by_pos in raw_ballots.items():
            if sorted(by_pos) != list(range(len(by_pos))):
                raise DataError(f"ballot ({e}, {g}): positions are not contiguous from 0")
            ballots.append(make_ballot(e, g, [by_pos[p] for p in sorted(by_pos)]))

        exams = {}
        x_path = os.path.join(path, "exams.csv")
        if os.path.exists(x_path):
            for lineno, (g, v) in _read_csv(x_path, ["grader", "exam_grade"]):
                if g in exams:
                    raise DataError(f"{x_path}:{lineno}: duplicate exam grade for {g!r}")
                exams[g] = _parse_float(x_path, lineno, v, "exam_grade")
    elif format == "json":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as err:
                raise DataError(f"{path}: invalid JSON ({err})")
        for key in ("exercises", "groups", "grades", "ballots", "exams"):
            if key not in doc or not isinstance(doc[key], list):
                raise DataError(f"{path}: missing or non-array field {key!r}")
        try:
            exercises = {str(r["exercise"]): float(r["max_points"]) for r in doc["exercises"]}
            groups = {}
            for r in doc["groups"]:
                groups.setdefault(str(r["submission"]), set()).add(str(r["grader"]))
            grades = [
                CardinalGrade(
                    str(r["exercise"]), str(r["submission"]), str(r["grader"]),
                    _as_role(r["role"]), float(r["value"]),
                )
                for r in doc["grades"]
            ]
            ballots = [make_ballot(r["exercise"], r["grader"], r["ranking"]) for r in doc["ballots"]]
            exams = {str(r["grader"]): float(r["exam_grade"]) for r in doc["exams"]}
        except (KeyError, TypeError, ValueError) as err:
            raise DataError(f"{path}: malformed record ({err})")
    else:
        raise ValueError(f"unknown format {format!r}")

    submissions = {}
    for g in grades:
        submissions[g.submission] = g.exercise
    for b in ballots:
        for s in b.submissions():
            submissions.setdefault(s, b.exercise)
    for s in groups:
        if s not in submissions:
            raise DataError(
                f"group member list for submission {s!r}, but no grade or ballot "
                "pins it to an exercise"
            )

    return make_dataset(
        exercises, submissions, groups, grades, ballots, exams,
        max_group_size=max_group_size,
    )


def save_truth(truth: TruthSet, path: str) -> None:
    """Write a TruthSet as truth.csv (exercise,submission,true_score)."""
    _write_csv(
        path,
        ["exercise", "submission", "true_score"],
        [[e, s, _fmt(v)] for (e, s), v in sorted(truth.scores.items())],
    )


def load_truth(path: str, provenance: str = "ta") -> TruthSet:
    """Read a truth.csv file."""
    scores = {}
    for lineno, (e, s, v) in _read_csv(path, ["exercise", "submission", "true_score"]):
        key = (e, s)
        if key in scores:
            raise DataError(f"{path}:{lineno}: duplicate truth for ({e}, {s})")
        scores[key] = _parse_float(path, lineno, v, "true_score")
    return TruthSet(dict(sorted(scores.items())), provenance=provenance)

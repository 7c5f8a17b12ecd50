"""Shared fixtures and hypothesis strategies."""

import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from peergrade.data import CardinalGrade, GradeRole, make_ballot, make_dataset


def grade(exercise, submission, grader, role, value):
    return CardinalGrade(exercise, submission, grader, GradeRole(role), value)


@pytest.fixture
def tiny_dataset():
    """One exercise, two submissions, two peer graders plus a TA."""
    return make_dataset(
        exercises={"e0": 10.0},
        submissions={"s0": "e0", "s1": "e0"},
        groups={"s0": {"alice"}, "s1": {"bob"}},
        grades=[
            grade("e0", "s0", "bob", "peer", 5.0),
            grade("e0", "s1", "alice", "peer", 7.0),
            grade("e0", "s0", "alice", "self", 10.0),
            grade("e0", "s1", "bob", "self", 9.0),
            grade("e0", "s0", "ta1", "ta", 6.0),
            grade("e0", "s1", "ta1", "ta", 8.0),
        ],
    )


def ad_shaped_dataset(n_exercises=2, n_groups=6, peers_per_submission=2, seed=0,
                      with_exams=True, with_ballots=False):
    """Small dataset shaped like a real course: groups, self/peer/TA grades.

    All values are drawn from a seeded RNG, so the result is deterministic.
    """
    rng = np.random.default_rng(seed)
    students = [f"stu{i}" for i in range(2 * n_groups)]
    groups_of = [students[2 * i: 2 * i + 2] for i in range(n_groups)]

    exercises = {}
    submissions = {}
    groups = {}
    grades = []
    ballots = []
    for e in range(n_exercises):
        ex = f"ex{e}"
        exercises[ex] = 10.0
        subs = []
        for gi in range(n_groups):
            sub = f"{ex}_sub{gi}"
            subs.append(sub)
            submissions[sub] = ex
            groups[sub] = set(groups_of[gi])
            truth = rng.uniform(2, 10)
            grades.append(grade(ex, sub, "ta0", "ta", round(truth, 2)))
            for member in groups_of[gi]:
                grades.append(grade(ex, sub, member, "self",
                                    round(min(10.0, truth + rng.uniform(0, 2)), 2)))
        # each student peer-grades a rotation of other groups' submissions
        for si, student in enumerate(students):
            own = si // 2
            targets = [(own + 1 + j) % n_groups for j in range(peers_per_submission)]
            for t in targets:
                grades.append(grade(ex, subs[t], student, "peer",
                                    round(float(np.clip(rng.normal(6, 2), 0, 10)), 2)))
        if with_ballots:
            ranked = subs[:3]
            ballots.append(make_ballot(ex, "ext0", [[s] for s in ranked]))

    exam_grades = (
        {s: round(rng.uniform(20, 100), 1) for s in students} if with_exams else {}
    )
    return make_dataset(exercises, submissions, groups, grades, ballots, exam_grades)


@pytest.fixture
def course_dataset():
    return ad_shaped_dataset()


# ---------------------------------------------------------------------------
# hypothesis strategy for small valid (and serializable) datasets

_safe_values = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, width=64)


@st.composite
def datasets(draw):
    n_ex = draw(st.integers(1, 3))
    graders = [f"g{i}" for i in range(draw(st.integers(2, 5)))]
    exercises = {f"e{i}": draw(st.sampled_from([1.0, 10.0, 25.0])) for i in range(n_ex)}

    submissions = {}
    groups = {}
    grades = []
    ballots = []
    for e in exercises:
        n_subs = draw(st.integers(1, 3))
        for si in range(n_subs):
            sub = f"{e}_s{si}"
            submissions[sub] = e
            members = draw(
                st.lists(st.sampled_from(graders), min_size=1, max_size=2, unique=True)
            )
            groups[sub] = set(members)
            # every submission gets a TA grade so it is serializable
            grades.append(grade(e, sub, "ta", "ta", draw(_safe_values)))
            if draw(st.booleans()):
                grades.append(grade(e, sub, members[0], "self", draw(_safe_values)))
            outsiders = [g for g in graders if g not in members]
            for peer in draw(
                st.lists(st.sampled_from(outsiders), max_size=2, unique=True)
            ) if outsiders else []:
                grades.append(grade(e, sub, peer, "peer", draw(_safe_values)))
        subs_of_e = [s for s, ex in submissions.items() if ex == e]
        if len(subs_of_e) >= 2 and draw(st.booleans()):
            ballots.append(make_ballot(e, "ext", [[s] for s in subs_of_e]))

    exam_grades = {}
    for g in graders:
        if draw(st.booleans()):
            exam_grades[g] = draw(st.floats(0, 150, allow_nan=False))
    return make_dataset(exercises, submissions, groups, grades, ballots, exam_grades)


# ---------------------------------------------------------------------------
# independent metric oracles

def kendall_oracle(est, truth):
    """Direct pair enumeration of the 0 / 0.5 / 1 tie rule."""
    keys = sorted(est)
    total = 0.0
    n_pairs = 0
    for a, b in itertools.combinations(keys, 2):
        dx = est[a] - est[b]
        dy = truth[a] - truth[b]
        n_pairs += 1
        if dx == 0 and dy == 0:
            continue
        if dx == 0 or dy == 0:
            total += 0.5
        elif (dx > 0) != (dy > 0):
            total += 1.0
    return total / n_pairs

"""Data model, normalization, serialization and induced-ballot tests."""

import os

import pytest
from hypothesis import given, settings

from peergrade.data import (
    GradeRole,
    induce_ballots,
    load_dataset,
    load_truth,
    make_ballot,
    make_dataset,
    normalize_scores,
    save_dataset,
    save_truth,
    ta_truth,
    with_exam_grades,
)
from peergrade.errors import DataError, DegenerateExerciseError, InvalidExerciseError
from peergrade.synth import GeneratorConfig, generate
from tests.conftest import datasets, grade


def _values(dataset, exercise):
    return sorted(g.value for g in dataset.grades_of(exercise=exercise))


class TestNormalize:
    def test_unit_interval_divides_by_maximum(self):
        ds = make_dataset(
            {"e0": 10.0},
            {"s0": "e0", "s1": "e0", "s2": "e0"},
            grades=[
                grade("e0", "s0", "g1", "ta", 5.0),
                grade("e0", "s1", "g1", "ta", 7.0),
                grade("e0", "s2", "g1", "ta", 10.0),
            ],
        )
        out = normalize_scores(ds)
        assert _values(out, "e0") == [0.5, 0.7, 1.0]
        assert out.exercises["e0"] == 1.0

    def test_already_normalized_is_unchanged(self):
        ds = make_dataset(
            {"e0": 1.0},
            {"s0": "e0", "s1": "e0"},
            grades=[
                grade("e0", "s0", "g1", "ta", 0.5),
                grade("e0", "s1", "g1", "ta", 1.0),
            ],
        )
        assert normalize_scores(ds) == ds

    def test_idempotent(self):
        ds = make_dataset(
            {"e0": 20.0},
            {"s0": "e0"},
            grades=[grade("e0", "s0", "g1", "ta", 13.0)],
        )
        once = normalize_scores(ds)
        assert normalize_scores(once) == once

    def test_zscore_hand_computed(self):
        # mean 0.7, sample sd 0.2 -> {-1, 0, 1}
        ds = make_dataset(
            {"e0": 1.0},
            {"s0": "e0", "s1": "e0", "s2": "e0"},
            grades=[
                grade("e0", "s0", "g1", "ta", 0.5),
                grade("e0", "s1", "g1", "ta", 0.7),
                grade("e0", "s2", "g1", "ta", 0.9),
            ],
        )
        out = normalize_scores(ds, "z-score")
        assert _values(out, "e0") == pytest.approx([-1.0, 0.0, 1.0])

    def test_zero_maximum_rejected(self):
        ds = make_dataset({"e0": 0.0}, {"s0": "e0"}, grades=[grade("e0", "s0", "g", "ta", 0.0)])
        with pytest.raises(InvalidExerciseError):
            normalize_scores(ds)

    def test_zero_variance_rejected_in_zscore(self):
        ds = make_dataset(
            {"e0": 1.0},
            {"s0": "e0", "s1": "e0"},
            grades=[
                grade("e0", "s0", "g1", "ta", 0.5),
                grade("e0", "s1", "g1", "ta", 0.5),
            ],
        )
        with pytest.raises(DegenerateExerciseError):
            normalize_scores(ds, "z-score")

    def test_grade_above_maximum_rejected(self):
        ds = make_dataset({"e0": 10.0}, {"s0": "e0"}, grades=[grade("e0", "s0", "g", "ta", 11.0)])
        with pytest.raises(DataError):
            normalize_scores(ds)

    @given(datasets())
    @settings(max_examples=40, deadline=None)
    def test_unit_mode_preserves_order_and_unit_range(self, ds):
        out = normalize_scores(ds)
        for e in ds.exercises:
            before = [g.value for g in ds.grades_of(exercise=e)]
            after = [g.value for g in out.grades_of(exercise=e)]
            assert all(0.0 <= v <= 1.0 for v in after)
            # order preserved: no inversions, and ties stay ties (strict order
            # may collapse to equality only through float rounding)
            for i in range(len(before)):
                for j in range(len(before)):
                    if before[i] < before[j]:
                        assert after[i] <= after[j]
                    elif before[i] == before[j]:
                        assert after[i] == after[j]


class TestValidation:
    def test_peer_grade_by_member_names_record(self):
        with pytest.raises(DataError, match="peer grade by a member"):
            make_dataset(
                {"e0": 1.0},
                {"s0": "e0"},
                groups={"s0": {"alice"}},
                grades=[grade("e0", "s0", "alice", "peer", 0.4)],
            )

    def test_self_grade_by_non_member(self):
        with pytest.raises(DataError, match="self grade by a non-member"):
            make_dataset(
                {"e0": 1.0},
                {"s0": "e0"},
                groups={"s0": {"alice"}},
                grades=[grade("e0", "s0", "bob", "self", 0.4)],
            )

    def test_duplicate_grade_tuple(self):
        with pytest.raises(DataError, match="duplicate"):
            make_dataset(
                {"e0": 1.0},
                {"s0": "e0"},
                grades=[
                    grade("e0", "s0", "g", "ta", 0.4),
                    grade("e0", "s0", "g", "ta", 0.6),
                ],
            )

    def test_dangling_exercise(self):
        with pytest.raises(DataError, match="unknown exercise"):
            make_dataset({"e0": 1.0}, {"s0": "e1"})

    def test_submission_in_wrong_exercise(self):
        with pytest.raises(DataError, match="does not belong"):
            make_dataset(
                {"e0": 1.0, "e1": 1.0},
                {"s0": "e0"},
                grades=[grade("e1", "s0", "g", "ta", 0.4)],
            )

    def test_group_size_cap(self):
        with pytest.raises(DataError, match="maximum 3"):
            make_dataset(
                {"e0": 1.0},
                {"s0": "e0"},
                groups={"s0": {"a", "b", "c", "d"}},
                grades=[grade("e0", "s0", "x", "ta", 0.5)],
            )

    def test_negative_exam_grade(self):
        with pytest.raises(DataError, match="negative exam grade"):
            make_dataset({"e0": 1.0}, {}, exam_grades={"g": -1.0})

    def test_ballot_by_group_member_rejected(self):
        with pytest.raises(DataError, match="member of ranked submission"):
            make_dataset(
                {"e0": 1.0},
                {"s0": "e0", "s1": "e0"},
                groups={"s0": {"alice"}},
                grades=[
                    grade("e0", "s0", "ta", "ta", 0.1),
                    grade("e0", "s1", "ta", "ta", 0.2),
                ],
                ballots=[make_ballot("e0", "alice", [["s0"], ["s1"]])],
            )

    def test_duplicate_ballot_rejected(self):
        with pytest.raises(DataError, match="duplicate ballot"):
            make_dataset(
                {"e0": 1.0},
                {"s0": "e0", "s1": "e0"},
                grades=[grade("e0", "s0", "ta", "ta", 0.1),
                        grade("e0", "s1", "ta", "ta", 0.2)],
                ballots=[make_ballot("e0", "ext", [["s0"], ["s1"]]),
                         make_ballot("e0", "ext", [["s1"], ["s0"]])],
            )

    def test_ballot_needs_two_submissions(self):
        with pytest.raises(DataError, match="fewer than 2"):
            make_dataset(
                {"e0": 1.0},
                {"s0": "e0"},
                grades=[grade("e0", "s0", "ta", "ta", 0.1)],
                ballots=[make_ballot("e0", "ext", [["s0"]])],
            )


class TestSerialization:
    def test_minimal_csv_roundtrip(self, tmp_path):
        d = tmp_path / "data"
        d.mkdir()
        (d / "exercises.csv").write_text("exercise,max_points\ne0,10.0\n")
        (d / "grades.csv").write_text(
            "exercise,submission,grader,role,value\n"
            "e0,s0,g1,ta,5.0\n"
            "e0,s1,g1,ta,7.0\n"
        )
        ds = load_dataset(str(d))
        assert len(ds.submissions) == 2
        assert ds.exercises == {"e0": 10.0}

    def test_peer_by_member_load_error_names_record(self, tmp_path):
        d = tmp_path / "data"
        d.mkdir()
        (d / "exercises.csv").write_text("exercise,max_points\ne0,1.0\n")
        (d / "groups.csv").write_text("submission,grader\ns0,alice\n")
        (d / "grades.csv").write_text(
            "exercise,submission,grader,role,value\ne0,s0,alice,peer,0.4\n"
        )
        with pytest.raises(DataError, match=r"\(e0, s0, alice, peer\)"):
            load_dataset(str(d))

    def test_bad_role_reports_row(self, tmp_path):
        d = tmp_path / "data"
        d.mkdir()
        (d / "exercises.csv").write_text("exercise,max_points\ne0,1.0\n")
        (d / "grades.csv").write_text(
            "exercise,submission,grader,role,value\ne0,s0,g,judge,0.4\n"
        )
        with pytest.raises(DataError, match="grades.csv:2"):
            load_dataset(str(d))

    def test_missing_exercises_file(self, tmp_path):
        with pytest.raises(DataError, match="missing required file"):
            load_dataset(str(tmp_path))

    def test_wrong_header(self, tmp_path):
        d = tmp_path / "data"
        d.mkdir()
        (d / "exercises.csv").write_text("exercise,points\ne0,1.0\n")
        with pytest.raises(DataError, match="expected header"):
            load_dataset(str(d))

    @given(ds=datasets())
    @settings(max_examples=40, deadline=None)
    def test_csv_roundtrip_equality(self, tmp_path_factory, ds):
        out = str(tmp_path_factory.mktemp("rt"))
        save_dataset(ds, out, "csv")
        assert load_dataset(out, "csv") == ds

    @given(ds=datasets())
    @settings(max_examples=40, deadline=None)
    def test_json_roundtrip_equality(self, tmp_path_factory, ds):
        out = os.path.join(str(tmp_path_factory.mktemp("rt")), "d.json")
        save_dataset(ds, out, "json")
        assert load_dataset(out, "json") == ds

    def test_two_saves_identical_bytes(self, course_dataset, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        save_dataset(course_dataset, str(a), "csv")
        save_dataset(course_dataset, str(b), "csv")
        for name in os.listdir(a):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_ad_shaped_counts_preserved(self, tmp_path):
        # 79 single-member groups x 19 exercises, 2 peer grades per submission
        config = GeneratorConfig(
            n_submissions=79, n_graders=79, n_exercises=19,
            grades_per_submission=2, seed=11,
        )
        ds, truth = generate(config)
        save_dataset(ds, str(tmp_path / "ad"), "csv")
        back = load_dataset(str(tmp_path / "ad"))
        assert len(back.submissions) == 79 * 19
        assert len(back.exercises) == 19
        assert len(back.grades) == 79 * 19 * 2
        assert len(back.groups) == 79 * 19
        assert back == ds
        save_truth(truth, str(tmp_path / "truth.csv"))
        assert load_truth(str(tmp_path / "truth.csv"), "synthetic") == truth

    def test_unreferenced_submission_not_serializable(self, tmp_path):
        ds = make_dataset({"e0": 1.0}, {"s0": "e0"})
        with pytest.raises(DataError, match="no grade or ballot"):
            save_dataset(ds, str(tmp_path / "x"), "csv")


class TestInduceBallots:
    def test_two_item_order(self):
        ds = make_dataset(
            {"e0": 1.0},
            {"A": "e0", "B": "e0"},
            grades=[
                grade("e0", "A", "g1", "peer", 0.4),
                grade("e0", "B", "g1", "peer", 0.9),
            ],
        )
        (ballot,) = induce_ballots(ds)
        assert ballot.ranking == (("A",), ("B",))

    def test_tie_group(self):
        ds = make_dataset(
            {"e0": 1.0},
            {"A": "e0", "B": "e0", "C": "e0"},
            grades=[
                grade("e0", "A", "g1", "peer", 0.5),
                grade("e0", "B", "g1", "peer", 0.5),
                grade("e0", "C", "g1", "peer", 1.0),
            ],
        )
        (ballot,) = induce_ballots(ds)
        assert ballot.ranking == (("A", "B"), ("C",))

    def test_single_grade_yields_no_ballot(self):
        ds = make_dataset(
            {"e0": 1.0},
            {"A": "e0"},
            grades=[grade("e0", "A", "g1", "peer", 0.4)],
        )
        assert induce_ballots(ds) == []

    @given(datasets())
    @settings(max_examples=40, deadline=None)
    def test_tie_groups_strictly_increasing(self, ds):
        value_of = {
            (g.exercise, g.grader, g.submission): g.value
            for g in ds.grades
            if g.role is GradeRole.TA
        }
        for ballot in induce_ballots(ds, (GradeRole.TA,)):
            group_values = []
            for group in ballot.ranking:
                vals = {value_of[(ballot.exercise, ballot.grader, s)] for s in group}
                assert len(vals) == 1  # ties only within equal values
                group_values.append(vals.pop())
            assert group_values == sorted(group_values)
            assert len(set(group_values)) == len(group_values)


class TestHelpers:
    def test_ta_truth_means_multiple_tas(self, tiny_dataset):
        truth = ta_truth(tiny_dataset)
        assert truth.provenance == "ta"
        assert truth.scores[("e0", "s0")] == 6.0

    def test_with_exam_grades(self, tiny_dataset):
        out = with_exam_grades(tiny_dataset, {"alice": 90.0})
        assert out.exam_grades == {"alice": 90.0}
        assert out.grades == tiny_dataset.grades

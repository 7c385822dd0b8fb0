import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptfuse import evaluate
from adaptfuse.pipeline import DedupDecision

TOY = np.array([
    [0.9, 0.1, 0.2],
    [0.8, 0.5, 0.1],
    [0.3, 0.9, 0.4],
])  # mate ranks 1, 2, 2


def decision(pid, stages, rank1=None):
    return DedupDecision(pid, rank1 or pid, stages, False, np.zeros(1))


class TestCmc:
    def test_toy(self):
        assert list(evaluate.mate_ranks(TOY)) == [1, 2, 2]
        curve = evaluate.cmc(TOY)
        assert [y for _, y in curve.points] == pytest.approx([1 / 3, 1, 1])
        assert evaluate.rank1_accuracy(TOY) == pytest.approx(1 / 3)

    def test_perfect(self):
        s = np.eye(4) + 0.1
        assert all(y == 1.0 for _, y in evaluate.cmc(s).points)

    def test_all_buried(self):
        assert evaluate.rank1_accuracy(1 - np.eye(5)) == 0.0

    def test_ties_are_pessimistic(self):
        assert evaluate.mate_ranks(np.ones((2, 2))).tolist() == [2, 2]

    def test_explicit_truth(self):
        assert evaluate.rank1_accuracy(TOY, truth=[0, 0, 1]) == 1.0

    def test_open_set_rejected(self):
        with pytest.raises(ValueError):
            evaluate.mate_ranks(TOY, truth=[0, 1, 3])

    @given(st.integers(0, 1000))
    def test_monotone_closing_at_one(self, seed):
        s = np.random.default_rng(seed).random((6, 6))
        ys = [y for _, y in evaluate.cmc(s).points]
        assert np.all(np.diff(ys) >= 0) and ys[-1] == 1.0

    def test_curve_file(self, tmp_path):
        path = tmp_path / "c.csv"
        evaluate.cmc(TOY, max_rank=2).write(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "rank,identification_rate"
        assert lines[2] == "2,1"


class TestVerification:
    def test_example(self):
        r = evaluate.verification_rates([0.9, 0.8], [0.1, 0.85])
        assert r.eer == pytest.approx(0.25)
        assert 0.85 <= r.eer_threshold <= 0.9

    def test_disjoint(self):
        assert evaluate.verification_rates([5, 6, 7], [1, 2, 3]).eer == 0.0

    def test_identical(self):
        x = np.random.default_rng(0).random(200)
        assert evaluate.verification_rates(x, x).eer == pytest.approx(0.5)

    @given(st.integers(0, 1000))
    def test_rates_monotone_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        r = evaluate.verification_rates(rng.normal(1, 1, 30), rng.normal(0, 1, 40))
        assert np.all(np.diff(r.far) <= 0) and np.all(np.diff(r.frr) >= 0)
        assert 0 <= r.eer <= 1
        tar, trr = 1 - r.frr, 1 - r.far
        np.testing.assert_allclose(r.far + trr, 1)
        np.testing.assert_allclose(r.frr + tar, 1)

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate.verification_rates([], [1.0])

    def test_genuine_impostor_split(self):
        g, i = evaluate.genuine_impostor(TOY)
        assert sorted(g) == [0.4, 0.5, 0.9]
        assert len(i) == 6

    def test_table_file(self, tmp_path):
        r = evaluate.verification_rates([0.9, 0.8], [0.1, 0.85])
        path = tmp_path / "det.csv"
        r.write_table(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "threshold,far,frr" and len(lines) == 1 + len(r.thresholds)


class TestEffort:
    def test_mixed(self):
        rows = evaluate.effort_report([decision(str(i), s) for i, s in enumerate([1, 1, 2, 3])],
                                      ["fp", "face", "bio"])
        assert rows == [("face", 50.0), ("bio", 25.0)]

    def test_extremes(self):
        names = ["a", "b", "c"]
        early = evaluate.effort_report([decision("p", 1)] * 3, names)
        full = evaluate.effort_report([decision("p", 3)] * 3, names)
        assert [p for _, p in early] == [0, 0] and [p for _, p in full] == [100, 100]

    def test_rank1_row_and_file(self, tmp_path):
        ds = [decision("a", 1), decision("b", 2, rank1="x")]
        rows = evaluate.effort_report(ds, ["s1", "s2"], truth={"a": "a", "b": "b"})
        assert rows[-1] == ("rank1", 50.0)
        path = tmp_path / "e.csv"
        evaluate.write_effort_report(rows, path)
        assert path.read_text() == "stage,percent\ns2,50\nrank1,50\n"

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate.effort_report([], ["a"])


class TestPeet:
    def test_limits_and_monotonicity(self):
        rng = np.random.default_rng(0)
        stat = rng.random(500) ** 4
        correct = rng.random(500) < 0.9
        grid = evaluate.decade_grid()
        pts = evaluate.peet_points(stat, correct, grid, lambda s, t: s <= t)
        assert [t for t, _, _ in pts] == grid
        efforts = [e for _, e, _ in pts]
        errors = [r for _, _, r in pts]
        # grid runs from large to small thresholds
        assert np.all(np.diff(efforts) >= 0) and np.all(np.diff(errors) <= 0)
        assert pts[0][1] == 0 and pts[0][2] == pytest.approx(100 * np.mean(~correct))

    def test_zero_threshold(self):
        pts = evaluate.peet_points(np.full(4, 0.3), [True] * 4, [0.0], lambda s, t: s <= t)
        assert pts == [(0.0, 100.0, 0.0)]

    def test_min_effort(self):
        assert evaluate.min_effort_at_zero_error([(1, 10.0, 1.0), (0.1, 30.0, 0.0), (0.01, 50.0, 0.0)]) == 30.0
        assert evaluate.min_effort_at_zero_error([(1, 10.0, 1.0)]) == 100.0

    def test_grid(self):
        g = evaluate.decade_grid()
        assert len(g) == 13 and g[0] == 1.0 and g[-1] == pytest.approx(1e-12)

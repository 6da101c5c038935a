import math
import os

import pytest

fbkan = pytest.importorskip("fbkan")


def test_problem_registry():
    names = fbkan.problem_names()
    assert "data1" in names
    assert "helmholtz" in names


def test_basis_partition_of_unity():
    for x in [0.0, 0.3, 2.5, 7.999]:
        values = fbkan.basis_values(0.0, 8.0, 5, 3, x)
        assert len(values) == 8
        assert abs(sum(values) - 1.0) < 1e-12


def test_pou_weights_sum_to_one():
    for x in [0.05, 1.7, 3.2]:
        w = fbkan.pou_weights([0.0], [8.0], [4], 1.9, [x])
        assert len(w) == 4
        assert abs(sum(w) - 1.0) < 1e-12
        assert all(wi >= 0.0 for wi in w)


def test_run_and_evaluate(tmp_path):
    out = str(tmp_path / "run")
    summary = fbkan.run(
        "data1-L4",
        overrides=["training.iterations=20", "training.n_data=80", "training.metric_every=10"],
        seed=0,
        out=out,
    )
    assert summary["problem"] == "data1"
    assert summary["iterations"] == 20
    assert summary["param_count"] == 400
    assert math.isfinite(summary["final_rel_l2"])
    for artifact in summary["artifacts"].values():
        assert os.path.exists(artifact)

    checkpoint = summary["artifacts"]["checkpoint"]
    values = fbkan.evaluate(checkpoint, [[0.5], [4.0], [7.5]])
    assert len(values) == 3
    assert all(math.isfinite(v) for v in values)

    j = fbkan.jet(checkpoint, [2.0])
    assert math.isfinite(j["value"])
    assert len(j["first"]) == 1
    assert len(j["second_diag"]) == 1

    again = fbkan.run(
        "data1-L4",
        overrides=["training.iterations=20", "training.n_data=80", "training.metric_every=10"],
        seed=0,
        out=str(tmp_path / "run2"),
    )
    assert again["hash"] == summary["hash"]
    assert again["final_rel_l2"] == summary["final_rel_l2"]

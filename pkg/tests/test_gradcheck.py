import pytest

from troikit.gradcheck import ALL_OPS, format_report, run_checks


def test_registry_covers_every_differentiable_surface():
    assert set(ALL_OPS) == {
        "matmul", "softmax", "layer_norm", "relu", "linear", "conv2d",
        "roi_align", "encoder_layer", "troi_forward", "backbone_loss",
    }


def test_selected_ops_pass():
    results = run_checks(ops=["matmul", "roi_align"], points=3)
    assert [r.name for r in results] == ["matmul", "roi_align"]
    assert all(r.passed for r in results)
    assert all(r.max_rel_err < 1e-4 for r in results)


def test_perturbed_gradients_are_caught():
    # negative control: a wrong analytic gradient must be reported
    results = run_checks(ops=["linear"], points=1, perturb=0.25)
    assert not results[0].passed


def test_unknown_op_rejected():
    with pytest.raises(KeyError):
        run_checks(ops=["banana"])


def test_report_formatting():
    results = run_checks(ops=["relu"], points=1)
    text = format_report(results)
    assert "relu" in text and "pass" in text and "max_rel_err" in text

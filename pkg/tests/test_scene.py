import numpy as np
import pytest

from handfit.camera import FullParams, ViewParams, pack
from handfit.dataset import SynthRanges
from handfit.hand_model import SkeletonAdapter, rest_keypoints
from handfit.objectives import LossWeights
from handfit.optim import finite_difference_grad
from handfit.renderer import RasterConfig
from handfit.scene import Observations, SceneObjective, predict


def test_wrist_projects_to_translation(tpl):
    params = SynthRanges().sample(np.random.default_rng(0))
    pred = predict(params, tpl, RasterConfig())
    np.testing.assert_allclose(pred.keypoints_2d[0], params.view.t, atol=1e-12)
    np.testing.assert_allclose(pred.keypoints_3d[0], 0.0, atol=1e-12)
    # 2D keypoints are the scaled x, y of the rotated 3D ones
    np.testing.assert_allclose(pred.keypoints_2d, params.view.s * pred.keypoints_3d[:, :2] + params.view.t, atol=1e-10)
    assert pred.silhouette.shape == (64, 64) and pred.silhouette.any()


def test_rest_prediction(tpl):
    pred = predict(FullParams.rest(), tpl)
    rest = rest_keypoints(tpl)
    np.testing.assert_allclose(pred.keypoints_3d, rest - rest[0], atol=1e-12)
    assert pred.silhouette is None


def test_ground_truth_is_a_zero_of_the_smooth_terms(tpl):
    params = SynthRanges().sample(np.random.default_rng(1))
    pred = predict(params, tpl, RasterConfig())
    obs = Observations(pred.keypoints_2d, pred.silhouette, pred.keypoints_3d)
    ev = SceneObjective(tpl, obs, LossWeights(reg=0.0)).evaluate(pack(params))
    assert ev.breakdown.terms["3d"] == pytest.approx(0.0, abs=1e-20)
    assert ev.breakdown.terms["2d"] == pytest.approx(0.0, abs=1e-12)
    assert ev.breakdown.terms["mask"] == 0.0


def test_smooth_gradient_matches_differences(tpl):
    rng = np.random.default_rng(2)
    ranges = SynthRanges()
    target = predict(ranges.sample(rng), tpl)
    objective = SceneObjective(tpl, Observations(target.keypoints_2d, None, target.keypoints_3d),
                               LossWeights(0.7, 1.3, 0.9, 1.0, 0.5), include_mask=False)
    x = pack(ranges.sample(rng))
    numeric = finite_difference_grad(objective, x)
    analytic = objective.evaluate(x).grad
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


def test_adapter_gradient(tpl):
    rng = np.random.default_rng(3)
    target = predict(SynthRanges().sample(rng), tpl)
    adapter = SkeletonAdapter(np.eye(63) + 0.02 * rng.normal(size=(63, 63)), rng.normal(size=63))
    objective = SceneObjective(tpl, Observations(None, None, target.keypoints_3d), include_mask=False)
    x = pack(SynthRanges().sample(rng))
    ev = objective.evaluate(x, adapter=adapter)
    g_matrix, g_bias = ev.grad_adapter

    def f_bias(b):
        return objective.evaluate(x, need_grad=False, adapter=SkeletonAdapter(adapter.matrix, b)).breakdown.total

    np.testing.assert_allclose(g_bias, finite_difference_grad(f_bias, adapter.bias), rtol=1e-6, atol=1e-8)
    i, j = 5, 17
    h = 1e-6
    plus, minus = adapter.matrix.copy(), adapter.matrix.copy()
    plus[i, j] += h
    minus[i, j] -= h
    num = (objective.evaluate(x, False, SkeletonAdapter(plus, adapter.bias)).breakdown.total
           - objective.evaluate(x, False, SkeletonAdapter(minus, adapter.bias)).breakdown.total) / (2 * h)
    assert g_matrix[i, j] == pytest.approx(num, rel=1e-5)


def test_mask_shape_mismatch(tpl):
    with pytest.raises(ValueError):
        SceneObjective(tpl, Observations(mask=np.zeros((10, 10))))


def test_silhouette_gradient_points_towards_target(tpl):
    # a pure translation error: the surrogate gradient on t moves towards the target
    params = FullParams.rest(ViewParams([32.0, 50.0], 0.22, [0.1, 0.0, 0.0]))
    target = predict(params, tpl, RasterConfig()).silhouette
    shifted = pack(params)
    shifted[0] += 3.0
    ev = SceneObjective(tpl, Observations(mask=target), LossWeights(reg=0.0)).evaluate(shifted)
    assert ev.grad[0] > 0

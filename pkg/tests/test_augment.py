import numpy as np
import pytest

from handfit.augment import (
    AugmentationConfig,
    add_gaussian_noise,
    adjust_brightness,
    augment,
    coarse_dropout,
    gaussian_blur,
    mean_blur,
    salt_and_pepper,
)
from handfit.errors import InvariantError


@pytest.fixture
def image():
    return np.random.default_rng(0).integers(0, 256, (32, 32, 3), dtype=np.uint8)


def test_no_groups_leaves_image_unchanged(image):
    kp = np.arange(42.0).reshape(21, 2)
    out, kp_out, applied = augment(image, kp, AugmentationConfig(groups=()))
    assert np.array_equal(out, image) and applied == []
    assert kp_out is kp


def test_same_seed_same_output(image):
    cfg = AugmentationConfig(seed=3)
    a = augment(image, None, cfg)
    b = augment(image, None, cfg)
    assert np.array_equal(a[0], b[0]) and a[2] == b[2]
    c = augment(image, None, cfg, seed=4)
    assert not np.array_equal(a[0], c[0])


def test_keypoints_untouched_and_shape_kept(image):
    kp = np.random.default_rng(1).normal(size=(21, 3))
    before = kp.tobytes()
    for seed in range(20):
        out, kp_out, applied = augment(image, kp, AugmentationConfig(), seed=seed)
        assert kp_out.tobytes() == before
        assert out.shape == image.shape and out.dtype == image.dtype
        assert 1 <= len(applied) <= 4 and len(set(applied)) == len(applied)


def test_max_groups_limits_count(image):
    for seed in range(20):
        _, _, applied = augment(image, None, AugmentationConfig(max_groups=2), seed=seed)
        assert 1 <= len(applied) <= 2


def test_brightness_example():
    img = np.full((4, 4), 100.0)
    assert np.all(adjust_brightness(img, 1.5) == 150.0)
    assert np.all(adjust_brightness(np.full((2, 2), 200.0), 1.5) == 255.0)


def test_transforms_stay_in_range():
    rng = np.random.default_rng(2)
    img = rng.uniform(0, 255, (20, 20))
    for out in (gaussian_blur(img, 2.0), mean_blur(img, 5), add_gaussian_noise(img, 12.75, rng),
                coarse_dropout(img, 0.3, rng), salt_and_pepper(img, 0.2, rng)):
        assert out.shape == img.shape and out.min() >= 0 and out.max() <= 255


def test_dropout_area_and_salt_fraction():
    rng = np.random.default_rng(3)
    img = np.full((100, 100), 128.0)
    out = coarse_dropout(img, 0.3, rng)
    assert abs((out == 0).mean() - 0.3) < 0.03
    sp = salt_and_pepper(img, 0.2, np.random.default_rng(4))
    assert abs((sp != 128).mean() - 0.2) < 0.02


def test_blur_is_spatial_only():
    img = np.zeros((9, 9, 3))
    img[4, 4, 1] = 255.0
    out = gaussian_blur(img, 1.0)
    assert out[:, :, 0].max() == 0 and out[:, :, 2].max() == 0
    assert out[:, :, 1].sum() == pytest.approx(255.0)


def test_config_bounds():
    for bad in (dict(groups=("warp",)), dict(max_groups=5), dict(gaussian_sigma=(0.5, 2.0)),
                dict(mean_kernel=(3, 11)), dict(noise_std=20.0), dict(dropout_fraction=0.5),
                dict(salt_pepper_fraction=0.3), dict(add_range=(-30, 0)), dict(multiply_range=(0.2, 1.0))):
        with pytest.raises(InvariantError):
            AugmentationConfig(**bad)

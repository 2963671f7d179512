import numpy as np
import pytest

from oracles import quantized_brute_force, random_instance
from pdequant.codec import make_equidistant
from pdequant.datasel import (SparsifyConfig, optimize_tonal, optimize_tonal_quantized, sparsify_mask,
                              target_count)
from pdequant.diffusion import InpaintProblem, influence_basis, solve
from pdequant.fixtures import textured_image
from pdequant.imagegrid import ImageGrid, Mask, mse


def test_config_validation():
    for bad in (dict(target_density=0), dict(target_density=1.2),
                dict(target_density=0.1, candidate_fraction=0),
                dict(target_density=0.1, removal_fraction=1.5)):
        with pytest.raises(ValueError):
            SparsifyConfig(**bad)


def test_target_count():
    assert target_count(4096, 0.05) == 205
    assert target_count(10, 0.01) == 1
    assert target_count(10, 0.99) == 9


def test_sparsify_density_and_determinism():
    img = textured_image(32, seed=3)
    cfg = SparsifyConfig(0.05, seed=7)
    a = sparsify_mask(img, cfg)
    assert a.count == target_count(32 * 32, 0.05)
    assert a == sparsify_mask(img, cfg)
    assert a != sparsify_mask(img, SparsifyConfig(0.05, seed=8))


def test_sparsify_beats_random_masks():
    img = textured_image(64, seed=0)
    mask = sparsify_mask(img, SparsifyConfig(0.05, seed=0))
    err = mse(solve(InpaintProblem(img, mask)), img)
    rng = np.random.default_rng(0)
    errs = []
    for _ in range(5):
        rand = np.zeros(img.size, bool)
        rand[rng.choice(img.size, mask.count, replace=False)] = True
        errs.append(mse(solve(InpaintProblem(img, Mask(rand.reshape(img.shape)))), img))
    assert err < np.median(errs)


def test_sparsify_constant_image():
    img = ImageGrid(np.full((16, 16), 80.0))
    mask = sparsify_mask(img, SparsifyConfig(0.05, seed=2))
    assert mse(solve(InpaintProblem(img, mask)), img) < 1e-12


def test_tonal_zero_residual_ramp():
    img = ImageGrid(np.linspace(0, 200, 21)[None, :])
    known = np.zeros((1, 21), bool)
    known[0, [0, 20]] = True
    mask = Mask(known)
    res = optimize_tonal(img, mask, influence_basis(mask))
    assert np.allclose(res.grey_values, [0, 200], atol=1e-6)
    assert res.achieved_mse < 1e-10


def test_tonal_single_pixel_is_mean():
    f = np.random.default_rng(0).uniform(0, 255, (5, 6))
    known = np.zeros((5, 6), bool)
    known[2, 2] = True
    mask = Mask(known)
    res = optimize_tonal(ImageGrid(f), mask, influence_basis(mask))
    assert res.grey_values[0] == pytest.approx(f.mean(), abs=1e-6)


def test_tonal_never_worse_and_matches_lstsq():
    rng = np.random.default_rng(1)
    for _ in range(15):
        f, known = random_instance(rng, 10)
        img, mask = ImageGrid(f), Mask(known)
        basis = influence_basis(mask)
        res = optimize_tonal(img, mask, basis)
        plain = mse(solve(InpaintProblem(img, mask)), img)
        assert res.achieved_mse <= plain + 1e-9
        g, *_ = np.linalg.lstsq(basis.fields.T, f.ravel(), rcond=None)
        assert res.achieved_mse == pytest.approx(mse(basis.reconstruct(g), img), rel=1e-6, abs=1e-9)


def test_quantized_small_example():
    img = ImageGrid(np.array([[0.0, 6.0, 12.0]]))
    mask = Mask(np.array([[True, False, True]]))
    res = optimize_tonal_quantized(img, mask, influence_basis(mask), [0, 5, 10])
    assert list(res.grey_values) == [0, 10]
    assert res.achieved_mse == pytest.approx(5 / 3)


def test_quantized_forced_and_rounding():
    f = np.random.default_rng(2).uniform(0, 255, (4, 4))
    known = np.zeros((4, 4), bool)
    known[1, 2] = True
    img, mask = ImageGrid(f), Mask(known)
    basis = influence_basis(mask)
    res = optimize_tonal_quantized(img, mask, basis, [0.0])
    assert res.achieved_mse == pytest.approx(np.mean(f ** 2))
    res = optimize_tonal_quantized(img, mask, basis, np.arange(256.0))
    assert res.grey_values[0] == np.floor(f.mean() + 0.5)


def test_quantized_monotone_and_no_better_than_continuous():
    img = textured_image(24, seed=4)
    mask = sparsify_mask(img, SparsifyConfig(0.08, seed=1))
    basis = influence_basis(mask)
    res = optimize_tonal_quantized(img, mask, basis, make_equidistant(12))
    assert all(b <= a + 1e-9 for a, b in zip(res.history, res.history[1:]))
    assert res.achieved_mse >= optimize_tonal(img, mask, basis).achieved_mse - 1e-9
    assert set(res.grey_values) <= set(make_equidistant(12).levels)


def test_quantized_near_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(60):
        width = int(rng.integers(3, 9))
        f = rng.uniform(0, 255, (1, width))
        m = int(rng.integers(1, 4))
        known = np.zeros((1, width), bool)
        known[0, rng.choice(width, m, replace=False)] = True
        if known.all():
            continue
        mask = Mask(known)
        basis = influence_basis(mask)
        levels = np.sort(rng.choice(256, size=int(rng.integers(2, 5)), replace=False)).astype(float)
        res = optimize_tonal_quantized(ImageGrid(f), mask, basis, levels)
        best = quantized_brute_force(basis.fields, f.ravel(), levels)
        assert res.achieved_mse * f.size <= 1.05 * best + 1e-9


def test_basis_mask_mismatch():
    img = ImageGrid(np.zeros((1, 4)))
    a = Mask(np.array([[True, False, False, True]]))
    b = Mask(np.array([[True, False, True, False]]))
    with pytest.raises(ValueError):
        optimize_tonal(img, a, influence_basis(b))

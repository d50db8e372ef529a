from __future__ import annotations

import numpy as np
import pytest

from earid.canny import (
    EDGE_NONE,
    EDGE_STRONG,
    EDGE_WEAK,
    CannyParams,
    EdgeMap,
    canny,
    convolve2d,
    convolve_plane,
    double_threshold,
    gaussian_kernel,
    hysteresis_link,
    non_max_suppression,
    sobel_plane,
)
from earid.image import Image

from reference_canny import ref_canny, ref_convolve


class TestGaussianKernel:
    def test_radius_zero(self):
        assert np.array_equal(gaussian_kernel(2.0, 0), [[1.0]])

    @pytest.mark.parametrize("sigma,radius", [(0.5, 1), (1.0, 3), (1.4, 5), (3.0, 2)])
    def test_normalized(self, sigma, radius):
        k = gaussian_kernel(sigma, radius)
        assert abs(k.sum() - 1.0) < 1e-9
        assert np.all(k > 0)

    def test_sigma1_radius1_values(self):
        # exp(-d^2/2) at offsets 0, 1, 2 for the 3x3 grid, normalized
        k = gaussian_kernel(1.0, 1)
        assert k[1, 1] == pytest.approx(0.20417996, abs=1e-7)
        assert k[0, 1] == pytest.approx(0.12384140, abs=1e-7)
        assert k[0, 0] == pytest.approx(0.07511361, abs=1e-7)

    def test_reflection_symmetry_exact(self):
        k = gaussian_kernel(1.7, 4)
        assert np.array_equal(k, k[::-1, :])
        assert np.array_equal(k, k[:, ::-1])
        assert np.array_equal(k, k.T)

    def test_invalid_sigma(self):
        with pytest.raises(ValueError):
            gaussian_kernel(0.0, 2)
        with pytest.raises(ValueError):
            gaussian_kernel(-1.0, 2)


class TestConvolve:
    def test_identity_kernel(self, rng):
        plane = rng.random((6, 7))
        assert np.array_equal(convolve_plane(plane, [[1.0]]), plane)

    def test_constant_image_any_normalized_kernel(self, rng):
        k = rng.random((3, 3))
        k /= k.sum()
        out = convolve_plane(np.full((5, 5), 0.37), k)
        assert np.allclose(out, 0.37, atol=1e-9)

    def test_matches_nested_loop_oracle(self, rng):
        for _ in range(25):
            plane = rng.random((5, 5))
            kernel = rng.uniform(-1, 1, size=(3, 3))
            got = convolve_plane(plane, kernel)
            want = np.array(ref_convolve(plane.tolist(), kernel.tolist()))
            assert np.max(np.abs(got - want)) < 1e-9

    def test_linearity(self, rng):
        i1, i2 = rng.random((6, 6)), rng.random((6, 6))
        k = rng.uniform(-1, 1, size=(5, 5))
        a, b = 0.6, -0.3
        lhs = convolve_plane(a * i1 + b * i2, k)
        rhs = a * convolve_plane(i1, k) + b * convolve_plane(i2, k)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_image_wrapper_clamps(self, rng):
        img = Image(rng.random((4, 4, 1)))
        out = convolve2d(img, np.full((3, 3), 2.0))
        assert out.channels == 1
        assert out.pixels.max() <= 1.0

    def test_rejects_even_kernel(self, rng):
        with pytest.raises(ValueError):
            convolve_plane(rng.random((4, 4)), rng.random((2, 2)))


class TestSobel:
    def test_constant_zero_gradient(self):
        g = sobel_plane(np.full((5, 5), 0.42))
        assert np.all(g.gx == 0) and np.all(g.gy == 0) and np.all(g.magnitude == 0)

    def test_vertical_step(self):
        step = np.zeros((8, 8))
        step[:, 4:] = 1.0
        g = sobel_plane(step)
        assert np.all(g.gx[:, 3] == 4.0) and np.all(g.gx[:, 4] == 4.0)
        assert np.all(g.gy == 0)

    def test_transpose_swaps_roles(self, rng):
        plane = rng.random((6, 9))
        g = sobel_plane(plane)
        gt = sobel_plane(np.ascontiguousarray(plane.T))
        assert np.array_equal(gt.gx, g.gy.T)
        assert np.array_equal(gt.gy, g.gx.T)

    def test_magnitude_direction_consistent(self, rng):
        g = sobel_plane(rng.random((7, 7)))
        assert np.allclose(g.magnitude, np.sqrt(g.gx**2 + g.gy**2), atol=1e-9)
        assert np.array_equal(g.direction, np.arctan2(g.gy, g.gx))

    def test_too_small(self):
        with pytest.raises(ValueError):
            sobel_plane(np.zeros((2, 5)))


class TestNonMaxSuppression:
    def test_zero_field(self):
        out = non_max_suppression(sobel_plane(np.zeros((6, 6))))
        assert np.all(out == 0)

    def test_isolated_spike_survives(self):
        from earid.canny import GradientField

        mag = np.zeros((5, 5))
        mag[2, 2] = 3.0
        g = GradientField(gx=mag.copy(), gy=np.zeros_like(mag), magnitude=mag,
                          direction=np.zeros_like(mag))
        out = non_max_suppression(g)
        assert out[2, 2] == 3.0
        assert np.count_nonzero(out) == 1

    def test_step_ridge_thins_to_one_column(self):
        step = np.zeros((8, 8))
        step[:, 4:] = 1.0
        g = sobel_plane(step)
        assert len(set(np.nonzero(g.magnitude)[1].tolist())) == 2
        out = non_max_suppression(g)
        assert len(set(np.nonzero(out)[1].tolist())) == 1

    def test_never_increases(self, rng):
        g = sobel_plane(rng.random((10, 10)))
        out = non_max_suppression(g)
        kept = out != 0
        assert np.array_equal(out[kept], g.magnitude[kept])


class TestDoubleThreshold:
    def test_all_zero_input(self):
        em = double_threshold(np.zeros((4, 4)), 0.25, 0.5)
        assert np.all(em.classes == EDGE_NONE)
        assert not em.finalized

    def test_relative_thresholds(self):
        nms = np.array([[0.8, 0.3, 0.1]])
        em = double_threshold(nms, 0.25, 0.5)  # cutoffs 0.2 and 0.4 of max 0.8
        assert em.classes[0, 0] == EDGE_STRONG
        assert em.classes[0, 1] == EDGE_WEAK
        assert em.classes[0, 2] == EDGE_NONE

    def test_degenerate_low_high(self, rng):
        nms = rng.random((5, 5))
        em = double_threshold(nms, 0.0, 1e-12)
        assert np.all(em.classes[nms > nms.max() * 1e-12] == EDGE_STRONG)

    def test_threshold_order(self):
        with pytest.raises(ValueError):
            double_threshold(np.ones((2, 2)), 0.5, 0.5)


class TestHysteresis:
    def test_no_seeds_demotes_all(self):
        classes = np.full((3, 3), EDGE_WEAK, dtype=np.int8)
        out = hysteresis_link(EdgeMap(classes=classes))
        assert out.finalized
        assert np.all(out.classes == EDGE_NONE)

    def test_chain_promotes_transitively(self):
        classes = np.zeros((1, 5), dtype=np.int8)
        classes[0, 0] = EDGE_STRONG
        classes[0, 1:4] = EDGE_WEAK
        out = hysteresis_link(EdgeMap(classes=classes))
        assert np.all(out.classes[0, :4] == EDGE_STRONG)
        assert out.classes[0, 4] == EDGE_NONE

    def test_diagonal_touch_promotes_one_cluster(self):
        # strong at (0,0); weak cluster touching diagonally at (1,1)-(1,2);
        # second weak cluster isolated at (4,4)
        classes = np.zeros((5, 5), dtype=np.int8)
        classes[0, 0] = EDGE_STRONG
        classes[1, 1] = classes[1, 2] = EDGE_WEAK
        classes[4, 4] = EDGE_WEAK
        out = hysteresis_link(EdgeMap(classes=classes))
        assert out.classes[1, 1] == EDGE_STRONG and out.classes[1, 2] == EDGE_STRONG
        assert out.classes[4, 4] == EDGE_NONE

    def test_already_finalized(self):
        em = EdgeMap(classes=np.zeros((2, 2), dtype=np.int8), finalized=True)
        with pytest.raises(ValueError):
            hysteresis_link(em)

    def test_monotone_in_strong_seeds(self, rng):
        for _ in range(20):
            classes = rng.choice(
                [EDGE_NONE, EDGE_WEAK, EDGE_STRONG], size=(8, 8), p=[0.5, 0.4, 0.1]
            ).astype(np.int8)
            base = hysteresis_link(EdgeMap(classes=classes.copy()))
            grown = classes.copy()
            free = np.argwhere(grown != EDGE_STRONG)
            y, x = free[rng.integers(len(free))]
            grown[y, x] = EDGE_STRONG
            more = hysteresis_link(EdgeMap(classes=grown))
            was_strong = base.classes == EDGE_STRONG
            assert np.all(more.classes[was_strong] == EDGE_STRONG)


class TestCannyPipeline:
    def test_constant_image_no_edges(self):
        img = Image(np.full((10, 10, 3), 0.6))
        assert np.all(canny(img).pixels == 0)

    def test_square_contour_closed_binary(self):
        plane = np.zeros((16, 16))
        plane[4:12, 4:12] = 1.0
        out = canny(Image(plane[:, :, None])).pixels[:, :, 0]
        assert set(np.unique(out).tolist()) <= {0.0, 1.0}
        edge_set = set(zip(*np.nonzero(out)))
        assert len(edge_set) >= 20
        for y, x in edge_set:
            neighbors = sum(
                (y + dy, x + dx) in edge_set
                for dy in (-1, 0, 1)
                for dx in (-1, 0, 1)
                if (dy, dx) != (0, 0)
            )
            assert neighbors >= 2  # closed ring: no loose ends

    def test_matches_reference_implementation(self, rng):
        for _ in range(5):
            plane = rng.random((16, 16))
            got = canny(Image(plane[:, :, None])).pixels[:, :, 0]
            want = np.array(ref_canny([list(r) for r in plane]), dtype=np.float64)
            assert np.array_equal(got, want)

    def test_deterministic(self, rng):
        img = Image(rng.random((12, 12, 3)))
        a = canny(img).pixels
        b = canny(img).pixels
        assert np.array_equal(a, b)

    def test_too_small(self):
        with pytest.raises(ValueError):
            canny(Image(np.zeros((2, 2, 1))))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            CannyParams(sigma=-1)
        with pytest.raises(ValueError):
            CannyParams(low_threshold=0.5, high_threshold=0.2)
        assert CannyParams(sigma=1.4).radius == 5
        assert CannyParams(sigma=1.0, kernel_radius=2).radius == 2

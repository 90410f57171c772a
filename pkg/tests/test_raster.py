"""Rasterizer tests: bit-identity against the brute-force reference."""

import numpy as np
import pytest

import oracles
from mimic.errors import DataError
from mimic.raster import fill_disc, fill_polygon, rasterize, sample_colors


def random_scene(rng, n_vertices=24, n_triangles=16, size=64):
    xy = rng.uniform(-8.0, size + 8.0, (n_vertices, 2))
    depth = rng.uniform(-1.0, 1.0, n_vertices)
    colors = rng.uniform(-0.2, 1.2, (n_vertices, 3))
    triangles = rng.integers(0, n_vertices, (n_triangles, 3)).astype(np.int64)
    return xy, depth, colors, triangles


class TestRasterizeAgainstReference:
    @pytest.mark.parametrize("cull", [True, False])
    def test_random_scenes_bit_identical(self, cull):
        size = 64
        for seed in range(40):
            rng = np.random.default_rng(seed)
            xy, depth, colors, triangles = random_scene(rng, size=size)
            got_px, got_z, got_cov = rasterize(
                xy, depth, colors, triangles, size, size, background=(3, 7, 11), cull_backfaces=cull
            )
            want_px, want_z, want_cov = oracles.rasterize_reference(
                xy, depth, colors, triangles.astype(np.int64), size, size, (3, 7, 11), cull
            )
            assert np.array_equal(got_cov, want_cov)
            assert np.array_equal(got_px, want_px)
            assert np.array_equal(got_z[got_cov], want_z[want_cov])

    def test_repeat_runs_are_bit_identical(self):
        rng = np.random.default_rng(99)
        xy, depth, colors, triangles = random_scene(rng)
        a = rasterize(xy, depth, colors, triangles, 64, 64)
        b = rasterize(xy, depth, colors, triangles, 64, 64)
        assert a[0].tobytes() == b[0].tobytes()
        assert a[1].tobytes() == b[1].tobytes()


def front_triangle(v0, v1, v2):
    # Negative orientation in y-down coordinates faces the camera.
    a = np.asarray([v0, v1, v2], dtype=np.float64)
    area = (a[1, 0] - a[0, 0]) * (a[2, 1] - a[0, 1]) - (a[1, 1] - a[0, 1]) * (a[2, 0] - a[0, 0])
    if area > 0:
        a[[1, 2]] = a[[2, 1]]
    return a


class TestRasterizeSemantics:
    def test_shared_edge_pixels_drawn_exactly_once(self):
        # Quad split along its diagonal; the seam must have no gaps and no
        # double coverage.
        xy = np.array([[8.0, 8.0], [40.0, 8.0], [40.0, 40.0], [8.0, 40.0]])
        depth = np.zeros(4)
        colors = np.ones((4, 3))
        t0 = np.array([[0, 2, 1]], dtype=np.int64)  # front-facing halves
        t1 = np.array([[0, 3, 2]], dtype=np.int64)
        _, _, cov0 = rasterize(xy, depth, colors, t0, 48, 48)
        _, _, cov1 = rasterize(xy, depth, colors, t1, 48, 48)
        _, _, both = rasterize(xy, depth, colors, np.vstack([t0, t1]), 48, 48)
        assert not np.any(cov0 & cov1)
        assert np.array_equal(cov0 | cov1, both)
        assert both.sum() == 32 * 32  # half-open box [8, 40) x [8, 40)

    def test_degenerate_triangle_draws_nothing(self):
        xy = np.array([[4.0, 4.0], [20.0, 20.0], [36.0, 36.0]])
        _, _, cov = rasterize(xy, np.zeros(3), np.ones((3, 3)), np.array([[0, 1, 2]], dtype=np.int64), 48, 48)
        assert not cov.any()

    def test_backface_is_culled_only_when_enabled(self):
        xy = np.array([[8.0, 8.0], [40.0, 8.0], [8.0, 40.0]])
        tris = np.array([[0, 1, 2]], dtype=np.int64)  # positive area: back face
        _, _, culled = rasterize(xy, np.zeros(3), np.ones((3, 3)), tris, 48, 48, cull_backfaces=True)
        _, _, drawn = rasterize(xy, np.zeros(3), np.ones((3, 3)), tris, 48, 48, cull_backfaces=False)
        assert not culled.any()
        assert drawn.any()

    def test_smaller_depth_wins_regardless_of_order(self):
        xy = np.array([[8.0, 8.0], [40.0, 8.0], [8.0, 40.0]])
        depth_near = np.full(3, 1.0)
        depth_far = np.full(3, 5.0)
        xy2 = np.vstack([xy, xy])
        depths = np.concatenate([depth_far, depth_near])
        colors = np.vstack([np.tile([1.0, 0.0, 0.0], (3, 1)), np.tile([0.0, 1.0, 0.0], (3, 1))])
        tris = np.array([[0, 2, 1], [3, 5, 4]], dtype=np.int64)
        px, _, _ = rasterize(xy2, depths, colors, tris, 48, 48)
        assert tuple(px[16, 16]) == (0, 255, 0)
        # Swap listing order; the nearer triangle must still win.
        px2, _, _ = rasterize(xy2, depths, colors, tris[::-1].copy(), 48, 48)
        assert tuple(px2[16, 16]) == (0, 255, 0)

    def test_equal_depth_keeps_earlier_triangle(self):
        xy = np.array([[8.0, 8.0], [40.0, 8.0], [8.0, 40.0]])
        xy2 = np.vstack([xy, xy])
        colors = np.vstack([np.tile([1.0, 0.0, 0.0], (3, 1)), np.tile([0.0, 0.0, 1.0], (3, 1))])
        tris = np.array([[0, 2, 1], [3, 5, 4]], dtype=np.int64)
        px, _, _ = rasterize(xy2, np.zeros(6), colors, tris, 48, 48)
        assert tuple(px[16, 16]) == (255, 0, 0)

    def test_quantization_midpoint_rounds_up(self):
        xy = np.array([[0.0, 0.0], [48.0, 0.0], [0.0, 48.0]])
        colors = np.full((3, 3), 0.5)
        tris = np.array([[0, 2, 1]], dtype=np.int64)
        # An exact 0.5 rounds up: at a vertex the weight is exactly one, so
        # the interpolated value is exactly 0.5.
        rgb, _, cov = sample_colors(xy, np.zeros(3), colors, tris, xy[:1])
        assert cov[0]
        assert np.all(rgb[0] == 128)
        # Interior barycentric sums may sit one ulp under 1, so interior
        # pixels land on 127 or 128 but never further away.
        px, _, mask = rasterize(xy, np.zeros(3), colors, tris, 48, 48)
        assert set(np.unique(px[mask])) <= {127, 128}

    def test_out_of_range_colors_clamp(self):
        xy = np.array([[0.0, 0.0], [48.0, 0.0], [0.0, 48.0]])
        colors = np.tile([1.7, -0.4, 1.0], (3, 1))
        px, _, cov = rasterize(xy, np.zeros(3), colors, np.array([[0, 2, 1]], dtype=np.int64), 48, 48)
        assert np.all(px[cov] == np.array([255, 0, 255], dtype=np.uint8))

    def test_background_fills_uncovered_pixels(self):
        xy = np.array([[8.0, 8.0], [16.0, 8.0], [8.0, 16.0]])
        px, _, cov = rasterize(xy, np.zeros(3), np.ones((3, 3)), np.array([[0, 2, 1]], dtype=np.int64), 48, 48, background=(9, 8, 7))
        assert np.all(px[~cov] == np.array([9, 8, 7], dtype=np.uint8))

    def test_fully_offscreen_triangle_is_harmless(self):
        xy = np.array([[-50.0, -50.0], [-10.0, -50.0], [-50.0, -10.0]])
        px, _, cov = rasterize(xy, np.zeros(3), np.ones((3, 3)), np.array([[0, 2, 1]], dtype=np.int64), 32, 32)
        assert not cov.any()

    def test_shape_validation(self):
        with pytest.raises(DataError):
            rasterize(np.zeros((3, 2)), np.zeros(2), np.zeros((3, 3)), np.zeros((1, 3), dtype=np.int64), 8, 8)
        with pytest.raises(DataError):
            rasterize(np.zeros((3, 2)), np.zeros(3), np.zeros((3, 3)), np.zeros((1, 3), dtype=np.int64), 0, 8)


class TestSampleColors:
    def test_matches_image_at_pixel_centers(self):
        size = 48
        ys, xs = np.mgrid[0:size, 0:size]
        queries = np.stack([xs.reshape(-1) + 0.5, ys.reshape(-1) + 0.5], axis=1)
        for seed in range(8):
            rng = np.random.default_rng(1000 + seed)
            xy, depth, colors, triangles = random_scene(rng, size=size)
            px, zbuf, cov = rasterize(xy, depth, colors, triangles, size, size)
            rgb, z, qcov = sample_colors(xy, depth, colors, triangles, queries)
            assert np.array_equal(qcov.reshape(size, size), cov)
            assert np.array_equal(rgb.reshape(size, size, 3)[cov], px[cov])
            assert np.array_equal(z.reshape(size, size)[cov], zbuf[cov])

    def test_vertex_query_returns_exact_vertex_color(self):
        xy = np.array([[2.0, 2.0], [10.0, 2.0], [2.0, 10.0]])
        depth = np.array([0.3, 0.6, 0.9])
        colors = np.array([[0.137, 0.524, 0.871], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        tris = np.array([[0, 2, 1]], dtype=np.int64)
        rgb, z, cov = sample_colors(xy, depth, colors, tris, xy[:1])
        assert cov[0]
        expected = np.floor(colors[0] * 255.0 + 0.5).astype(np.uint8)
        assert np.array_equal(rgb[0], expected)
        assert z[0] == depth[0]

    def test_uncovered_query_reports_not_covered(self):
        xy = np.array([[2.0, 2.0], [10.0, 2.0], [2.0, 10.0]])
        rgb, z, cov = sample_colors(xy, np.zeros(3), np.ones((3, 3)), np.array([[0, 2, 1]], dtype=np.int64), np.array([[30.0, 30.0]]))
        assert not cov[0]
        assert np.isinf(z[0])


class TestPolygonFill:
    def test_matches_reference_on_random_polygons(self):
        for seed in range(20):
            rng = np.random.default_rng(2000 + seed)
            n = int(rng.integers(3, 9))
            poly = rng.uniform(-4.0, 36.0, (n, 2))
            image = np.zeros((32, 32, 3), dtype=np.uint8)
            fill_polygon(image, poly, 0)
            want = oracles.polygon_mask_reference(poly, 32, 32)
            assert np.array_equal(image[:, :, 0] == 255, want)
            assert not image[:, :, 1].any() and not image[:, :, 2].any()

    def test_concave_polygon_even_odd(self):
        # A five-point star: even-odd rule leaves the pentagon core filled
        # in this vertex order but the middle of each chord crossing empty.
        angles = np.pi / 2 + np.arange(5) * (4 * np.pi / 5)
        poly = np.stack([16 + 12 * np.cos(angles), 16 - 12 * np.sin(angles)], axis=1)
        image = np.zeros((32, 32, 3), dtype=np.uint8)
        fill_polygon(image, poly, 2)
        want = oracles.polygon_mask_reference(poly, 32, 32)
        assert np.array_equal(image[:, :, 2] == 255, want)

    def test_polygon_needs_three_points(self):
        with pytest.raises(DataError):
            fill_polygon(np.zeros((8, 8, 3), dtype=np.uint8), np.zeros((2, 2)), 0)


class TestDiscFill:
    def test_matches_reference(self):
        for seed in range(12):
            rng = np.random.default_rng(3000 + seed)
            center = rng.uniform(-4.0, 36.0, 2)
            radius = float(rng.uniform(0.0, 12.0))
            image = np.zeros((32, 32, 3), dtype=np.uint8)
            fill_disc(image, center, radius, 1)
            want = oracles.disc_mask_reference(center, radius, 32, 32)
            assert np.array_equal(image[:, :, 1] == 255, want)

    def test_boundary_pixel_is_inside(self):
        image = np.zeros((16, 16, 3), dtype=np.uint8)
        # Pixel center (12.5, 8.5) sits exactly on the radius-4 circle.
        fill_disc(image, np.array([8.5, 8.5]), 4.0, 0)
        assert image[8, 12, 0] == 255
        assert image[8, 13, 0] == 0

    def test_negative_radius_rejected(self):
        with pytest.raises(DataError):
            fill_disc(np.zeros((8, 8, 3), dtype=np.uint8), np.array([4.0, 4.0]), -1.0, 0)

import numpy as np
import pytest

from ifsmlab.examples import gifs_skew_model
from ifsmlab.hutchinson import attractor, collage_report, fractal_step
from ifsmlab.measure import cell_diameter
from ifsmlab.metric import PointCloud, hausdorff, lattice_cloud

from oracles import cantor_points, sierpinski_points


def snap_of(model, resolution):
    return 0.5 * cell_diameter(model.box, resolution, model.metric)


def random_cloud_in(model, rng, n):
    lo, hi = model.box[:, 0], model.box[:, 1]
    return PointCloud(lo + rng.random((n, model.dim)) * (hi - lo), model.box)


class TestFractalStep:
    def test_cantor_endpoints(self, cantor):
        res = 729
        out = fractal_step(cantor, PointCloud(np.array([[0.0], [1.0]]), cantor.box), res)
        assert len(out) == 4
        expected = np.array([0.0, 1 / 3, 2 / 3, 1.0])
        gap = np.max(np.abs(np.sort(out.points.ravel()) - expected))
        assert gap <= snap_of(cantor, res) + 1e-12

    def test_single_map_singleton(self, halver):
        out = fractal_step(halver, PointCloud(np.array([[1.0]]), halver.box), 512)
        assert len(out) == 1
        assert abs(out.points[0, 0] - 0.5) <= snap_of(halver, 512)

    def test_attractor_sample_is_fixed(self, cantor):
        # at a power-of-three resolution the snapped attractor cells map onto
        # themselves exactly
        res = 729
        att, log = attractor(cantor, lattice_cloud(cantor.box, 101), res, tol=1e-4)
        assert log.converged
        again = fractal_step(cantor, att, res)
        assert np.array_equal(att.points, again.points)

    def test_deterministic_output_order(self, sierpinski, ):
        rng = np.random.default_rng(0)
        cloud = random_cloud_in(sierpinski, rng, 40)
        shuffled = PointCloud(cloud.points[rng.permutation(len(cloud))],
                              sierpinski.box)
        a = fractal_step(sierpinski, cloud, 64)
        b = fractal_step(sierpinski, shuffled, 64)
        assert np.array_equal(a.points, b.points)


class TestAttractor:
    def test_single_map_collapses_to_fixed_point(self, halver):
        res = 512
        att, log = attractor(halver, PointCloud(np.array([[1.0]]), halver.box), res)
        assert log.converged
        assert np.max(np.abs(att.points)) <= log.tol + snap_of(halver, res)

    def test_cantor_against_depth6_construction(self, cantor):
        res = 729
        att, log = attractor(cantor, lattice_cloud(cantor.box, 101), res,
                             tol=3e-4, max_iter=60)
        assert log.converged
        oracle = PointCloud(cantor_points(6)[:, None], cantor.box)
        gap = hausdorff(att, oracle, cantor.metric)
        assert gap <= 3.0**-6 + 2 * snap_of(cantor, res)

    def test_sierpinski_against_depth6_construction(self, sierpinski):
        res = 128
        corners = PointCloud(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]]),
                             sierpinski.box)
        att, log = attractor(sierpinski, corners, res, tol=2e-3, max_iter=60)
        assert log.converged
        oracle = PointCloud(sierpinski_points(6), sierpinski.box)
        gap = hausdorff(att, oracle, sierpinski.metric)
        assert gap <= 2.0**-6 + 2 * snap_of(sierpinski, res)

    def test_geometric_delta_decay(self, cantor):
        res = 729
        _, log = attractor(cantor, lattice_cloud(cantor.box, 101), res, tol=1e-4)
        assert log.converged
        # every step ratio obeys the contraction plus snapping noise
        snap = snap_of(cantor, res)
        for ratio, prev in zip(log.ratios, log.deltas):
            assert ratio <= 1 / 3 + 2 * snap / prev + 1e-12

    def test_starting_cloud_independence(self, cantor):
        res = 729
        tol = 1e-4
        rng = np.random.default_rng(1)
        a, la = attractor(cantor, random_cloud_in(cantor, rng, 30), res, tol=tol)
        b, lb = attractor(cantor, random_cloud_in(cantor, rng, 7), res, tol=tol)
        assert la.converged and lb.converged
        assert hausdorff(a, b, cantor.metric) <= 2 * (tol + snap_of(cantor, res))

    def test_non_convergence_flag(self):
        # the flip x -> 1 - x is an isometry: iterates oscillate forever and
        # the solver must flag the failure, not raise
        from ifsmlab.metric import EUCLIDEAN
        from ifsmlab.model import IfsmModel, MapFamily, ParamSpace, WeightFamily
        flip = IfsmModel(
            box=np.array([[0.0, 1.0]]),
            metric=EUCLIDEAN,
            params=ParamSpace(np.array([[0.0]]), EUCLIDEAN),
            maps=MapFamily(kind="affine", matrices=np.array([[[-1.0]]]),
                           offsets=np.array([[1.0]])),
            weights=WeightFamily(kind="constant", p=np.array([1.0])),
        )
        start = PointCloud(np.array([[0.1]]), flip.box)
        _, log = attractor(flip, start, 64, tol=1e-12, max_iter=5)
        assert not log.converged
        assert log.iterations == 5

    def test_contraction_of_the_step(self, cantor, sierpinski):
        rng = np.random.default_rng(2)
        for model, s, res in ((cantor, 1 / 3, 729), (sierpinski, 0.5, 256)):
            slack = 2 * snap_of(model, res)
            for _ in range(20):
                b = random_cloud_in(model, rng, rng.integers(3, 25))
                c = random_cloud_in(model, rng, rng.integers(3, 25))
                lhs = hausdorff(fractal_step(model, b, res),
                                fractal_step(model, c, res), model.metric)
                assert lhs <= s * hausdorff(b, c, model.metric) + slack

    def test_skew_family_contracts_after_degree_steps(self, gifs):
        res = 200
        snap = snap_of(gifs, res)
        rng = np.random.default_rng(3)
        s = 0.6
        # a pair separated only in the last coordinate moves at ratio ~1 in
        # one step but contracts after degree-many steps
        b = PointCloud(np.array([[0.5, 0.3]]), gifs.box)
        c = PointCloud(np.array([[0.5, 0.8]]), gifs.box)
        one = hausdorff(fractal_step(gifs, b, res), fractal_step(gifs, c, res),
                        gifs.metric)
        d0 = hausdorff(b, c, gifs.metric)
        assert one >= 0.95 * d0
        for _ in range(10):
            b = random_cloud_in(gifs, rng, rng.integers(2, 12))
            c = random_cloud_in(gifs, rng, rng.integers(2, 12))
            fb, fc = b, c
            for _step in range(2):
                fb = fractal_step(gifs, fb, res)
                fc = fractal_step(gifs, fc, res)
            lhs = hausdorff(fb, fc, gifs.metric)
            assert lhs <= s * hausdorff(b, c, gifs.metric) + 4 * snap

    def test_bad_tol_rejected(self, cantor):
        with pytest.raises(ValueError):
            attractor(cantor, lattice_cloud(cantor.box, 11), 81, tol=0.0)


class TestCollage:
    def test_unit_interval_displacement(self, cantor):
        res = 729
        cloud = lattice_cloud(cantor.box, 201)
        report = collage_report(cantor, cloud, 1 / 3, res)
        # farthest point of [0,1] from the two-thirds image pair is 1/2
        step_slack = 0.5 / 200 + 2 * snap_of(cantor, res)
        assert abs(report["displacement"] - 1 / 6) <= step_slack
        assert report["bound"] == pytest.approx(report["displacement"] * 1.5, rel=1e-12)

    def test_fixed_point_has_zero_displacement(self, cantor):
        res = 729
        att, _ = attractor(cantor, lattice_cloud(cantor.box, 101), res, tol=1e-4)
        report = collage_report(cantor, att, 1 / 3, res, attractor_cloud=att)
        assert report["displacement"] == 0.0
        assert report["bound"] == 0.0
        assert report["bound_holds"]

    def test_single_map_from_far_point(self, halver):
        res = 1024
        att, _ = attractor(halver, PointCloud(np.array([[0.25]]), halver.box), res)
        cloud = PointCloud(np.array([[1.0]]), halver.box)
        report = collage_report(halver, cloud, 0.5, res, attractor_cloud=att)
        snap = snap_of(halver, res)
        assert abs(report["displacement"] - 0.5) <= snap
        assert abs(report["bound"] - 1.0) <= 2 * snap
        assert abs(report["attractor_distance"] - 1.0) <= 4 * snap
        assert report["bound_holds"]

    def test_random_clouds_respect_bound(self, cantor):
        res = 729
        tol = 1e-4
        att, _ = attractor(cantor, lattice_cloud(cantor.box, 101), res, tol=tol)
        rng = np.random.default_rng(4)
        slack = 2 * snap_of(cantor, res) + tol
        for _ in range(20):
            cloud = random_cloud_in(cantor, rng, rng.integers(2, 30))
            report = collage_report(cantor, cloud, 1 / 3, res, attractor_cloud=att)
            assert report["attractor_distance"] <= report["bound"] + slack

    def test_contraction_out_of_range(self, cantor):
        cloud = lattice_cloud(cantor.box, 11)
        with pytest.raises(ValueError):
            collage_report(cantor, cloud, 1.0, 81)
        with pytest.raises(ValueError):
            collage_report(cantor, cloud, 0.0, 81)

import numpy as np
import pytest

from ngash import cga
from ngash.errors import DataFormatError, IntegrityError
from ngash.mesh import Mesh, compute_normals
from ngash.prt import (
    BVH,
    LEAF_SIZE,
    TransferMatrix,
    build_bvh,
    load_transfer,
    ray_occluded,
    save_transfer,
    transfer_shadowed,
    transfer_unshadowed,
    worker_count,
)
from ngash.sh import generate_samples

from support import box_room_mesh, grid_plane_mesh, torus_mesh


def torus(major, minor, **kwargs):
    vertices, tris = torus_mesh(major, minor, **kwargs)
    return compute_normals(Mesh(vertices, tris))


def plane(nx, nz, extent=1.0):
    vertices, tris = grid_plane_mesh(nx, nz, extent=extent)
    return Mesh(vertices, tris)


def brute_force_occluded(mesh, origin, direction, t_min):
    # independent oracle: Moller-Trumbore over every triangle, no tree
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    e1 = mesh.vertices[mesh.triangles[:, 1]] - v0
    e2 = mesh.vertices[mesh.triangles[:, 2]] - v0
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-300
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin - v0
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = np.einsum("j,ij->i", direction, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > t_min)
    return bool(hit.any())


def floor_quad():
    vertices = [(-1, 0, -1), (1, 0, -1), (1, 0, 1), (-1, 0, 1)]
    triangles = [(0, 2, 1), (0, 3, 2)]
    return Mesh(np.asarray(vertices, dtype=float), np.asarray(triangles))


class TestBuildBvh:
    def test_single_triangle_is_one_leaf(self):
        mesh = Mesh(np.eye(3), np.array([[0, 1, 2]]))
        bvh = build_bvh(mesh)
        assert bvh.node_count_total == 1
        assert bvh.node_count[0] == 1
        assert bvh.node_left[0] == -1 and bvh.node_right[0] == -1
        assert bvh.triangle_count == 1

    def test_no_triangles_rejected(self):
        with pytest.raises(ValueError):
            build_bvh(Mesh(np.eye(3), np.zeros((0, 3), dtype=int)))

    def test_leaf_size_respected_and_triangles_partitioned(self):
        mesh = torus(12, 9)
        bvh = build_bvh(mesh)
        leaves = bvh.node_count > 0
        assert (bvh.node_count[leaves] <= LEAF_SIZE).all()
        assert bvh.node_count[leaves].sum() == mesh.triangle_count
        assert sorted(bvh.tri_index.tolist()) == list(range(mesh.triangle_count))

    def test_child_boxes_inside_parent(self):
        mesh = torus(10, 8)
        bvh = build_bvh(mesh)
        for node in range(bvh.node_count_total):
            for child in (bvh.node_left[node], bvh.node_right[node]):
                if child >= 0:
                    assert (bvh.node_lo[child] >= bvh.node_lo[node] - 1e-12).all()
                    assert (bvh.node_hi[child] <= bvh.node_hi[node] + 1e-12).all()

    def test_leaf_boxes_contain_their_triangles(self):
        mesh = torus(10, 8)
        bvh = build_bvh(mesh)
        for node in np.nonzero(bvh.node_count > 0)[0]:
            sl = slice(bvh.node_start[node], bvh.node_start[node] + bvh.node_count[node])
            pts = np.concatenate([bvh.tri_v0[sl], bvh.tri_v1[sl], bvh.tri_v2[sl]])
            assert (pts >= bvh.node_lo[node] - 1e-12).all()
            assert (pts <= bvh.node_hi[node] + 1e-12).all()

    def test_coincident_centroids_become_leaf(self):
        # six stacked copies of one triangle share a centroid; split impossible
        base = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
        vertices = np.concatenate([base] * 6)
        triangles = np.arange(18).reshape(6, 3)
        bvh = build_bvh(Mesh(vertices, triangles))
        assert bvh.node_count_total == 1
        assert bvh.node_count[0] == 6


class TestRayOccluded:
    def test_hit_and_miss(self):
        bvh = build_bvh(floor_quad())
        assert ray_occluded(bvh, np.array([0.0, 1, 0]), np.array([0.0, -1, 0]), 1e-6)
        assert not ray_occluded(bvh, np.array([0.0, 1, 0]), np.array([0.0, 1, 0]), 1e-6)

    def test_t_min_skips_near_hits(self):
        bvh = build_bvh(floor_quad())
        origin = np.array([0.0, 0.5, 0.0])
        down = np.array([0.0, -1.0, 0.0])
        assert ray_occluded(bvh, origin, down, 0.25)
        assert not ray_occluded(bvh, origin, down, 0.75)

    def test_axis_parallel_ray_outside_slab(self):
        bvh = build_bvh(floor_quad())
        origin = np.array([5.0, 1.0, 0.0])
        assert not ray_occluded(bvh, origin, np.array([0.0, -1.0, 0.0]), 1e-6)

    def test_shared_edge_is_watertight(self):
        # straight through the quad's diagonal edge
        bvh = build_bvh(floor_quad())
        assert ray_occluded(bvh, np.array([0.0, 1.0, 0.0]), np.array([0.0, -1.0, 0.0]), 1e-6)
        for s in np.linspace(-0.99, 0.99, 17):
            origin = np.array([s, 1.0, s])  # diagonal runs x == z
            assert ray_occluded(bvh, origin, np.array([0.0, -1.0, 0.0]), 1e-6)

    def test_agrees_with_brute_force_on_random_rays(self):
        mesh = torus(24, 18)
        bvh = build_bvh(mesh)
        rng = np.random.default_rng(7)
        origins = rng.uniform(-1.8, 1.8, size=(1000, 3))
        directions = rng.normal(size=(1000, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        hits = 0
        for origin, direction in zip(origins, directions):
            got = ray_occluded(bvh, origin, direction, 1e-6)
            want = brute_force_occluded(mesh, origin, direction, 1e-6)
            assert got == want
            hits += got
        assert 0 < hits < 1000

    def test_visits_small_fraction_of_triangles(self):
        mesh = torus(72, 70)  # 10080 triangles
        bvh = build_bvh(mesh)
        rng = np.random.default_rng(3)
        origins = rng.uniform(-1.6, 1.6, size=(200, 3))
        directions = rng.normal(size=(200, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        stats = {}
        for origin, direction in zip(origins, directions):
            ray_occluded(bvh, origin, direction, 1e-6, stats=stats)
        mean_tests = stats["triangle_tests"] / 200.0
        assert mean_tests < 0.05 * mesh.triangle_count


def unit_samples(sqrt_count, seed=11):
    return generate_samples(sqrt_count, seed=seed)


class TestTransferUnshadowed:
    def test_needs_normals_and_full_sphere(self):
        mesh = floor_quad()
        with pytest.raises(ValueError, match="normals"):
            transfer_unshadowed(mesh, unit_samples(10))
        mesh = compute_normals(mesh)
        with pytest.raises(ValueError, match="sphere"):
            transfer_unshadowed(mesh, generate_samples(10, seed=1, mode="hemisphere"))

    def test_upward_facet_matches_analytic_projection(self):
        # clamped cosine about +y: DC 0.2821, linear +y term 0.3257
        mesh = compute_normals(plane(2, 2))
        samples = unit_samples(80, seed=5)
        tm = transfer_unshadowed(mesh, samples)
        assert tm.rows.shape == (4, 27)
        dc = tm.rows[:, 0]
        assert np.allclose(dc, 0.282095, rtol=0.02)
        y_linear = tm.rows[:, 3 * 1]  # basis order within band 1 is (y, z, x)
        assert np.allclose(y_linear, 0.325735, rtol=0.02)
        # remaining band-1 terms vanish by symmetry
        assert np.abs(tm.rows[:, [6, 9]]).max() < 0.01

    def test_channels_scale_with_albedo(self):
        mesh = compute_normals(plane(3, 3))
        samples = unit_samples(30)
        white = transfer_unshadowed(mesh, samples)
        tinted = Mesh(
            mesh.vertices,
            mesh.triangles,
            normals=mesh.normals,
            albedo=np.tile([1.0, 0.5, 0.0], (mesh.vertex_count, 1)),
        )
        tm = transfer_unshadowed(tinted, samples)
        assert np.array_equal(tm.rows[:, 0::3], white.rows[:, 0::3])
        assert np.array_equal(tm.rows[:, 1::3], 0.5 * white.rows[:, 1::3])
        assert np.array_equal(tm.rows[:, 2::3], np.zeros_like(white.rows[:, 2::3]))

    def test_doubling_albedo_doubles_rows_exactly(self):
        mesh = torus(8, 6)
        samples = unit_samples(20)
        one = transfer_unshadowed(mesh, samples)
        double = Mesh(
            mesh.vertices,
            mesh.triangles,
            normals=mesh.normals,
            albedo=np.full((mesh.vertex_count, 3), 2.0),
        )
        two = transfer_unshadowed(double, samples)
        assert np.array_equal(two.rows, 2.0 * one.rows)

    def test_metadata(self):
        mesh = compute_normals(plane(2, 2))
        samples = unit_samples(12, seed=3)
        tm = transfer_unshadowed(mesh, samples)
        assert tm.sample_count == 144
        assert tm.mode == "sphere"
        assert not tm.shadowed
        assert tm.source == "oracle"


class TestTransferShadowed:
    def test_matches_unshadowed_when_nothing_blocks(self):
        # a single open facet cannot shadow itself from offset origins
        mesh = compute_normals(plane(2, 2))
        bvh = build_bvh(mesh)
        samples = unit_samples(20, seed=9)
        free = transfer_unshadowed(mesh, samples)
        shadowed = transfer_shadowed(mesh, bvh, samples, workers=1)
        np.testing.assert_allclose(shadowed.rows, free.rows, atol=1e-12)
        assert shadowed.shadowed

    def test_closed_box_interior_is_fully_dark(self):
        # every ray off a wall's interior crosses the room and hits a far wall
        vertices, tris = box_room_mesh(segments=3)
        mesh = compute_normals(Mesh(vertices, tris))
        bvh = build_bvh(mesh)
        samples = unit_samples(15, seed=2)
        free = transfer_unshadowed(mesh, samples)
        dark = transfer_shadowed(mesh, bvh, samples, workers=2)
        assert (dark.rows[:, 0] <= free.rows[:, 0] + 1e-12).all()
        # vertices on cube edges sit on two wall planes, so grazing rays can
        # slip out within the self-intersection offset; interior ones cannot
        interior = (np.abs(np.abs(vertices) - 1.0) < 1e-12).sum(axis=1) == 1
        assert interior.sum() == 24
        assert np.abs(dark.rows[interior]).max() == 0.0
        assert dark.rows[:, 0].mean() < 0.5 * free.rows[:, 0].mean()

    def test_dc_never_exceeds_unshadowed(self):
        mesh = torus(16, 12)
        bvh = build_bvh(mesh)
        samples = unit_samples(15, seed=4)
        free = transfer_unshadowed(mesh, samples)
        dark = transfer_shadowed(mesh, bvh, samples, workers=2)
        assert (dark.rows[:, 0] <= free.rows[:, 0] + 1e-12).all()
        # inner-ring vertices see the tube across the hole: strictly darker
        assert dark.rows[:, 0].min() < free.rows[:, 0].min() - 1e-6

    def test_blocker_darkens_center_but_not_rim(self):
        floor_vertices, floor_tris = grid_plane_mesh(5, 5, extent=2.0)
        hover = 0.25
        blocker = np.array(
            [
                [-0.25, hover, -0.25],
                [0.25, hover, -0.25],
                [0.25, hover, 0.25],
                [-0.25, hover, 0.25],
            ]
        )
        vertices = np.concatenate([floor_vertices, blocker])
        base = len(floor_vertices)
        triangles = np.concatenate(
            [
                floor_tris,
                np.array([[base, base + 2, base + 1], [base, base + 3, base + 2]]),
            ]
        )
        normals = np.concatenate(
            [np.tile([0.0, 1.0, 0.0], (base, 1)), np.tile([0.0, -1.0, 0.0], (4, 1))]
        )
        mesh = Mesh(vertices, triangles, normals=normals)
        bvh = build_bvh(mesh)
        samples = unit_samples(70, seed=6)
        free = transfer_unshadowed(mesh, samples)
        dark = transfer_shadowed(mesh, bvh, samples, workers=2)

        center = 12  # (0, 0, 0) in the 5x5 grid
        corners = [0, 4, 20, 24]
        drop = 1.0 - dark.rows[center, 0] / free.rows[center, 0]
        assert drop > 0.3
        for corner in corners:
            rim_drop = 1.0 - dark.rows[corner, 0] / free.rows[corner, 0]
            assert rim_drop < 0.02

    def test_worker_count_does_not_change_bits(self):
        mesh = torus(10, 8)
        bvh = build_bvh(mesh)
        samples = unit_samples(10, seed=8)
        solo = transfer_shadowed(mesh, bvh, samples, workers=1)
        pooled = transfer_shadowed(mesh, bvh, samples, workers=8)
        assert np.array_equal(solo.rows, pooled.rows)

    def test_worker_count_resolution(self, monkeypatch):
        assert worker_count(3) == 3
        monkeypatch.setenv("NGASH_THREADS", "5")
        assert worker_count() == 5
        monkeypatch.setenv("NGASH_THREADS", "zero")
        with pytest.raises(ValueError, match="NGASH_THREADS"):
            worker_count()
        monkeypatch.delenv("NGASH_THREADS")
        assert worker_count() >= 1


class TestTransferFile:
    def roundtrip(self, tmp_path, tm):
        path = tmp_path / "transfer.txt"
        save_transfer(path, tm)
        return load_transfer(path)

    def test_round_trip_is_exact(self, tmp_path):
        mesh = torus(6, 5)
        tm = transfer_unshadowed(mesh, unit_samples(9, seed=1))
        back = self.roundtrip(tmp_path, tm)
        assert np.array_equal(back.rows, tm.rows)
        assert back.bands == tm.bands
        assert back.sample_count == tm.sample_count
        assert back.mode == tm.mode
        assert back.shadowed == tm.shadowed
        assert back.source == tm.source

    def test_row_count_check(self, tmp_path):
        mesh = compute_normals(plane(2, 2))
        tm = transfer_unshadowed(mesh, unit_samples(9, seed=1))
        path = tmp_path / "transfer.txt"
        save_transfer(path, tm)
        assert load_transfer(path, expected_rows=4).vertex_count == 4
        with pytest.raises(IntegrityError, match="expected 9"):
            load_transfer(path, expected_rows=9)

    def test_bad_float_reports_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# bands=3\n" + " ".join(["nope"] * 27) + "\n")
        with pytest.raises(DataFormatError, match="bad.txt:2"):
            load_transfer(path)

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "ragged.txt"
        good = " ".join(["0.0"] * 27)
        path.write_text(good + "\n" + " ".join(["0.0"] * 26) + "\n")
        with pytest.raises(DataFormatError, match="ragged.txt:2"):
            load_transfer(path)

    def test_wrong_width_rejected(self, tmp_path):
        path = tmp_path / "narrow.txt"
        path.write_text(" ".join(["0.0"] * 12) + "\n")
        with pytest.raises(DataFormatError, match="12 values"):
            load_transfer(path)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("# bands=3\n")
        with pytest.raises(DataFormatError, match="no coefficient rows"):
            load_transfer(path)

    def test_blade_hash_mismatch_rejected(self, tmp_path):
        path = tmp_path / "stale.txt"
        path.write_text("# blade_hash=deadbeef00000000\n" + " ".join(["0.0"] * 27) + "\n")
        with pytest.raises(IntegrityError, match="blade-order hash"):
            load_transfer(path)

    def test_matching_hash_accepted(self, tmp_path):
        path = tmp_path / "fresh.txt"
        path.write_text(
            f"# blade_hash={cga.BLADE_ORDER_HASH}\n" + " ".join(["1.5"] * 27) + "\n"
        )
        tm = load_transfer(path)
        assert tm.rows.shape == (1, 27)

    def test_non_finite_rows_rejected(self):
        bad = np.zeros((2, 27))
        bad[1, 5] = np.inf
        with pytest.raises(ValueError, match="finite"):
            TransferMatrix(rows=bad)

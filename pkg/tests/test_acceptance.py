"""Whole-package acceptance gate: one test per headline guarantee.

Each test prints a [PASS]/[FAIL] line with the measured numbers so a
verbose run reads as a checklist, and asserts the stated tolerances and
time budgets.
"""

import json
import time

import numpy as np
import pytest

from ngash import cga, cli, dataset, neural, prt, sh, shading
from ngash.lightprobe import RadianceMap, load_hdr, project_light
from ngash.mesh import Mesh, compute_normals
from support import box_room_mesh, texel_directions, torus_mesh, write_hdr, write_obj


def report(name, passed, detail):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def make_mesh(builder, *args):
    vertices, triangles = builder(*args)
    return compute_normals(Mesh(vertices=vertices, triangles=triangles))


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


def test_shading_formula_matches_reference_and_identity():
    started = time.monotonic()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        rows = rng.uniform(0.0, 300.0, size=(12, 27))
        light = rng.standard_normal((9, 3))
        intensity = float(rng.uniform(0.1, 400.0))
        tm = prt.TransferMatrix(rows=rows)
        got = shading.shade(tm, sh.LightCoefficients(light), intensity=intensity)
        want = np.zeros((12, 3))
        for i in range(12):
            for k in range(3):
                acc = 0.0
                for j in range(9):
                    acc += rows[i, 3 * j + k] * light[j, k]
                want[i, k] = intensity * (1.0 / 255.0) * acc
        worst = max(worst, float(np.abs(got - want).max()))

    identity = shading.shade(
        prt.TransferMatrix(rows=np.full((6, 27), 255.0)),
        sh.LightCoefficients(np.full((9, 3), 1.0 / 9.0)),
        intensity=1.0,
    )
    exact = np.array_equal(identity, np.ones((6, 3)))
    elapsed = time.monotonic() - started

    passed = worst < 1e-12 and exact and elapsed < 1.0
    report(
        "shading formula", passed,
        f"max|delta|={worst:.2e} identity_exact={exact} elapsed={elapsed:.2f}s",
    )
    assert worst < 1e-12
    assert exact
    assert elapsed < 1.0


def test_light_projection_matches_analytic_probes(tmp_path):
    started = time.monotonic()
    samples = sh.generate_samples(100, seed=0)  # 10^4 directions

    constant = project_light(RadianceMap(np.ones((8, 16, 3))), samples)
    c0 = 2.0 * np.sqrt(np.pi)
    dc_err = float(np.abs(constant.values[0] - c0).max())
    rest = float(np.abs(constant.values[1:]).max())

    dirs = texel_directions(128, 256)
    lobe = np.maximum(0.0, dirs[..., 2])
    write_hdr(tmp_path / "lobe.hdr", np.repeat(lobe[..., None], 3, axis=2))
    cosine = project_light(load_hdr(tmp_path / "lobe.hdr"), samples)
    dc_ref = np.pi * 0.28209479177387814
    z_ref = np.sqrt(3.0 / (4.0 * np.pi)) * 2.0 * np.pi / 3.0
    dc_rel = float(abs(cosine.values[0, 0] - dc_ref) / dc_ref)
    z_rel = float(abs(cosine.values[2, 0] - z_ref) / z_ref)
    elapsed = time.monotonic() - started

    passed = dc_err < 0.01 and rest < 0.02 and dc_rel < 0.02 and z_rel < 0.02 and elapsed < 5.0
    report(
        "light projection", passed,
        f"constant_dc_err={dc_err:.4f} other_max={rest:.4f}"
        f" cosine_dc_rel={dc_rel:.4f} cosine_band1_rel={z_rel:.4f} elapsed={elapsed:.2f}s",
    )
    assert dc_err < 0.01
    assert rest < 0.02
    assert dc_rel < 0.02
    assert z_rel < 0.02
    assert elapsed < 5.0


def test_sh_rotation_against_reprojection_oracle():
    started = time.monotonic()
    rng = np.random.default_rng(202)
    samples = sh.generate_samples(100, seed=9)
    basis = samples.sh_values
    weight = samples.solid_angle_weight
    light = sh.LightCoefficients(0.4 * rng.standard_normal((9, 3)))

    worst_coeff = 0.0
    worst_norm = 0.0
    worst_comp = 0.0
    for _ in range(20):
        q = cga.Quaternion(*rng.standard_normal(4)).normalized()
        rotated = sh.rotate_sh(light, q)

        # oracle: evaluate the rotated function pointwise and reproject
        rot = q.to_matrix()
        inverse_dirs = samples.directions @ rot  # rows are R^-1 d
        values = sh.eval_sh_basis(inverse_dirs) @ light.values
        reprojected = weight * (basis.T @ values)
        worst_coeff = max(worst_coeff, float(np.abs(rotated.values - reprojected).max()))

        for l in range(3):
            lo, hi = l * l, (l + 1) * (l + 1)
            diff = np.abs(
                np.linalg.norm(rotated.values[lo:hi], axis=0)
                - np.linalg.norm(light.values[lo:hi], axis=0)
            )
            worst_norm = max(worst_norm, float(diff.max()))

        q2 = cga.Quaternion(*rng.standard_normal(4)).normalized()
        twice = sh.rotate_sh(rotated, q2)
        composed = sh.rotate_sh(light, q2 * q)
        worst_comp = max(worst_comp, float(np.abs(twice.values - composed.values).max()))
    elapsed = time.monotonic() - started

    passed = worst_coeff < 3e-3 and worst_norm < 1e-6 and worst_comp < 1e-6 and elapsed < 30.0
    report(
        "SH rotation", passed,
        f"oracle_max={worst_coeff:.2e} norm_drift={worst_norm:.2e}"
        f" composition_max={worst_comp:.2e} elapsed={elapsed:.2f}s",
    )
    assert worst_coeff < 3e-3
    assert worst_norm < 1e-6
    assert worst_comp < 1e-6
    assert elapsed < 30.0


def test_motor_algebra_guarantees():
    started = time.monotonic()
    rng = np.random.default_rng(303)
    worst_unit = 0.0
    worst_sandwich = 0.0
    worst_translate = 0.0
    worst_frame = 0.0
    identity = np.zeros(32)
    identity[0] = 1.0
    for _ in range(100):
        v = rng.standard_normal(3) * 2.0
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        q = cga.Quaternion(*rng.standard_normal(4)).normalized()
        t = rng.standard_normal(3)

        motor = cga.encode_vertex_normal(v, n)
        unit = cga.geometric_product(motor, cga.reverse(motor))
        worst_unit = max(worst_unit, float(np.abs(unit.values - identity).max()))

        x = rng.standard_normal(3)
        rotor = cga.rotor_from_quaternion(q)
        sandwiched = cga.apply_versor(rotor, cga.euclidean_vector(x))
        worst_sandwich = max(
            worst_sandwich,
            float(np.abs(np.array(sandwiched.values[1:4]) - q.rotate(x)).max()),
        )

        moved = cga.apply_versor(cga.translator(t), cga.conformal_point(x))
        back = cga.apply_versor(cga.translator(-t), moved)
        worst_translate = max(
            worst_translate,
            float(np.abs(cga.point_to_euclidean(moved) - (x + t)).max()),
            float(np.abs(cga.point_to_euclidean(back) - x).max()),
        )

        # rigid equivariance up to the free twist about the normal:
        # compare frame actions, not motor components
        rigid = cga.geometric_product(cga.translator(t), rotor)
        direct = cga.encode_vertex_normal(q.rotate(v) + t, q.rotate(n))
        composed = cga.geometric_product(rigid, motor)
        for m in (direct, composed):
            assert np.abs(
                cga.geometric_product(m, cga.reverse(m)).values - identity
            ).max() < 1e-9
        pos_a = cga.point_to_euclidean(
            cga.apply_versor(direct, cga.conformal_point((0.0, 0.0, 0.0)))
        )
        pos_b = cga.point_to_euclidean(
            cga.apply_versor(composed, cga.conformal_point((0.0, 0.0, 0.0)))
        )
        dir_a = np.array(cga.apply_versor(direct, cga.basis_vector("e2")).values[1:4])
        dir_b = np.array(cga.apply_versor(composed, cga.basis_vector("e2")).values[1:4])
        worst_frame = max(
            worst_frame,
            float(np.abs(pos_a - pos_b).max()),
            float(np.abs(dir_a - dir_b).max()),
        )
    elapsed = time.monotonic() - started

    passed = (
        worst_unit < 1e-9 and worst_sandwich < 1e-9
        and worst_translate < 1e-9 and worst_frame < 1e-9 and elapsed < 5.0
    )
    report(
        "motor algebra", passed,
        f"unit={worst_unit:.2e} sandwich={worst_sandwich:.2e}"
        f" translate={worst_translate:.2e} equivariance={worst_frame:.2e}"
        f" elapsed={elapsed:.2f}s",
    )
    assert worst_unit < 1e-9
    assert worst_sandwich < 1e-9
    assert worst_translate < 1e-9
    assert worst_frame < 1e-9
    assert elapsed < 5.0


def test_transfer_oracle_analytic_occlusion_and_bvh():
    started = time.monotonic()

    # open facet with +y normals: clamped-cosine projection has closed form
    facet = make_mesh(lambda: ([(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)],
                               [(0, 2, 1), (0, 3, 2)]))
    tm = prt.transfer_unshadowed(facet, sh.generate_samples(100, seed=5))
    dc_rel = float(np.abs(tm.rows[:, 0] / 0.282095 - 1.0).max())
    y_rel = float(np.abs(tm.rows[:, 3] / 0.325735 - 1.0).max())

    # closed box: occlusion can only remove light
    box = make_mesh(box_room_mesh, 2.0, 3)
    samples = sh.generate_samples(20, seed=6)
    free = prt.transfer_unshadowed(box, samples)
    shadowed = prt.transfer_shadowed(box, prt.build_bvh(box), samples)
    dc_gap = float((shadowed.rows[:, 0] - free.rows[:, 0]).max())
    all_darker = bool(np.all(shadowed.rows[:, 0] <= free.rows[:, 0] + 1e-15))

    # tree verdicts equal the exhaustive oracle on random rays
    torus = make_mesh(torus_mesh, 24, 18)
    bvh = prt.build_bvh(torus)
    rng = np.random.default_rng(404)
    span = torus.vertices.max(axis=0) - torus.vertices.min(axis=0)
    eps = 1e-4 * float(np.linalg.norm(span))
    disagreements = 0
    hits = 0
    for _ in range(1000):
        origin = rng.uniform(-1.5, 1.5, size=3)
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        a = prt.ray_occluded(bvh, origin, direction, eps)
        b = brute_force_occluded(torus, origin, direction, eps)
        disagreements += a != b
        hits += a
    elapsed = time.monotonic() - started

    passed = (
        dc_rel < 0.02 and y_rel < 0.02 and all_darker
        and disagreements == 0 and 0 < hits < 1000 and elapsed < 60.0
    )
    report(
        "transfer oracle", passed,
        f"facet_dc_rel={dc_rel:.4f} facet_band1_rel={y_rel:.4f}"
        f" box_max_dc_gap={dc_gap:.2e} ray_disagreements={disagreements}/1000"
        f" elapsed={elapsed:.2f}s",
    )
    assert dc_rel < 0.02
    assert y_rel < 0.02
    assert all_darker
    assert disagreements == 0
    assert 0 < hits < 1000
    assert elapsed < 60.0


def test_neural_field_gradients_overfit_memorization_roundtrip(tmp_path):
    started = time.monotonic()

    # finite differences over every parameter of a small architecture
    rng = np.random.default_rng(505)
    weights = neural.init_model(seed=2, dims=(6, 8, 7, 5), dropout=(0.2, 0.1))
    x = rng.standard_normal((5, 6))
    targets = rng.standard_normal((5, 5))
    loss0, grads, _ = neural.loss_and_gradients(weights, x, targets, seed=3)
    h = 1e-5
    worst_fd = 0.0
    classes = set()
    for kind, per_layer in grads.items():
        classes.add(kind)
        for idx, grad in enumerate(per_layer):
            flat = neural._param(weights, (kind, idx)).reshape(-1)
            gflat = np.asarray(grad).reshape(-1)
            for j in range(flat.size):
                keep = flat[j]
                flat[j] = keep + h
                up, _, _ = neural.loss_and_gradients(weights, x, targets, seed=3)
                flat[j] = keep - h
                down, _, _ = neural.loss_and_gradients(weights, x, targets, seed=3)
                flat[j] = keep
                fd = (up - down) / (2.0 * h)
                # 1e-6 floor: a shift ahead of a norm stage has an exactly
                # zero gradient, so both sides are rounding noise there
                rel = abs(fd - gflat[j]) / max(abs(fd), abs(gflat[j]), 1e-6)
                worst_fd = max(worst_fd, rel)
    classes_ok = classes == {"weights", "biases", "gamma", "beta"}

    # 500 full-batch steps memorize 10 vertices of a real mesh
    torus = make_mesh(torus_mesh, 5, 4)
    oracle = prt.transfer_unshadowed(torus, sh.generate_samples(10, seed=2))
    motors = cga.encode_batch(torus.vertices, torus.normals)[:10]
    raw = oracle.rows[:10]
    standardized = (raw - raw.mean(axis=0)) / np.maximum(raw.std(axis=0), 1e-12)
    overfit = neural.init_model(seed=0)
    state = neural.AdamState.for_weights(overfit)
    config = neural.TrainConfig(batch_size=10, epochs=1, seed=0)
    first_loss = None
    last_loss = None
    for step in range(500):
        last_loss = neural.train_step(overfit, state, motors, standardized, config,
                                      step_seed=step)
        if first_loss is None:
            first_loss = last_loss
    drop = 1.0 - last_loss / first_loss

    # one-mesh memorization at full size, then bit-exact weight files
    mesh = make_mesh(torus_mesh, 28, 24)  # 672 vertices
    tm = prt.transfer_unshadowed(mesh, sh.generate_samples(10, seed=2))
    inputs = cga.encode_batch(mesh.vertices, mesh.normals)
    result = neural.train(inputs, tm.rows, neural.TrainConfig(seed=1))
    predicted = neural.predict_mesh(result.best_weights, mesh)
    mse = float(np.mean((predicted.rows - tm.rows) ** 2))

    first = tmp_path / "first.ngw"
    second = tmp_path / "second.ngw"
    neural.save_weights(first, result.best_weights)
    neural.save_weights(second, neural.load_weights(first))
    roundtrip = first.read_bytes() == second.read_bytes()
    elapsed = time.monotonic() - started

    passed = (
        worst_fd < 1e-4 and classes_ok and drop >= 0.9
        and mse < 1e-3 and roundtrip and elapsed < 600.0
    )
    report(
        "neural field", passed,
        f"fd_rel_max={worst_fd:.2e} classes={sorted(classes)} overfit_drop={drop:.3f}"
        f" memorize_mse={mse:.2e} file_roundtrip={roundtrip} elapsed={elapsed:.1f}s",
    )
    assert worst_fd < 1e-4
    assert classes_ok
    assert drop >= 0.9
    assert mse < 1e-3
    assert roundtrip
    assert elapsed < 600.0


def test_speedup_protocol_and_oracle_scaling(tmp_path):
    vertices, triangles = torus_mesh(72, 70)  # 5040 vertices
    write_obj(tmp_path / "bench.obj", vertices, triangles)
    neural.save_weights(tmp_path / "bench.ngw", neural.init_model(seed=0))
    assert cli.main([
        "bench", str(tmp_path / "bench.obj"), str(tmp_path / "bench.ngw"),
        "--samples", "5", "--out", str(tmp_path / "report.json"),
    ]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())

    ladder = []
    samples = sh.generate_samples(2, seed=0)
    for major, minor in ((28, 24), (72, 70), (224, 224)):
        mesh = make_mesh(torus_mesh, major, minor)
        bvh = prt.build_bvh(mesh)
        t0 = time.monotonic()
        prt.transfer_shadowed(mesh, bvh, samples)
        ladder.append((mesh.vertex_count, time.monotonic() - t0))

    monotone = ladder[0][1] < ladder[1][1] < ladder[2][1]
    passed = (
        rep["vertices"] >= 5000 and rep["samples"] == 25
        and rep["speedup"] > 50.0 and monotone
    )
    rungs = " ".join(f"{n}v:{t:.2f}s" for n, t in ladder)
    report(
        "speedup protocol", passed,
        f"oracle={rep['oracle_seconds']:.2f}s predict={rep['predict_seconds']:.3f}s"
        f" speedup={rep['speedup']:.1f}x ladder=[{rungs}]",
    )
    assert rep["vertices"] >= 5000
    assert rep["samples"] == 25
    assert rep["speedup"] > 50.0
    assert monotone


def test_pipeline_determinism(tmp_path, monkeypatch):
    vertices, triangles = torus_mesh(12, 10)
    write_obj(tmp_path / "mesh.obj", vertices, triangles)
    write_hdr(tmp_path / "probe.hdr", np.ones((8, 16, 3)))
    mesh_dir = tmp_path / "meshes"
    mesh_dir.mkdir()
    write_obj(mesh_dir / "a.obj", vertices, triangles)
    dataset.generate(mesh_dir, tmp_path / "data",
                     dataset.DatasetConfig(sqrt_samples=5, seed=3, shadowed=False))

    mismatches = []

    def run_twice(label, argv_for, env_pair=None):
        blobs = []
        for i, tag in enumerate(("one", "two")):
            if env_pair is not None:
                monkeypatch.setenv("NGASH_THREADS", env_pair[i])
            out = tmp_path / f"{label}.{tag}"
            assert cli.main(argv_for(out)) == 0
            blobs.append(out.read_bytes())
        if env_pair is not None:
            monkeypatch.delenv("NGASH_THREADS")
        if blobs[0] != blobs[1]:
            mismatches.append(label)
        return tmp_path / f"{label}.one"

    coeffs = run_twice(
        "oracle",
        lambda out: ["precompute", str(tmp_path / "mesh.obj"), "--samples", "5",
                     "--shadowed", "--seed", "4", "--out", str(out)],
        env_pair=("1", "8"),
    )
    light = run_twice(
        "light",
        lambda out: ["project-light", str(tmp_path / "probe.hdr"), "--samples", "40",
                     "--seed", "7", "--out", str(out)],
    )
    run_twice(
        "rotated",
        lambda out: ["rotate-light", str(light), "--quat", "0.8", "0.6", "0", "0",
                     "--out", str(out)],
    )
    weights = run_twice(
        "weights",
        lambda out: ["train", str(tmp_path / "data" / "manifest.txt"),
                     "--epochs", "3", "--batch-size", "32", "--seed", "5",
                     "--out", str(out)],
    )
    run_twice(
        "predicted",
        lambda out: ["predict", str(weights), str(tmp_path / "mesh.obj"),
                     "--out", str(out)],
    )
    run_twice(
        "colors",
        lambda out: ["shade", str(coeffs), str(light), "--out", str(out)],
    )
    run_twice(
        "bundle",
        lambda out: ["export-bundle", str(tmp_path / "mesh.obj"),
                     "--weights", str(weights), "--coeffs", str(coeffs),
                     "--light", f"probe={light}", "--out", str(out)],
    )

    # measurement reports carry wall times; their numeric results must agree
    reports = []
    for tag in ("one", "two"):
        out = tmp_path / f"report.{tag}"
        assert cli.main(["bench", str(tmp_path / "mesh.obj"), str(weights),
                         "--samples", "3", "--out", str(out)]) == 0
        reports.append(json.loads(out.read_text()))
    if (reports[0]["mse"], reports[0]["std"]) != (reports[1]["mse"], reports[1]["std"]):
        mismatches.append("bench-results")

    passed = not mismatches
    report("determinism", passed,
           "all byte-identical" if passed else f"mismatched: {mismatches}")
    assert not mismatches

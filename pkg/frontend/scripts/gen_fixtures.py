"""Regenerate the committed parity fixtures in test/fixtures/.

Runs the Python pipeline to produce the expected values the viewer tests
compare against: a complete serve bundle, motor encodings, rotated light
sets, a deformed-frame prediction, and shaded colors.  Everything is
seeded, so reruns rewrite identical files.

Usage: python3 frontend/scripts/gen_fixtures.py
"""

import base64
import json
import math
import tempfile
from pathlib import Path

import numpy as np

from ngash import cga, cli, lightprobe, mesh, neural, prt, sh, shading

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"

# Must match DEFORM_AMPLITUDE / DEFORM_FREQUENCY in src/mesh.ts.
DEFORM_AMPLITUDE = 0.25
DEFORM_FREQUENCY = 3.0


def torus(rings=8, sides=6, major=1.0, minor=0.4):
    vertices = []
    for i in range(rings):
        theta = 2 * math.pi * i / rings
        for j in range(sides):
            phi = 2 * math.pi * j / sides
            ring = major + minor * math.cos(phi)
            vertices.append(
                (ring * math.cos(theta), minor * math.sin(phi), ring * math.sin(theta))
            )
    triangles = []
    for i in range(rings):
        for j in range(sides):
            a = i * sides + j
            b = ((i + 1) % rings) * sides + j
            c = i * sides + (j + 1) % sides
            d = ((i + 1) % rings) * sides + (j + 1) % sides
            triangles.append((a, b, d))
            triangles.append((a, d, c))
    return mesh.Mesh(vertices=np.array(vertices), triangles=np.array(triangles))


def deform(vertices, phase):
    out = np.array(vertices, dtype=np.float64)
    gain = DEFORM_AMPLITUDE * math.sin(2 * math.pi * phase)
    out[:, 1] += gain * np.sin(DEFORM_FREQUENCY * (out[:, 0] + out[:, 2]))
    return out


def dump(name, payload):
    path = FIXTURES / name
    path.write_text(json.dumps(payload, indent=1), encoding="ascii")
    print(f"wrote {path} ({path.stat().st_size} bytes)")


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    base = mesh.compute_normals(torus())

    # Small but honestly trained weights so batch-norm statistics and the
    # target standardization are all non-trivial in the parity tests.
    samples = sh.generate_samples(6, seed=11)
    oracle = prt.transfer_unshadowed(base, samples)
    motors = cga.encode_batch(base.vertices, base.normals)
    config = neural.TrainConfig(batch_size=16, epochs=60, seed=4, val_fraction=0.15)
    result = neural.train(
        motors, oracle.rows, config=config, dims=(32, 24, 16, 27), dropout=(0.1, 0.1)
    )
    weights = result.best_weights
    with tempfile.NamedTemporaryFile(suffix=".weights") as handle:
        neural.save_weights(handle.name, weights)
        weights_bytes = Path(handle.name).read_bytes()

    predicted = neural.predict_mesh(weights, base)

    white = lightprobe.project_light(
        lightprobe.RadianceMap(np.ones((8, 16, 3))), sh.generate_samples(40, seed=7)
    )
    rng = np.random.default_rng(21)
    lobe_values = rng.normal(0.0, 0.15, (9, 3))
    lobe_values[0] += 1.2
    lobe = sh.LightCoefficients(lobe_values)

    metadata = {
        "intensity": 255,
        "transfer_source": predicted.source,
        "sample_count": predicted.sample_count,
        "shadowed": bool(predicted.shadowed),
    }
    bundle = cli.build_bundle(
        base, weights_bytes, predicted, [("white", white), ("lobe", lobe)], metadata
    )
    dump("bundle.json", bundle)

    case_rng = np.random.default_rng(33)
    positions = case_rng.uniform(-2.0, 2.0, (12, 3))
    normals = case_rng.normal(0.0, 1.0, (12, 3))
    normals[8] = (0.0, 1.0, 0.0)
    normals[9] = (0.0, -1.0, 0.0)
    normals[10] = (0.0, 0.0, 0.0)
    normals[11] = (0.0, 3.0, 0.0)
    dump(
        "motors.json",
        {
            "positions": positions.tolist(),
            "normals": normals.tolist(),
            "expected": cga.encode_batch(positions, normals).tolist(),
        },
    )

    quat_rng = np.random.default_rng(55)
    cases = []
    for _ in range(20):
        raw = quat_rng.normal(0.0, 1.0, 4)
        q = cga.Quaternion(*raw).normalized()
        rotated = sh.rotate_sh(lobe, q)
        cases.append(
            {"quat": [q.w, q.x, q.y, q.z], "expected": rotated.values.tolist()}
        )
    q1 = cga.Quaternion(*quat_rng.normal(0.0, 1.0, 4)).normalized()
    q2 = cga.Quaternion(*quat_rng.normal(0.0, 1.0, 4)).normalized()
    composed = sh.rotate_sh(lobe, q2 * q1)
    dump(
        "rotation.json",
        {
            "light": lobe.values.tolist(),
            "cases": cases,
            "composition": {
                "first": [q1.w, q1.x, q1.y, q1.z],
                "second": [q2.w, q2.x, q2.y, q2.z],
                "expected": composed.values.tolist(),
            },
        },
    )

    phase = 0.3
    bent = mesh.compute_normals(
        mesh.Mesh(vertices=deform(base.vertices, phase), triangles=base.triangles)
    )
    dump(
        "forward.json",
        {
            "phase": phase,
            "amplitude": DEFORM_AMPLITUDE,
            "frequency": DEFORM_FREQUENCY,
            "deformed_vertices": bent.vertices.tolist(),
            "deformed_normals": bent.normals.tolist(),
            "deformed_rows": neural.predict_mesh(weights, bent).rows.tolist(),
            "undeformed_rows": predicted.rows.tolist(),
        },
    )

    shade_quat = cga.Quaternion(0.4, 0.1, -0.8, 0.3).normalized()
    shade_light = sh.rotate_sh(lobe, shade_quat)
    colors = shading.shade(predicted, shade_light, intensity=510.0)
    dump(
        "shade.json",
        {
            "quat": [shade_quat.w, shade_quat.x, shade_quat.y, shade_quat.z],
            "light": shade_light.values.tolist(),
            "intensity": 510.0,
            "expected": colors.tolist(),
        },
    )

    digest = base64.b64decode(bundle["weights_base64"])
    print(f"weights container: {len(digest)} bytes, dims {weights.dims}")


if __name__ == "__main__":
    main()

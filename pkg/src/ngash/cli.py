"""Command-line pipeline driver.

Exit codes: 0 success, 1 usage, 2 bad or inconsistent data (format,
integrity, contract violations, missing files), 3 runtime failures
(diverged training, socket errors, unexpected faults).  NGASH_THREADS
caps oracle worker parallelism.  Reported core times exclude file I/O;
the inclusive figure is printed alongside.
"""

import argparse
import base64
import json
import sys
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import cga, dataset, neural, prt, sh, shading
from .errors import DataFormatError, IntegrityError
from .lightprobe import load_hdr, project_light
from .mesh import compute_normals, load_obj


def _load_mesh(path):
    mesh = load_obj(path)
    if not mesh.has_normals:
        mesh = compute_normals(mesh)
    return mesh


def _print_timing(label, core, total):
    print(f"{label}: {core:.3f} s (total {total:.3f} s including I/O)")


def cmd_precompute(args):
    total0 = time.monotonic()
    mesh = _load_mesh(args.mesh)
    samples = sh.generate_samples(args.samples, seed=args.seed, mode=args.mode)
    core0 = time.monotonic()
    if args.shadowed:
        tm = prt.transfer_shadowed(mesh, prt.build_bvh(mesh), samples)
    else:
        tm = prt.transfer_unshadowed(mesh, samples)
    core = time.monotonic() - core0
    prt.save_transfer(args.out, tm)
    kind = "shadowed" if args.shadowed else "unshadowed"
    print(f"wrote {args.out}: {tm.vertex_count} vertices, {samples.count} samples, {kind}")
    _print_timing("oracle time", core, time.monotonic() - total0)
    return 0


def cmd_project_light(args):
    total0 = time.monotonic()
    probe = load_hdr(args.hdr)
    samples = sh.generate_samples(args.samples, seed=args.seed)
    core0 = time.monotonic()
    light = project_light(probe, samples)
    core = time.monotonic() - core0
    sh.save_light_coefficients(args.out, light)
    print(f"wrote {args.out}: {light.values.shape[0]} coefficient rows")
    _print_timing("projection time", core, time.monotonic() - total0)
    return 0


def _band_norms(values):
    bands = int(round(np.sqrt(values.shape[0])))
    return [float(np.linalg.norm(values[l * l : (l + 1) * (l + 1)])) for l in range(bands)]


def cmd_rotate_light(args):
    light = sh.load_light_coefficients(args.coeffs)
    q = cga.Quaternion(*args.quat)
    norm = float(np.sqrt(q.w**2 + q.x**2 + q.y**2 + q.z**2))
    if abs(norm - 1.0) > 1e-3:
        raise ValueError(
            f"quaternion norm {norm:.6f} is not unit; normalize it before rotating"
        )
    rotated = sh.rotate_sh(light, q.normalized())
    before = " ".join(f"{n:.6f}" for n in _band_norms(light.values))
    after = " ".join(f"{n:.6f}" for n in _band_norms(rotated.values))
    print(f"band norms before: {before}")
    print(f"band norms after:  {after}")
    sh.save_light_coefficients(args.out, rotated)
    print(f"wrote {args.out}")
    return 0


def cmd_train(args):
    total0 = time.monotonic()
    inputs, targets = dataset.load_pairs(args.manifest)
    config = neural.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        val_fraction=args.val_fraction,
    )
    core0 = time.monotonic()
    result = neural.train(inputs, targets, config)
    core = time.monotonic() - core0
    neural.save_weights(args.out, result.best_weights)
    best_val = min(result.history["val_mse"])
    print(f"trained on {inputs.shape[0]} pairs for {config.epochs} epochs")
    print(f"final train MSE {result.history['train_mse'][-1]:.6e}")
    print(f"best validation MSE {best_val:.6e} (saved to {args.out})")
    _print_timing("training time", core, time.monotonic() - total0)
    return 0


def cmd_predict(args):
    total0 = time.monotonic()
    weights = neural.load_weights(args.weights)
    mesh = _load_mesh(args.mesh)
    core0 = time.monotonic()
    tm = neural.predict_mesh(weights, mesh)
    core = time.monotonic() - core0
    prt.save_transfer(args.out, tm)
    print(f"wrote {args.out}: {tm.vertex_count} predicted rows")
    _print_timing("inference time", core, time.monotonic() - total0)
    return 0


def cmd_shade(args):
    total0 = time.monotonic()
    tm = prt.load_transfer(args.coeffs)
    light = sh.load_light_coefficients(args.light)
    core0 = time.monotonic()
    colors = shading.shade(tm, light, intensity=args.intensity, coeff_scale=args.coeff_scale)
    core = time.monotonic() - core0
    shading.save_vertex_colors(args.out, colors)
    print(f"wrote {args.out}: {colors.shape[0]} vertex colors")
    if args.ppm:
        mesh = _load_mesh(args.mesh)
        image = shading.render_preview(mesh, colors, size=args.preview_size)
        shading.write_ppm(args.ppm, image)
        print(f"wrote {args.ppm}: {args.preview_size}x{args.preview_size} preview")
    _print_timing("shading time", core, time.monotonic() - total0)
    return 0


def cmd_bench(args):
    mesh = _load_mesh(args.mesh)
    weights = neural.load_weights(args.weights)
    samples = sh.generate_samples(args.samples, seed=args.seed)

    core0 = time.monotonic()
    oracle = prt.transfer_shadowed(mesh, prt.build_bvh(mesh), samples)
    oracle_seconds = time.monotonic() - core0

    core0 = time.monotonic()
    predicted = neural.predict_mesh(weights, mesh)
    predict_seconds = time.monotonic() - core0

    residuals = predicted.rows - oracle.rows
    report = {
        "vertices": mesh.vertex_count,
        "samples": samples.count,
        "oracle_seconds": oracle_seconds,
        "predict_seconds": predict_seconds,
        "speedup": oracle_seconds / predict_seconds,
        "mse": float(np.mean(residuals * residuals)),
        "std": float(np.std(residuals)),
    }
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="ascii")
    return 0


def _parse_light_specs(specs):
    lights = []
    seen = set()
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise ValueError(f"light spec {spec!r} must look like NAME=path.txt")
        if name in seen:
            raise ValueError(f"duplicate light set name {name!r}")
        seen.add(name)
        lights.append((name, path))
    return lights


def build_bundle(mesh, weights_bytes, transfer, lights, metadata):
    problems = []
    if transfer.vertex_count != mesh.vertex_count:
        problems.append(
            f"transfer has {transfer.vertex_count} rows but mesh has"
            f" {mesh.vertex_count} vertices"
        )
    for name, light in lights:
        if light.values.shape != (9, 3):
            problems.append(
                f"light set {name!r} has shape {light.values.shape}, expected (9, 3)"
            )
    if mesh.normals.shape != mesh.vertices.shape:
        problems.append("mesh is missing per-vertex normals")
    if problems:
        raise IntegrityError("inconsistent bundle inputs:\n  " + "\n  ".join(problems))
    return {
        "format": "ngash-bundle",
        "version": 1,
        "blade_hash": cga.BLADE_ORDER_HASH,
        "metadata": metadata,
        "mesh": {
            "vertices": mesh.vertices.tolist(),
            "normals": mesh.normals.tolist(),
            "triangles": mesh.triangles.tolist(),
        },
        "transfer": transfer.rows.tolist(),
        "lights": [
            {"name": name, "values": light.values.tolist()} for name, light in lights
        ],
        "weights_base64": base64.b64encode(weights_bytes).decode("ascii"),
    }


def cmd_export_bundle(args):
    mesh = _load_mesh(args.mesh)
    weights_bytes = Path(args.weights).read_bytes()
    weights = neural.load_weights(args.weights)  # validates format and blade hash
    if args.coeffs:
        transfer = prt.load_transfer(args.coeffs)
    else:
        transfer = neural.predict_mesh(weights, mesh)
    lights = [
        (name, sh.load_light_coefficients(path))
        for name, path in _parse_light_specs(args.light)
    ]
    metadata = {
        "intensity": args.intensity,
        "transfer_source": transfer.source,
        "sample_count": transfer.sample_count,
        "shadowed": bool(transfer.shadowed),
    }
    bundle = build_bundle(mesh, weights_bytes, transfer, lights, metadata)
    Path(args.out).write_text(json.dumps(bundle), encoding="ascii")
    print(
        f"wrote {args.out}: {mesh.vertex_count} vertices,"
        f" {len(lights)} light sets, source {transfer.source}"
    )
    return 0


class _BundleHandler(BaseHTTPRequestHandler):
    bundle_path = None
    static_dir = None

    def log_message(self, fmt, *args):  # tests read stdout; keep the log on stderr
        sys.stderr.write("%s - %s\n" % (self.address_string(), fmt % args))

    def _send(self, status, content_type, body):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/bundle":
            self._send(200, "application/json", Path(self.bundle_path).read_bytes())
            return
        if self.static_dir is not None:
            rel = "index.html" if self.path == "/" else self.path.lstrip("/")
            root = Path(self.static_dir).resolve()
            target = (root / rel).resolve()
            if root in target.parents or target == root:
                if target.is_file():
                    types = {
                        ".html": "text/html; charset=utf-8",
                        ".js": "text/javascript; charset=utf-8",
                        ".css": "text/css; charset=utf-8",
                        ".json": "application/json",
                    }
                    ctype = types.get(target.suffix, "application/octet-stream")
                    self._send(200, ctype, target.read_bytes())
                    return
        self._send(404, "text/plain; charset=utf-8", b"not found\n")


def create_server(bundle_path, static_dir=None, host="127.0.0.1", port=0):
    handler = type(
        "_BoundHandler",
        (_BundleHandler,),
        {"bundle_path": str(bundle_path), "static_dir": static_dir},
    )
    return ThreadingHTTPServer((host, port), handler)


def cmd_serve(args):
    if not Path(args.bundle).is_file():
        raise FileNotFoundError(f"bundle {args.bundle} does not exist")
    server = create_server(args.bundle, args.static, host=args.host, port=args.port)
    host, port = server.server_address[:2]
    print(f"serving {args.bundle} on http://{host}:{port}/ (GET /bundle)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ngash",
        description="Precomputed radiance transfer with a motor-encoded neural field.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precompute", help="run the transfer oracle over a mesh")
    p.add_argument("mesh")
    p.add_argument("--samples", type=int, default=10, help="per-axis sample count (N = samples^2)")
    p.add_argument("--mode", choices=("sphere", "hemisphere"), default="sphere")
    p.add_argument("--shadowed", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("project-light", help="project an HDR probe onto the SH basis")
    p.add_argument("hdr")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project_light)

    p = sub.add_parser("rotate-light", help="rotate light coefficients by a quaternion")
    p.add_argument("coeffs")
    p.add_argument("--quat", type=float, nargs=4, required=True, metavar=("W", "X", "Y", "Z"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rotate_light)

    p = sub.add_parser("train", help="train the neural field on a dataset manifest")
    p.add_argument("manifest")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict transfer rows for a mesh")
    p.add_argument("weights")
    p.add_argument("mesh")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("shade", help="combine transfer rows with a light")
    p.add_argument("coeffs")
    p.add_argument("light")
    p.add_argument("--intensity", type=float, default=shading.DEFAULT_INTENSITY)
    p.add_argument(
        "--coeff-scale",
        type=float,
        default=shading.COEFF_SCALE,
        help="fixed 1/255 normalization of the shading formula, exposed for audit",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--ppm", help="also write a flat-shaded preview image")
    p.add_argument("--mesh", help="mesh for the preview (required with --ppm)")
    p.add_argument("--preview-size", type=int, default=256)
    p.set_defaults(func=cmd_shade)

    p = sub.add_parser("bench", help="time the oracle against the neural field")
    p.add_argument("mesh")
    p.add_argument("weights")
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-bundle", help="pack mesh, transfer, lights, weights for the viewer")
    p.add_argument("mesh")
    p.add_argument("--weights", required=True)
    p.add_argument("--coeffs", help="transfer rows to embed (default: predict from weights)")
    p.add_argument(
        "--light",
        action="append",
        required=True,
        metavar="NAME=PATH",
        help="named light coefficient file (repeatable)",
    )
    p.add_argument("--intensity", type=float, default=shading.DEFAULT_INTENSITY)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_bundle)

    p = sub.add_parser("serve", help="serve a bundle and viewer assets over HTTP")
    p.add_argument("bundle")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", help="directory of viewer assets for GET /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if getattr(args, "ppm", None) and not getattr(args, "mesh", None):
        print("error: --ppm needs --mesh for geometry", file=sys.stderr)
        return 1
    try:
        return args.func(args) or 0
    except (DataFormatError, IntegrityError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

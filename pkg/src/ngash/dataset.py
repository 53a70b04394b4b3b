"""Training corpora: oracle transfer rows paired with motor encodings.

A corpus is a directory of coefficient files plus a text manifest.  Motors
are never stored; they are recomputed from mesh vertices and normals at
load time, and the manifest's blade-order hash guards against pairing
files with a build whose multivector layout differs.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cga
from .errors import DataFormatError, IntegrityError
from .mesh import compute_normals, load_obj
from .prt import build_bvh, load_transfer, save_transfer, transfer_shadowed, transfer_unshadowed
from .sh import generate_samples

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"


@dataclass
class DatasetConfig:
    sqrt_samples: int = 10
    seed: int = 0
    shadowed: bool = True
    mode: str = "sphere"
    split_fraction: float = 0.9
    split_seed: int = 0

    def __post_init__(self):
        if self.sqrt_samples < 1:
            raise ValueError("sqrt_samples must be >= 1")
        if self.mode != "sphere":
            raise ValueError("transfer oracles integrate over the full sphere")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")


@dataclass
class ManifestEntry:
    mesh_path: str  # relative to the manifest directory
    coeffs_path: str
    vertex_count: int


@dataclass
class DatasetManifest:
    entries: list
    config: DatasetConfig
    blade_hash: str = cga.BLADE_ORDER_HASH
    skipped: list = field(default_factory=list)  # (path, reason)

    @property
    def pair_count(self):
        return sum(e.vertex_count for e in self.entries)


def generate(mesh_dir, out_dir, config=None):
    """Run the configured oracle over every .obj under mesh_dir.

    Each mesh gets a coefficient file in out_dir; unreadable meshes are
    logged, recorded in the manifest, and skipped.  The manifest is written
    last so a crash never leaves a manifest pointing at missing files.
    """
    config = config or DatasetConfig()
    mesh_dir = Path(mesh_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(mesh_dir.glob("*.obj"))
    if not paths:
        raise DataFormatError(f"{mesh_dir}: no .obj meshes found")

    samples = generate_samples(config.sqrt_samples, seed=config.seed, mode=config.mode)
    entries = []
    skipped = []
    for path in paths:
        try:
            mesh = load_obj(path)
            if not mesh.has_normals:
                mesh = compute_normals(mesh)
            if config.shadowed:
                tm = transfer_shadowed(mesh, build_bvh(mesh), samples)
            else:
                tm = transfer_unshadowed(mesh, samples)
        except Exception as exc:
            log.warning("%s: skipped (%s)", path, exc)
            skipped.append((path.name, str(exc)))
            continue
        coeffs_path = out_dir / (path.stem + ".coeffs")
        save_transfer(coeffs_path, tm)
        entries.append(
            ManifestEntry(
                mesh_path=_relative(path, out_dir),
                coeffs_path=coeffs_path.name,
                vertex_count=mesh.vertex_count,
            )
        )
    if not entries:
        raise DataFormatError(f"{mesh_dir}: every mesh failed to process")

    manifest = DatasetManifest(entries=entries, config=config, skipped=skipped)
    save_manifest(out_dir / MANIFEST_NAME, manifest)
    return manifest


def _relative(path, base):
    path = Path(path).resolve()
    base = Path(base).resolve()
    try:
        return path.relative_to(base).as_posix()
    except ValueError:
        import os

        return Path(os.path.relpath(path, base)).as_posix()


def save_manifest(path, manifest):
    config = manifest.config
    lines = [
        f"sqrt_samples={config.sqrt_samples}",
        f"seed={config.seed}",
        f"shadowed={int(config.shadowed)}",
        f"mode={config.mode}",
        f"split_fraction={config.split_fraction!r}",
        f"split_seed={config.split_seed}",
        f"blade_hash={manifest.blade_hash}",
    ]
    for name, reason in manifest.skipped:
        lines.append(f"# skipped {name}: {reason}")
    for entry in manifest.entries:
        lines.append(f"mesh={entry.mesh_path} {entry.coeffs_path} {entry.vertex_count}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_manifest(path):
    path = Path(path)
    meta = {}
    entries = []
    for lineno, raw in enumerate(path.read_text(encoding="ascii").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataFormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        if key == "mesh":
            parts = value.split()
            if len(parts) != 3:
                raise DataFormatError(
                    f"{path}:{lineno}: mesh entries need 'mesh coeffs vertex_count'"
                )
            entries.append(ManifestEntry(parts[0], parts[1], int(parts[2])))
        else:
            meta[key] = value
    if "blade_hash" not in meta:
        raise DataFormatError(f"{path}: manifest missing blade_hash")
    config = DatasetConfig(
        sqrt_samples=int(meta.get("sqrt_samples", 10)),
        seed=int(meta.get("seed", 0)),
        shadowed=meta.get("shadowed", "1") not in ("0", "false", "False"),
        mode=meta.get("mode", "sphere"),
        split_fraction=float(meta.get("split_fraction", 0.9)),
        split_seed=int(meta.get("split_seed", 0)),
    )
    return DatasetManifest(entries=entries, config=config, blade_hash=meta["blade_hash"])


def load_pairs(manifest_path):
    """Motor inputs and transfer targets for every vertex in the corpus.

    Returns (inputs (n, 32), targets (n, 27)); rows keep each mesh's vertex
    order, meshes in manifest order.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    if manifest.blade_hash != cga.BLADE_ORDER_HASH:
        raise IntegrityError(
            f"{manifest_path}: blade-order hash {manifest.blade_hash} does not match"
            f" this build ({cga.BLADE_ORDER_HASH})"
        )
    base = manifest_path.parent
    inputs = []
    targets = []
    for entry in manifest.entries:
        mesh = load_obj(base / entry.mesh_path)
        if not mesh.has_normals:
            mesh = compute_normals(mesh)
        if mesh.vertex_count != entry.vertex_count:
            raise IntegrityError(
                f"{entry.mesh_path}: has {mesh.vertex_count} vertices,"
                f" manifest says {entry.vertex_count}"
            )
        tm = load_transfer(base / entry.coeffs_path, expected_rows=entry.vertex_count)
        inputs.append(cga.encode_batch(mesh.vertices, mesh.normals))
        targets.append(tm.rows)
    if not inputs:
        raise DataFormatError(f"{manifest_path}: manifest lists no meshes")
    return np.concatenate(inputs), np.concatenate(targets)


def split(inputs, targets, fraction, seed):
    """Seeded shuffle then partition into (train, validation) pairs.

    fraction is the training share; the two parts are disjoint and cover
    every row exactly once.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("split fraction must lie in (0, 1)")
    inputs = np.asarray(inputs)
    targets = np.asarray(targets)
    n = inputs.shape[0]
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * fraction))
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    return (inputs[train_idx], targets[train_idx]), (inputs[val_idx], targets[val_idx])

"""Dataset and model files, synthetic desk-scale datasets, and the
line-protocol bridge to external black-box scorers.

Model files are versioned JSON with decimal float text that round-trips
exactly, so saving and loading reproduces predictions bit for bit.
"""

import json
import os
import shlex
import subprocess
import csv as csvmod

import numpy as np

from . import similarity as sim
from .datatypes import Dataset, SparseModel
from .errors import BlackboxError, DataFormatError

MODEL_FORMAT_VERSION = 1

SYNTHETIC_KINDS = ("two_gaussians", "three_clusters", "ring", "sine_regression")
_DEFAULT_N = {"two_gaussians": 25, "three_clusters": 90, "ring": 50, "sine_regression": 200}

# Geometry of the generated datasets (documented so tests can check the
# sample statistics against them).
TWO_GAUSSIANS_CENTERS = np.array([[1.4, 0.0], [-1.4, 0.0]])
TWO_GAUSSIANS_STD = 0.45
THREE_CLUSTERS_CENTERS = np.array([[-1.6, 0.0], [0.0, 0.0], [1.6, 0.0]])
THREE_CLUSTERS_STD = 0.25
# Targets come from a planted model with one weighted bump per center, so
# exactly three prototypes suffice to represent them.
THREE_CLUSTERS_BETAS = (2.0, -2.0, 2.0)
THREE_CLUSTERS_GAMMA = 0.5
RING_RADIUS = 2.0
RING_RADIAL_STD = 0.05
RING_CENTER_STD = 0.2
SINE_RANGE = (-3.0, 3.0)
SINE_FREQ = 2.0
SINE_NOISE_STD = 0.05


def load_csv(path, target_column: str, group_column: str = None) -> Dataset:
    """Read a headered CSV into a dataset.

    All columns except the target (and optional group) become features,
    in header order.  Parse failures report the offending row and column.
    """
    with open(path, newline="") as fh:
        reader = csvmod.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, expected a header row") from None
        if target_column not in header:
            raise DataFormatError(f"{path}: no column named {target_column!r} in header {header}")
        if group_column is not None and group_column not in header:
            raise DataFormatError(f"{path}: no column named {group_column!r} in header {header}")
        target_pos = header.index(target_column)
        group_pos = header.index(group_column) if group_column is not None else None
        feature_pos = [i for i in range(len(header)) if i != target_pos and i != group_pos]
        features, targets, groups = [], [], []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {row_num} has {len(row)} cells, header has {len(header)}"
                )
            def parse(pos):
                try:
                    return float(row[pos])
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {row_num}, column {header[pos]!r}: cannot parse {row[pos]!r}"
                    ) from None
            features.append([parse(i) for i in feature_pos])
            targets.append(parse(target_pos))
            if group_pos is not None:
                groups.append(row[group_pos])
    if not targets:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(
        features=np.array(features),
        targets=np.array(targets),
        groups=np.array(groups) if groups else None,
    )


def write_csv(data: Dataset, path, target_column: str = "target", group_column: str = "group"):
    """Write a dataset as CSV (features f0..fD-1, then target, then group)."""
    with open(path, "w", newline="") as fh:
        writer = csvmod.writer(fh)
        header = [f"f{i}" for i in range(data.dim)] + [target_column]
        if data.groups is not None:
            header.append(group_column)
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.features[i]] + [repr(float(data.targets[i]))]
            if data.groups is not None:
                row.append(str(data.groups[i]))
            writer.writerow(row)


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def save_model(model: SparseModel, path):
    """Persist a model as versioned JSON; loading reproduces predictions exactly."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "similarity": {
            "kind": model.similarity.kind,
            "gamma": None if model.similarity.gamma is None else float(model.similarity.gamma),
            "blackbox_id": model.similarity.blackbox_id,
        },
        "prototypes": model.prototypes.tolist(),
        "beta": model.beta.tolist(),
        "bias": model.bias,
        "metadata": model.metadata,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def load_model(path) -> SparseModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not a valid model file: {exc}") from exc
    try:
        version = doc["format_version"]
        if version != MODEL_FORMAT_VERSION:
            raise DataFormatError(
                f"{path}: unsupported format_version {version!r}, expected {MODEL_FORMAT_VERSION}"
            )
        spec = sim.SimilaritySpec(
            kind=doc["similarity"]["kind"],
            gamma=doc["similarity"]["gamma"],
            blackbox_id=doc["similarity"]["blackbox_id"],
        )
        return SparseModel(
            prototypes=np.array(doc["prototypes"], dtype=float),
            beta=np.array(doc["beta"], dtype=float),
            bias=float(doc["bias"]),
            similarity=spec,
            metadata=doc.get("metadata", {}),
        )
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: malformed model file: {exc!r}") from exc


def gen_synthetic(kind: str, n: int = None, seed: int = 0) -> Dataset:
    """Seeded toy datasets.

    two_gaussians   +-1 labels, class blobs at TWO_GAUSSIANS_CENTERS with
                    isotropic std TWO_GAUSSIANS_STD; class counts differ
                    by at most one.
    three_clusters  three blobs (THREE_CLUSTERS_CENTERS, std
                    THREE_CLUSTERS_STD); targets are the values of a
                    planted model with one RBF bump per center
                    (THREE_CLUSTERS_BETAS, THREE_CLUSTERS_GAMMA), so the
                    ground truth needs exactly three prototypes.
    ring            half the points on a radius-RING_RADIUS circle
                    (label +1), half in a tight blob at the origin (-1).
    sine_regression 1-d inputs uniform on SINE_RANGE with targets
                    sin(SINE_FREQ * x) plus Gaussian noise.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    n = _DEFAULT_N[kind] if n is None else int(n)
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    if kind == "two_gaussians":
        n_pos = (n + 1) // 2
        counts = (n_pos, n - n_pos)
        features = np.vstack(
            [rng.normal(c, TWO_GAUSSIANS_STD, (cnt, 2)) for c, cnt in zip(TWO_GAUSSIANS_CENTERS, counts)]
        )
        targets = np.concatenate([np.ones(counts[0]), -np.ones(counts[1])])
    elif kind == "three_clusters":
        base, extra = divmod(n, 3)
        counts = [base + (1 if i < extra else 0) for i in range(3)]
        features = np.vstack(
            [rng.normal(c, THREE_CLUSTERS_STD, (cnt, 2)) for c, cnt in zip(THREE_CLUSTERS_CENTERS, counts)]
        )
        diff = features[:, None, :] - THREE_CLUSTERS_CENTERS[None, :, :]
        bumps = np.exp(-THREE_CLUSTERS_GAMMA * np.einsum("ijk,ijk->ij", diff, diff))
        targets = bumps @ np.asarray(THREE_CLUSTERS_BETAS)
    elif kind == "ring":
        n_ring = (n + 1) // 2
        angles = rng.uniform(0, 2 * np.pi, n_ring)
        radii = RING_RADIUS + rng.normal(0, RING_RADIAL_STD, n_ring)
        ring_pts = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
        blob = rng.normal(0, RING_CENTER_STD, (n - n_ring, 2))
        features = np.vstack([ring_pts, blob])
        targets = np.concatenate([np.ones(n_ring), -np.ones(n - n_ring)])
    else:
        x = rng.uniform(SINE_RANGE[0], SINE_RANGE[1], n)
        features = x[:, None]
        targets = np.sin(SINE_FREQ * x) + rng.normal(0, SINE_NOISE_STD, n)
    perm = rng.permutation(n)
    return Dataset(features=features[perm], targets=targets[perm])


class BlackboxBridge:
    """Similarity scorer backed by a line-protocol subprocess.

    Requests are single lines ``d a_1 .. a_d b_1 .. b_d``; the scorer
    answers one decimal value per line.  The process is spawned once and
    queried serially.  Close the bridge (or use it as a context manager)
    to release the process and the scorer registration.
    """

    _counter = 0

    def __init__(self, command):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as exc:
            raise BlackboxError(f"could not start scorer {argv!r}: {exc}") from exc
        BlackboxBridge._counter += 1
        self._lines_read = 0
        scorer_id = f"bridge-{os.getpid()}-{BlackboxBridge._counter}"
        self.spec = sim.SimilaritySpec(kind="blackbox", blackbox_id=scorer_id)
        sim.register_scorer(scorer_id, self._score)

    def _score(self, a, b):
        if self._proc.poll() is not None:
            raise BlackboxError(f"scorer process exited with code {self._proc.returncode}")
        tokens = [str(a.shape[0])] + [repr(float(v)) for v in a] + [repr(float(v)) for v in b]
        try:
            self._proc.stdin.write(" ".join(tokens) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BlackboxError(f"scorer process pipe failed: {exc}") from exc
        self._lines_read += 1
        if line == "":
            raise BlackboxError(f"scorer closed its output before response line {self._lines_read}")
        try:
            return float(line.strip())
        except ValueError:
            raise BlackboxError(
                f"malformed scorer response at line {self._lines_read}: {line.strip()!r}"
            ) from None

    def close(self):
        sim.unregister_scorer(self.spec.blackbox_id)
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def blackbox_bridge(command) -> BlackboxBridge:
    """Spawn a scorer subprocess and register it as a black-box similarity."""
    return BlackboxBridge(command)

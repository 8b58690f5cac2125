"""Synthetic paired-modality sequences with controlled confusability.

Categories come in pairs (2k, 2k+1). Each pair is blind in one
modality: even pair index means the two categories are identically
distributed in appearance, odd means identically distributed in
motion. The sighted modality carries the class offset on a latent
coding direction, but a per-instance nuisance shift rides the same
direction, so the sighted marginal separates the pair only weakly.
The only reading of that nuisance lives in the blind modality, on its
own reference direction; subtracting the blind-side reading from the
sighted coordinate separates the classes cleanly. Neither modality
alone settles a pair well: one is blind, the other squints. The
manifest lists every pair, and the blind modality follows from
pair-index parity.

Each instance holds two L x D_in observation matrices, one per
modality. Row t is (instance latent + per-row Gaussian noise) pushed
through a fixed isometric lift from the latent space into D_in
dimensions, so raw features are rotated mixtures rather than
axis-aligned coordinates while latent distances are preserved exactly.

On disk a dataset is a directory: ``manifest.json`` plus one binary
file per instance. The instance file is a 16-byte header of four
little-endian uint32 (magic 0x43435331, L, D_in, modality count 2)
followed by the appearance rows then the motion rows, little-endian
float64, row-major. Loading is strict: bad magic or a short header is a
ParseError with the byte offset, size mismatches are IntegrityErrors.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from costream.errors import ConfigError, IntegrityError, ParseError

MAGIC = 0x43435331
FORMAT_VERSION = 1
LATENT_DIM = 6
DEFAULT_SIGMA = 0.5

# Class separation along the sighted coding direction, the scale of the
# per-instance nuisance shift riding that direction, and the jitter on
# the blind modality's reading of the nuisance. The nuisance keeps the
# sighted marginal weak (about 1.75 sigma, a nearest-prototype oracle
# near 96% per pair); the blind-side reading cancels it almost exactly,
# leaving a wide cross-modal margin (about 3.4 sigma).
PAIR_SEP = 0.55
NUISANCE_SCALE = 0.30
REFERENCE_JITTER = 0.10

_HEADER = struct.Struct("<IIII")
_SEED_DATA = 11


@dataclass
class Instance:
    id: int
    label: int
    frames_f: np.ndarray
    frames_o: np.ndarray


@dataclass
class Dataset:
    n: int
    per_class: int
    L: int
    D_in: int
    seed: int
    confusable_pairs: list[tuple[int, int]]
    instances: list[Instance] = field(default_factory=list)

    @property
    def labels(self) -> np.ndarray:
        return np.array([inst.label for inst in self.instances], dtype=np.int64)

    def blind_modality(self, pair_index: int) -> str:
        """'f' when the pair shares appearance, 'o' when it shares motion."""
        return "f" if pair_index % 2 == 0 else "o"

    def sighted_modality(self, pair_index: int) -> str:
        """The modality that carries the pair's class offset."""
        return "o" if pair_index % 2 == 0 else "f"


def generate(n: int, per_class: int, L: int, D_in: int, seed: int,
             sigma: float = DEFAULT_SIGMA) -> Dataset:
    """Draw a dataset. Identical arguments give identical values.

    n must be even and >= 4; every category gets per_class instances.
    """
    if n < 4 or n % 2 != 0:
        raise ConfigError(f"category count must be even and >= 4, got {n}")
    if per_class < 2:
        raise ConfigError(f"per_class must be at least 2, got {per_class}")
    if L < 1:
        raise ConfigError(f"L must be positive, got {L}")
    if D_in < LATENT_DIM:
        raise ConfigError(
            f"D_in must be at least the latent width {LATENT_DIM}, got {D_in}")
    if sigma <= 0:
        raise ConfigError(f"noise sigma must be positive, got {sigma}")

    rng = np.random.default_rng([seed, _SEED_DATA])
    g = LATENT_DIM
    pairs = n // 2

    def unit(vec: np.ndarray) -> np.ndarray:
        return vec / np.linalg.norm(vec)

    # Per pair: base means for both modalities, the sighted coding
    # direction, and the blind-side reference direction. Class 2k sits
    # at +PAIR_SEP along the coding direction, class 2k+1 at -PAIR_SEP;
    # the blind modality's mean is shared by the pair.
    base_f = np.empty((pairs, g))
    base_o = np.empty((pairs, g))
    code_dir = np.empty((pairs, g))
    ref_dir = np.empty((pairs, g))
    for k in range(pairs):
        base_f[k] = rng.normal(size=g)
        base_o[k] = rng.normal(size=g)
        code_dir[k] = unit(rng.normal(size=g))
        ref_dir[k] = unit(rng.normal(size=g))

    # Isometric lifts (orthonormal rows) keep latent distances exact in
    # observation space, so class margins do not drift with the draw.
    lift_f = np.linalg.qr(rng.normal(size=(D_in, g)))[0].T
    lift_o = np.linalg.qr(rng.normal(size=(D_in, g)))[0].T

    instances = []
    next_id = 0
    for label in range(n):
        k = label // 2
        sign = 1.0 if label % 2 == 0 else -1.0
        blind_f = k % 2 == 0
        for _ in range(per_class):
            mean_f = base_f[k].copy()
            mean_o = base_o[k].copy()
            sighted = mean_o if blind_f else mean_f
            blind = mean_f if blind_f else mean_o
            shift = rng.normal(scale=NUISANCE_SCALE)
            jitter = rng.normal(scale=REFERENCE_JITTER)
            sighted += (sign * PAIR_SEP + shift) * code_dir[k]
            blind += (shift + jitter) * ref_dir[k]
            latent_f = mean_f + rng.normal(scale=sigma, size=(L, g))
            latent_o = mean_o + rng.normal(scale=sigma, size=(L, g))
            instances.append(Instance(
                id=next_id,
                label=label,
                frames_f=np.ascontiguousarray(latent_f @ lift_f),
                frames_o=np.ascontiguousarray(latent_o @ lift_o),
            ))
            next_id += 1

    return Dataset(
        n=n, per_class=per_class, L=L, D_in=D_in, seed=seed,
        confusable_pairs=[(2 * k, 2 * k + 1) for k in range(pairs)],
        instances=instances,
    )


def _instance_bytes(inst: Instance, L: int, D_in: int) -> bytes:
    header = _HEADER.pack(MAGIC, L, D_in, 2)
    body_f = np.ascontiguousarray(inst.frames_f, dtype="<f8").tobytes()
    body_o = np.ascontiguousarray(inst.frames_o, dtype="<f8").tobytes()
    return header + body_f + body_o


def save(dataset: Dataset, out_dir) -> Path:
    """Write manifest.json plus one binary file per instance; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for inst in dataset.instances:
        name = f"i{inst.id:05d}.bin"
        (out / name).write_bytes(_instance_bytes(inst, dataset.L, dataset.D_in))
        entries.append({"id": inst.id, "label": inst.label, "file": name})
    manifest = {
        "version": FORMAT_VERSION,
        "n": dataset.n,
        "per_class": dataset.per_class,
        "L": dataset.L,
        "D_in": dataset.D_in,
        "seed": dataset.seed,
        "confusable_pairs": [list(p) for p in dataset.confusable_pairs],
        "instances": entries,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def _read_instance_file(path: Path, L: int, D_in: int) -> tuple[np.ndarray, np.ndarray]:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path.name}: header truncated at {len(raw)} bytes", offset=len(raw))
    magic, file_l, file_d, modalities = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ParseError(f"{path.name}: bad magic 0x{magic:08x}, expected 0x{MAGIC:08x}", offset=0)
    if modalities != 2:
        raise ParseError(f"{path.name}: expected 2 modalities, header says {modalities}", offset=12)
    if file_l != L or file_d != D_in:
        raise IntegrityError(
            f"{path.name}: header says {file_l}x{file_d}, manifest says {L}x{D_in}")
    expected = _HEADER.size + 2 * L * D_in * 8
    if len(raw) != expected:
        raise IntegrityError(
            f"{path.name}: {len(raw)} bytes on disk, format requires {expected}")
    block = L * D_in * 8
    frames_f = np.frombuffer(raw, dtype="<f8", count=L * D_in, offset=_HEADER.size)
    frames_o = np.frombuffer(raw, dtype="<f8", count=L * D_in, offset=_HEADER.size + block)
    return (np.ascontiguousarray(frames_f.reshape(L, D_in)),
            np.ascontiguousarray(frames_o.reshape(L, D_in)))


_MANIFEST_KEYS = {"version", "n", "per_class", "L", "D_in", "seed",
                  "confusable_pairs", "instances"}


def load(path) -> Dataset:
    """Read a dataset from a manifest path or the directory holding it."""
    p = Path(path)
    manifest_path = p / "manifest.json" if p.is_dir() else p
    if not manifest_path.exists():
        raise IntegrityError(f"no manifest at {manifest_path}")
    text = manifest_path.read_text()
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path.name}: {exc.msg}", offset=exc.pos) from exc

    missing = _MANIFEST_KEYS - manifest.keys()
    if missing:
        raise IntegrityError(f"manifest missing fields: {sorted(missing)}")
    if manifest["version"] != FORMAT_VERSION:
        raise IntegrityError(f"manifest version {manifest['version']} unsupported")

    n = int(manifest["n"])
    per_class = int(manifest["per_class"])
    L = int(manifest["L"])
    D_in = int(manifest["D_in"])
    entries = manifest["instances"]
    if len(entries) != n * per_class:
        raise IntegrityError(
            f"manifest lists {len(entries)} instances, n*per_class is {n * per_class}")

    counts = np.zeros(n, dtype=np.int64)
    instances = []
    base = manifest_path.parent
    seen_ids: set[int] = set()
    for entry in entries:
        label = int(entry["label"])
        iid = int(entry["id"])
        if not 0 <= label < n:
            raise IntegrityError(f"instance {iid} has label {label} outside 0..{n - 1}")
        if iid in seen_ids:
            raise IntegrityError(f"duplicate instance id {iid}")
        seen_ids.add(iid)
        counts[label] += 1
        frames_f, frames_o = _read_instance_file(base / entry["file"], L, D_in)
        instances.append(Instance(id=iid, label=label, frames_f=frames_f, frames_o=frames_o))
    if not (counts == per_class).all():
        raise IntegrityError(f"per-category counts {counts.tolist()} != per_class {per_class}")

    return Dataset(
        n=n, per_class=per_class, L=L, D_in=D_in, seed=int(manifest["seed"]),
        confusable_pairs=[tuple(p) for p in manifest["confusable_pairs"]],
        instances=instances,
    )

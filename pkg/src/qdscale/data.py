"""Synthetic 2-component wind fields from Gaussian random fields.

Each sample is a pair of hi-res (u, v) fields on a square power-of-two grid
plus their 4x4 block-averaged low-res counterpart. Fields are spectrally
synthesized: white Gaussian noise is filtered in Fourier space by k^(-gamma/2)
(so the 2-D power *density* falls off as k^(-gamma)), inverse-transformed
(Hermitian symmetry holds because the filtered noise is the transform of a
real field), normalized to the requested standard deviation, correlated
between components through a ``rho``-mixture, and shifted by the mean wind.

A dataset directory holds ``meta.json`` plus two little-endian float32
payloads, ``fields.f32`` (hi-res) and ``lowres.f32``, both row-major
``[sample, channel, y, x]`` with channels (u, v) and all splits concatenated
in meta order. Values are rounded to float32 once at generation time;
normalization statistics are computed from the rounded train split, so the
normalized train split has exactly zero mean and unit std per channel.
"""

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

SCALE = 4  # hi-res to low-res coarsening factor
_SPLIT_STRIDE = 1 << 20  # disjoint per-split seed ranges
_FORMAT = "qdscale-dataset"
_VERSION = 1


@dataclass(frozen=True)
class FieldSpec:
    size: int = 32
    gamma: float = 5.0 / 3.0
    sigma: float = 2.0
    mean_u: float = 3.0
    mean_v: float = 1.0
    rho: float = 0.3
    seed: int = 0


def _validate_spec(spec):
    if spec.size < 8 or (spec.size & (spec.size - 1)) != 0:
        raise ConfigurationError("size must be a power of two >= 8, got %r" % (spec.size,))
    if spec.sigma < 0:
        raise ConfigurationError("sigma must be >= 0, got %r" % (spec.sigma,))
    if not -1.0 <= spec.rho <= 1.0:
        raise ConfigurationError("rho must be in [-1, 1], got %r" % (spec.rho,))


def _unit_grf(size, gamma, rng):
    """One zero-mean random field with unit std and density slope -gamma."""
    white = rng.standard_normal((size, size))
    freqs = np.fft.fftfreq(size) * size
    k = np.sqrt(freqs[None, :] ** 2 + freqs[:, None] ** 2)
    filt = np.zeros_like(k)
    nz = k > 0
    filt[nz] = k[nz] ** (-gamma / 2.0)
    field = np.fft.ifft2(np.fft.fft2(white) * filt).real
    return field / field.std()


def block_average(fields, factor=SCALE):
    """Mean over factor x factor blocks of trailing [.., H, W] axes."""
    *lead, h, w = fields.shape
    if h % factor or w % factor:
        raise ConfigurationError("grid %r not divisible by factor %d" % ((h, w), factor))
    shaped = fields.reshape(*lead, h // factor, factor, w // factor, factor)
    return shaped.mean(axis=(-3, -1))


def generate_sample(spec):
    """One (x_hr [2,H,W], y_lr [2,H/4,W/4]) pair, deterministic in spec.seed."""
    _validate_spec(spec)
    rng = np.random.default_rng(spec.seed)
    f1 = _unit_grf(spec.size, spec.gamma, rng)
    f2 = _unit_grf(spec.size, spec.gamma, rng)
    # rho=1 keeps u - mean_u == v - mean_v exactly: the f2 term is a true zero
    fv = spec.rho * f1 + np.sqrt(1.0 - spec.rho**2) * f2
    u = spec.mean_u + spec.sigma * f1
    v = spec.mean_v + spec.sigma * fv
    x_hr = np.stack([u, v])
    return x_hr, block_average(x_hr)


def default_ood_spec(id_spec, gamma=3.0, mean_shift=1.5):
    """The distribution-shifted regime: steeper spectrum, stronger mean wind."""
    return dataclasses.replace(
        id_spec,
        gamma=gamma,
        mean_u=id_spec.mean_u + mean_shift,
        mean_v=id_spec.mean_v + mean_shift,
    )


class Dataset:
    def __init__(self, meta, hi, lo):
        self.meta = meta
        self.hi = hi  # split -> [S, 2, H, W] float64 (f32-rounded values)
        self.lo = lo

    @property
    def stats(self):
        return self.meta["stats"]

    def normalize(self, fields):
        mean = np.asarray(self.stats["mean"])[:, None, None]
        std = np.asarray(self.stats["std"])[:, None, None]
        return (np.asarray(fields, dtype=np.float64) - mean) / std

    def denormalize(self, fields):
        mean = np.asarray(self.stats["mean"])[:, None, None]
        std = np.asarray(self.stats["std"])[:, None, None]
        return np.asarray(fields, dtype=np.float64) * std + mean

    def split_names(self):
        return [s["name"] for s in self.meta["splits"]]


def _spec_dict(spec):
    return dataclasses.asdict(spec)


def _spec_from_dict(d):
    return FieldSpec(**{f.name: d[f.name] for f in dataclasses.fields(FieldSpec)})


def build_dataset(id_spec, n_train, n_val, n_ood, ood_spec=None):
    """Generate train/val (in-distribution) and test-ood splits.

    Per-sample seeds occupy disjoint ranges: split j uses
    ``id_spec.seed + j * 2^20 + i``; counts above the stride would overlap
    and are rejected.
    """
    _validate_spec(id_spec)
    if ood_spec is None:
        ood_spec = default_ood_spec(id_spec)
    _validate_spec(ood_spec)
    plan = [
        ("train", n_train, id_spec),
        ("val", n_val, id_spec),
        ("test_ood", n_ood, ood_spec),
    ]
    for name, count, _ in plan:
        if count < 1:
            raise ConfigurationError("split %r needs at least 1 sample" % name)
        if count >= _SPLIT_STRIDE:
            raise ConfigurationError(
                "split %r: %d samples would overlap the next seed range (max %d)"
                % (name, count, _SPLIT_STRIDE - 1)
            )
    hi, lo = {}, {}
    split_meta = []
    for j, (name, count, spec) in enumerate(plan):
        xs, ys = [], []
        for i in range(count):
            sample_spec = dataclasses.replace(spec, seed=id_spec.seed + j * _SPLIT_STRIDE + i)
            x, y = generate_sample(sample_spec)
            xs.append(x)
            ys.append(y)
        # one float32 rounding, shared by memory and disk
        hi[name] = np.stack(xs).astype(np.float32).astype(np.float64)
        lo[name] = np.stack(ys).astype(np.float32).astype(np.float64)
        split_meta.append({"name": name, "count": count, "spec": _spec_dict(spec)})
    train = hi["train"]
    stats = {
        "mean": [float(train[:, c].mean()) for c in range(2)],
        "std": [float(train[:, c].std()) for c in range(2)],
    }
    meta = {
        "format": _FORMAT,
        "version": _VERSION,
        "size": id_spec.size,
        "scale": SCALE,
        "channels": ["u", "v"],
        "splits": split_meta,
        "stats": stats,
    }
    return Dataset(meta, hi, lo)


def write_dataset(ds, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "meta.json", "w") as fh:
        json.dump(ds.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for fname, table in (("fields.f32", ds.hi), ("lowres.f32", ds.lo)):
        with open(outdir / fname, "wb") as fh:
            for split in ds.meta["splits"]:
                fh.write(np.ascontiguousarray(table[split["name"]]).astype("<f4").tobytes())


def read_dataset(indir):
    indir = Path(indir)
    try:
        meta = json.loads((indir / "meta.json").read_text())
    except FileNotFoundError:
        raise ConfigurationError("dataset: %s has no meta.json" % indir)
    except json.JSONDecodeError as exc:
        raise ConfigurationError("dataset: unreadable meta.json: %s" % exc)
    if meta.get("format") != _FORMAT:
        raise ConfigurationError("dataset: %s is not a %s directory" % (indir, _FORMAT))
    size = meta["size"]
    scale = meta["scale"]
    shapes = {"fields.f32": (size, size), "lowres.f32": (size // scale, size // scale)}
    tables = {}
    for fname, (h, w) in shapes.items():
        raw = np.frombuffer((indir / fname).read_bytes(), dtype="<f4")
        per_sample = 2 * h * w
        total = sum(s["count"] for s in meta["splits"]) * per_sample
        if raw.size != total:
            raise ConfigurationError(
                "dataset: %s holds %d values, expected %d" % (fname, raw.size, total)
            )
        table = {}
        offset = 0
        for s in meta["splits"]:
            n = s["count"] * per_sample
            table[s["name"]] = (
                raw[offset : offset + n].astype(np.float64).reshape(s["count"], 2, h, w)
            )
            offset += n
        tables[fname] = table
    return Dataset(meta, tables["fields.f32"], tables["lowres.f32"])


def split_spec(ds, split):
    for s in ds.meta["splits"]:
        if s["name"] == split:
            return _spec_from_dict(s["spec"])
    raise ConfigurationError("dataset has no split %r" % split)

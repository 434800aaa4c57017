import dataclasses
import json

import numpy as np
import pytest

from qdscale.data import (
    Dataset,
    FieldSpec,
    block_average,
    build_dataset,
    default_ood_spec,
    generate_sample,
    read_dataset,
    split_spec,
    write_dataset,
)
from qdscale.errors import ConfigurationError


def _radial_density_slope(fields, kmin=2, kmax=8):
    """Log-log slope of the ring-averaged 2-D power spectrum."""
    n = fields.shape[-1]
    freqs = np.fft.fftfreq(n) * n
    kmag = np.sqrt(freqs[None, :] ** 2 + freqs[:, None] ** 2)
    kbin = np.rint(kmag).astype(int)
    power = np.zeros((n, n))
    count = 0
    for field in fields.reshape(-1, n, n):
        power += np.abs(np.fft.fft2(field - field.mean())) ** 2
        count += 1
    power /= count
    ks = np.arange(kmin, kmax + 1)
    ring_means = np.array([power[kbin == k].mean() for k in ks])
    slope, _ = np.polyfit(np.log(ks), np.log(ring_means), 1)
    return slope


def test_block_average_hand_case():
    x = np.arange(16, dtype=float).reshape(4, 4)
    out = block_average(x, factor=2)
    # each 2x2 block mean
    assert np.allclose(out, [[2.5, 4.5], [10.5, 12.5]])


def test_block_average_rejects_indivisible_grid():
    with pytest.raises(ConfigurationError):
        block_average(np.zeros((2, 6, 6)), factor=4)


def test_sample_shapes_and_determinism():
    spec = FieldSpec(size=32, seed=11)
    x1, y1 = generate_sample(spec)
    x2, y2 = generate_sample(spec)
    assert x1.shape == (2, 32, 32)
    assert y1.shape == (2, 8, 8)
    assert np.array_equal(x1, x2)
    assert np.array_equal(y1, y2)
    x3, _ = generate_sample(dataclasses.replace(spec, seed=12))
    assert not np.array_equal(x1, x3)


def test_lowres_is_block_mean_of_hires():
    x, y = generate_sample(FieldSpec(size=32, seed=3))
    for c in range(2):
        for by in range(8):
            for bx in range(8):
                block = x[c, 4 * by : 4 * by + 4, 4 * bx : 4 * bx + 4]
                assert np.isclose(y[c, by, bx], block.mean(), rtol=0, atol=1e-12)


def test_rho_one_makes_anomalies_identical():
    # equal means: the two components go through identical arithmetic
    spec = FieldSpec(size=32, rho=1.0, mean_u=2.0, mean_v=2.0, seed=5)
    x, _ = generate_sample(spec)
    assert np.array_equal(x[0], x[1])
    # distinct means: identity holds up to rounding of the mean shift
    spec = FieldSpec(size=32, rho=1.0, mean_u=3.0, mean_v=1.0, seed=5)
    x, _ = generate_sample(spec)
    assert np.allclose(x[0] - spec.mean_u, x[1] - spec.mean_v, rtol=0, atol=1e-12)


def test_sigma_zero_gives_constant_fields():
    spec = FieldSpec(size=16, sigma=0.0, mean_u=2.5, mean_v=-1.0, seed=7)
    x, y = generate_sample(spec)
    assert np.all(x[0] == 2.5)
    assert np.all(x[1] == -1.0)
    assert np.all(y[0] == 2.5)


def test_component_correlation_tracks_rho():
    rho = 0.9
    corrs = []
    for seed in range(20):
        x, _ = generate_sample(FieldSpec(size=64, rho=rho, seed=seed))
        corrs.append(np.corrcoef(x[0].ravel(), x[1].ravel())[0, 1])
    assert abs(np.mean(corrs) - rho) < 0.05


@pytest.mark.parametrize("gamma", [5.0 / 3.0, 3.0])
def test_radial_spectrum_slope_matches_gamma(gamma):
    fields = np.stack(
        [generate_sample(FieldSpec(size=32, gamma=gamma, seed=s))[0][0] for s in range(100)]
    )
    slope = _radial_density_slope(fields)
    assert abs(slope - (-gamma)) < 0.3


def test_field_std_matches_sigma():
    rng = np.random.default_rng(0)
    for _ in range(5):
        seed = int(rng.integers(1 << 30))
        x, _ = generate_sample(FieldSpec(size=32, sigma=2.0, seed=seed))
        # u is sigma * unit-std field, up to float32 rounding
        assert np.isclose(x[0].std(), 2.0, rtol=1e-5)


def _tiny_dataset(seed=0):
    return build_dataset(FieldSpec(size=16, seed=seed), n_train=12, n_val=5, n_ood=5)


def test_split_seeds_are_disjoint_offsets():
    ds = _tiny_dataset(seed=9)
    spec = split_spec(ds, "train")
    x0, _ = generate_sample(dataclasses.replace(spec, seed=9))
    assert np.array_equal(ds.hi["train"][0], x0.astype(np.float32).astype(np.float64))
    vspec = split_spec(ds, "val")
    xv, _ = generate_sample(dataclasses.replace(vspec, seed=9 + (1 << 20)))
    assert np.array_equal(ds.hi["val"][0], xv.astype(np.float32).astype(np.float64))
    ospec = split_spec(ds, "test_ood")
    xo, _ = generate_sample(dataclasses.replace(ospec, seed=9 + (2 << 20)))
    assert np.array_equal(ds.hi["test_ood"][0], xo.astype(np.float32).astype(np.float64))


def test_oversized_split_rejected_before_generation():
    with pytest.raises(ConfigurationError, match="overlap"):
        build_dataset(FieldSpec(size=16), n_train=1 << 20, n_val=1, n_ood=1)


def test_default_ood_spec_shifts_gamma_and_means():
    spec = FieldSpec(size=32, gamma=5.0 / 3.0, mean_u=3.0, mean_v=1.0)
    ood = default_ood_spec(spec)
    assert ood.gamma == 3.0
    assert ood.mean_u == 4.5
    assert ood.mean_v == 2.5
    assert ood.size == spec.size


def test_ood_windspeed_tail_shifts():
    ds = build_dataset(FieldSpec(size=32, seed=1), n_train=8, n_val=16, n_ood=16)
    speed_id = np.hypot(ds.hi["val"][:, 0], ds.hi["val"][:, 1])
    speed_ood = np.hypot(ds.hi["test_ood"][:, 0], ds.hi["test_ood"][:, 1])
    assert np.percentile(speed_ood, 99) - np.percentile(speed_id, 99) > 0.5


def test_normalized_train_split_has_zero_mean_unit_std():
    ds = _tiny_dataset()
    normed = np.stack([ds.normalize(x) for x in ds.hi["train"]])
    for c in range(2):
        assert abs(normed[:, c].mean()) < 1e-8
        assert abs(normed[:, c].std() - 1.0) < 1e-8


def test_normalize_denormalize_round_trip():
    ds = _tiny_dataset()
    x = ds.hi["val"][2]
    back = ds.denormalize(ds.normalize(x))
    assert np.allclose(back, x, rtol=0, atol=1e-10)


def test_write_read_round_trip_is_bitwise(tmp_path):
    ds = _tiny_dataset(seed=4)
    write_dataset(ds, tmp_path / "a")
    loaded = read_dataset(tmp_path / "a")
    for split in ds.split_names():
        assert np.array_equal(loaded.hi[split], ds.hi[split])
        assert np.array_equal(loaded.lo[split], ds.lo[split])
    assert loaded.stats == ds.stats
    # regenerating and rewriting produces identical bytes
    write_dataset(_tiny_dataset(seed=4), tmp_path / "b")
    for fname in ("meta.json", "fields.f32", "lowres.f32"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()


def test_payload_layout_is_little_endian_sample_major(tmp_path):
    ds = _tiny_dataset()
    write_dataset(ds, tmp_path)
    raw = np.frombuffer((tmp_path / "fields.f32").read_bytes(), dtype="<f4")
    first = raw[: 2 * 16 * 16].reshape(2, 16, 16).astype(np.float64)
    assert np.array_equal(first, ds.hi["train"][0])


def test_truncated_payload_names_file(tmp_path):
    ds = _tiny_dataset()
    write_dataset(ds, tmp_path)
    path = tmp_path / "lowres.f32"
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ConfigurationError, match="lowres.f32"):
        read_dataset(tmp_path)


def test_unknown_meta_keys_are_ignored(tmp_path):
    ds = _tiny_dataset()
    write_dataset(ds, tmp_path)
    meta = json.loads((tmp_path / "meta.json").read_text())
    meta["annotation"] = {"written_by": "a future version"}
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    loaded = read_dataset(tmp_path)
    assert np.array_equal(loaded.hi["train"], ds.hi["train"])


def test_missing_meta_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match="meta.json"):
        read_dataset(tmp_path)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"size": 12},
        {"size": 4},
        {"sigma": -1.0},
        {"rho": 1.5},
    ],
)
def test_bad_field_specs_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        generate_sample(FieldSpec(**kwargs))


def test_dataset_stats_follow_float32_rounding():
    ds = _tiny_dataset()
    train = ds.hi["train"]
    assert np.array_equal(train, train.astype(np.float32).astype(np.float64))
    for c in range(2):
        assert ds.stats["mean"][c] == float(train[:, c].mean())
        assert ds.stats["std"][c] == float(train[:, c].std())

"""Shared fixtures: a tiny trained setup reused by the training/eval/CLI tests.

Everything is built through the CLI itself so the run directories carry the
resolved_config.json files the downstream commands rely on.
"""

import pytest

from qdscale import cli

# a 16x16 problem small enough that six training steps take well under a second
TINY = [
    "--data.size", "16", "--data.n_train", "6", "--data.n_val", "4", "--data.n_ood", "3",
    "--model.level_channels", "[4,8]", "--model.emb_dim", "8",
    "--diffusion.T", "6",
    "--train.steps", "6", "--train.checkpoint_every", "3", "--train.batch", "2",
]

# an 8x8 problem with a 2x2 bottleneck so the quantum vertex is exercised
HYBRID_TINY = [
    "--data.size", "8", "--data.n_train", "6", "--data.n_val", "4", "--data.n_ood", "3",
    "--model.level_channels", "[4,4,8]", "--model.emb_dim", "8",
    "--diffusion.T", "4",
    "--train.steps", "2", "--train.checkpoint_every", "2", "--train.batch", "2",
    "--hybrid.enabled", "true",
    "--ansatz.n_qubits", "4", "--ansatz.variant", "A", "--ansatz.layers", "1",
]


@pytest.fixture(scope="session")
def tiny_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny16")
    ds, reg, diff, diff2 = root / "ds", root / "reg", root / "diff", root / "diff2"
    assert cli.main(["gen-data", "--out", str(ds)] + TINY) == 0
    assert cli.main(["train", "--stage", "regression", "--data", str(ds),
                     "--out", str(reg)] + TINY) == 0
    assert cli.main(["train", "--stage", "diffusion", "--data", str(ds),
                     "--out", str(diff), "--regression", str(reg)] + TINY) == 0
    assert cli.main(["train", "--stage", "diffusion", "--data", str(ds),
                     "--out", str(diff2), "--regression", str(reg),
                     "--seed", "5"] + TINY) == 0
    return {"root": root, "ds": ds, "reg": reg, "diff": diff, "diff2": diff2}


@pytest.fixture(scope="session")
def hybrid_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny8")
    ds, reg, hyb = root / "ds", root / "reg", root / "hyb"
    assert cli.main(["gen-data", "--out", str(ds)] + HYBRID_TINY) == 0
    assert cli.main(["train", "--stage", "regression", "--data", str(ds),
                     "--out", str(reg)] + HYBRID_TINY) == 0
    assert cli.main(["train", "--stage", "diffusion", "--data", str(ds),
                     "--out", str(hyb), "--regression", str(reg)] + HYBRID_TINY) == 0
    return {"root": root, "ds": ds, "reg": reg, "hyb": hyb}

"""Shared fixtures: one small trained pipeline plus its artifact files.

Everything here is session-scoped because even the toy model costs a few
seconds to train. Consumers must treat the artifacts as read-only; tests
that need to mutate a file copy it into their own tmp_path first.
"""

import numpy as np
import pytest

from sketchembed import cli
from sketchembed.dataset import load_cache
from sketchembed.pipeline import load_pipeline

TOY_CONFIG = """\
model.d_model=32
model.n_layers=1
model.n_heads=4
model.d_ff=64
model.max_len=80
model.dropout=0.0
train.steps=150
train.batch_size=32
train.warmup=50
train.seed=0
"""

# acceptance tests register one (name, passed, detail) entry per criterion;
# pytest_terminal_summary prints them at the end of the run
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_RESULTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        name, passed, detail = ACCEPTANCE_RESULTS[num]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {name}: {verdict} ({detail})")


@pytest.fixture(scope="session")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("artifacts")


@pytest.fixture(scope="session")
def toy_paths(work):
    """Dataset, codebook, checkpoint, and test-split index, built through
    the CLI so the fixtures double as a smoke test of the real commands."""
    paths = {
        "dataset": work / "toy.skds",
        "codebook": work / "toy.skcb",
        "config": work / "toy.cfg",
        "checkpoint": work / "toy.skfm",
        "index": work / "toy.skem",
    }
    paths["config"].write_text(TOY_CONFIG)
    assert cli.main([
        "synth", "--train-per-class", "40", "--test-per-class", "10",
        "--seed", "0", "--output", str(paths["dataset"]),
    ]) == 0
    assert cli.main([
        "fit-dict", "--dataset", str(paths["dataset"]), "--k", "64",
        "--sample", "8000", "--seed", "0", "--output", str(paths["codebook"]),
    ]) == 0
    assert cli.main([
        "train", "--dataset", str(paths["dataset"]), "--scheme", "dict",
        "--codebook", str(paths["codebook"]), "--config", str(paths["config"]),
        "--output", str(paths["checkpoint"]),
    ]) == 0
    assert cli.main([
        "embed", "--checkpoint", str(paths["checkpoint"]),
        "--codebook", str(paths["codebook"]), "--dataset", str(paths["dataset"]),
        "--split", "test", "--metric", "cosine", "--output", str(paths["index"]),
    ]) == 0
    return paths


@pytest.fixture(scope="session")
def toy_dataset(toy_paths):
    return load_cache(toy_paths["dataset"])


@pytest.fixture(scope="session")
def toy_pipe(toy_paths):
    return load_pipeline(toy_paths["checkpoint"], toy_paths["codebook"])


@pytest.fixture(scope="session")
def toy_joint_paths(toy_paths, work):
    """Joint retrieval artifacts: SKJM1 store plus a raster-side index."""
    paths = {"joint": work / "toy.skjm", "joint_index": work / "joint_idx.skem"}
    assert cli.main([
        "train-joint", "--checkpoint", str(toy_paths["checkpoint"]),
        "--codebook", str(toy_paths["codebook"]), "--dataset", str(toy_paths["dataset"]),
        "--pretrain-steps", "80", "--phase1-steps", "60", "--phase2-steps", "40",
        "--seed", "0", "--index-out", str(paths["joint_index"]),
        "--index-split", "test", "--output", str(paths["joint"]),
    ]) == 0
    return paths


@pytest.fixture()
def rng():
    return np.random.default_rng(0)

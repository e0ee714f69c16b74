import json

import numpy as np
import pytest

from critprm.centrality import CentralityConfig, Dataset, build_dataset
from critprm.env import generate_narrow_passage
from critprm.learner import MlpModel, TrainConfig, train
from critprm.roadmap import RoadmapConfig

# training family: 2D, three walls of one 0.03 gap, disjoint from every test env seed
TRAIN = dict(dim=2, walls=3, gaps=1, gap_width=0.03, first_seed=1000, num_envs=110, n=500, m=50, seed=0)
ARCH = [100, 128, 64, 1]
EPOCHS = 30


def _build(cache_dir):
    key = json.dumps([TRAIN, ARCH, EPOCHS], sort_keys=True)
    ds_path, model_path, key_path = cache_dir / "train.jsonl", cache_dir / "model.json", cache_dir / "key.json"
    if key_path.exists() and key_path.read_text() == key:
        return Dataset.load(ds_path), MlpModel.load(model_path), None
    t = TRAIN
    envs = [
        generate_narrow_passage(t["dim"], t["walls"], t["gaps"], t["gap_width"], t["first_seed"] + i)
        for i in range(t["num_envs"])
    ]
    ds = build_dataset(envs, RoadmapConfig(t["n"]), CentralityConfig(m=t["m"]), None, np.random.default_rng(t["seed"]))
    model, report = train(ds, TrainConfig(epochs=EPOCHS, seed=t["seed"]), ARCH)
    ds.save(ds_path)
    model.save(model_path)
    key_path.write_text(key)
    return ds, model, report


@pytest.fixture(scope="session")
def trained(request):
    """(dataset, model) for the narrow-passage family; cached across runs."""
    ds, model, _ = _build(request.config.cache.mkdir("critprm_training"))
    return ds, model


@pytest.fixture(scope="session")
def training_set(trained):
    return trained[0]


@pytest.fixture(scope="session")
def model(trained):
    return trained[1]


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and print it."""

    def _report(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

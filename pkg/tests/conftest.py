import numpy as np
import pytest

from agegender.config_types import ModelConfig
from agegender.model import build_model
from agegender.training import Utterance, prepare

TINY_STAGE = ((4, 10, 5), (4, 3, 2))


def tiny_config(num_layers=2, dropout_rate=0.1):
    return ModelConfig(num_layers=num_layers, hidden_dim=8, ffn_dim=16, num_heads=2, head_hidden=8,
                       dropout_rate=dropout_rate, conv_stage=TINY_STAGE, sample_rate=1000,
                       pos_conv_kernel=4, pos_conv_groups=2)


@pytest.fixture
def tiny_model():
    return build_model(tiny_config(num_layers=3), seed=7)


def tiny_batch(model, n=4, seed=0):
    rng = np.random.default_rng(seed)
    waves = [rng.normal(size=int(rng.integers(120, 200))) for _ in range(n)]
    labels = [(float(rng.uniform(5, 90)), int(i % 3)) for i in range(n)]
    return prepare(model, waves, labels)


@pytest.fixture
def tiny_utterances(tiny_model):
    return tiny_batch(tiny_model)


__all__ = ["tiny_config", "tiny_batch", "Utterance"]


def random_records(seed):
    """Random manifest: 1-3 datasets, varied speakers per cell and samples per speaker."""
    from agegender.config_types import GENDERS
    from agegender.curation import SampleRecord

    rng = np.random.default_rng(seed)
    records = []
    for d in range(int(rng.integers(1, 4))):
        dataset = f"ds{d}"
        for s in range(int(rng.integers(2, 60))):
            gender = GENDERS[int(rng.integers(0, 3))]
            age = int(rng.integers(3, 15)) if gender == "child" else int(rng.integers(15, 90))
            for k in range(int(rng.integers(1, 45))):
                records.append(SampleRecord(f"{dataset}/s{s}/u{k}.wav", f"s{s}", age, gender, dataset,
                                            round(float(rng.uniform(0.5, 9.0)), 3)))
    return records


def curation_params(seed):
    rng = np.random.default_rng([seed, 1])
    cell_test = int(rng.integers(1, 8))
    return dict(cap=int(rng.integers(1, 30)), cell_max=cell_test + int(rng.integers(0, 15)), cell_test=cell_test,
                dev_fraction=float(rng.choice([0.1, 0.2, 0.3])), seed=int(rng.integers(1 << 31)))


# Acceptance results, filled by tests/test_acceptance.py and printed at the end of the run.
ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")

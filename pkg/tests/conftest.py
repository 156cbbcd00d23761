import numpy as np
import pytest
from hypothesis import settings

from perturbgp import MaternModel, make_dataset, sample_design

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def joint_model():
    return MaternModel()


@pytest.fixture
def small_dataset(joint_model):
    design = sample_design(25, 1, 0.3, seed=11)
    return make_dataset(joint_model, [0.9, 1.8], design, seed=12)


# one pass/fail line per acceptance criterion, repeated in the terminal summary
VERDICTS = {}


@pytest.fixture
def verdict(request):
    number = int(request.node.name.split("_")[2])

    def record(ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS[number] = line
        print(line)
        return ok

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    name = item.name
    if rep.when == "call" and name.startswith("test_criterion_") and rep.failed:
        number = int(name.split("_")[2])
        VERDICTS.setdefault(number, f"criterion {number:2d}: FAIL  {call.excinfo.typename}")


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])

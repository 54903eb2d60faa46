import numpy as np
import pytest

from attackgen import datasets, models
from attackgen.models import Access, ModelHandle


@pytest.fixture(scope="session")
def blobs():
    return datasets.gen_blobs(200, 2, 2, seed=0)


@pytest.fixture(scope="session")
def patterns():
    return datasets.gen_patterns(300, 8, 8, seed=0)


@pytest.fixture(scope="session")
def shapes_train():
    return datasets.gen_shapes_seg(200, 16, 16, 4, seed=0)


@pytest.fixture(scope="session")
def scenes_attack():
    """Attack-time scenes, disjoint seed from the training scenes."""
    return datasets.gen_shapes_seg(50, 16, 16, 4, seed=1)


@pytest.fixture(scope="session")
def scenes_heldout():
    return datasets.gen_shapes_seg(50, 16, 16, 4, seed=2)


@pytest.fixture(scope="session")
def linear_model(blobs):
    return models.train("linear", blobs, 50, seed=0)


@pytest.fixture(scope="session")
def mlp_model(blobs):
    return models.train("mlp", blobs, 50, seed=0)


@pytest.fixture(scope="session")
def cnn_model(patterns):
    return models.train("cnn-classifier", patterns, 30, seed=0)


@pytest.fixture(scope="session")
def seg_model(shapes_train):
    return models.train("conv-segmenter", shapes_train, 40, seed=0)


@pytest.fixture(scope="session")
def zoo(linear_model, mlp_model, cnn_model, seg_model):
    """arch -> (model, dataset id used for attacks)."""
    return {
        "linear": (linear_model, "blobs"),
        "mlp": (mlp_model, "blobs"),
        "cnn-classifier": (cnn_model, "patterns"),
        "conv-segmenter": (seg_model, "shapes:n=50,seed=1"),
    }


def halfplane_model():
    """2-D linear victim: class 1 iff x[0] > 0, decision boundary x[0] = 0."""
    m = models.init_model("linear", (2,), 2, seed=0)
    m.params["W"] = np.array([[-1.0, 1.0], [0.0, 0.0]])
    m.params["b"] = np.zeros(2)
    return m


@pytest.fixture
def halfplane():
    return halfplane_model()


def white(model):
    return ModelHandle(model, Access.WHITE_BOX)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

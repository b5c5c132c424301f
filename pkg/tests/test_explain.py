import numpy as np
import pytest

from iianet.config import tiny_config
from iianet.errors import ContractError
from iianet.explain import grad_cam, normalize_map, read_pgm, render_pgm
from iianet.model import build
from iianet.tensor import make_rng


@pytest.fixture(scope="module")
def model():
    return build(tiny_config(4), 0)[1]


@pytest.fixture(scope="module")
def image():
    return make_rng(5).random((3, 32, 32))


def test_shape_and_range(model, image):
    hm = grad_cam(model, image, 1)
    assert hm.shape == (8, 8)
    assert hm.values.min() >= 0 and hm.values.max() <= 1
    assert hm.values.max() == 1 or not hm.values.any()


def test_dead_class_is_zero(model, image):
    model.head.weight.data[2] = 0.0
    assert not grad_cam(model, image, 2).values.any()


def test_positive_scale_invariance(image):
    _, m = build(tiny_config(4), 3)
    a = grad_cam(m, image, 0).values
    m.head.weight.data[0] *= 7.5
    b = grad_cam(m, image, 0).values
    assert np.abs(a - b).max() < 1e-10


def test_invalid_class(model, image):
    with pytest.raises(ContractError):
        grad_cam(model, image, 4)


def test_normalize_edge_cases():
    assert not normalize_map(np.zeros((2, 2))).any()
    assert np.array_equal(normalize_map(np.full((2, 2), 3.0)), np.ones((2, 2)))


def test_pgm_bytes(tmp_path):
    path = tmp_path / "h.pgm"
    render_pgm(np.array([[0.0, 1.0], [0.5, 0.25]]), path)
    blob = path.read_bytes()
    assert blob == b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])
    assert read_pgm(path).tolist() == [[0, 255], [128, 64]]
    render_pgm(np.zeros((3, 2)), path)
    assert read_pgm(path).shape == (3, 2) and not read_pgm(path).any()

import numpy as np
import pytest
import torch

from mimvc.dataset import MaskSpec, generate_mask, make_multiview_blobs
from mimvc.exceptions import DataError
from mimvc.state import load_state, read_container, save_state
from mimvc.training import TrainConfig, train

CFG = TrainConfig(epochs=3, hidden_dims=(16, 12, 8), k=4)


@pytest.fixture(scope="module")
def data():
    ds = make_multiview_blobs(n_samples=40, dims=(5, 6), seed=2)
    return ds.with_mask(generate_mask(40, 2, MaskSpec(0.2, 1)))


def test_roundtrip(tmp_path, data):
    state, _ = train(data, CFG)
    F = state.embed(data)
    save_state(state, tmp_path / "m.bin", extra={"F": F})
    back, extras = load_state(tmp_path / "m.bin")
    assert back.epoch == 3 and back.config == CFG
    for (n1, p1), (n2, p2) in zip(state.model.named_parameters(), back.model.named_parameters()):
        assert n1 == n2 and torch.equal(p1, p2)
        s1, s2 = state.optimizer.state[p1], back.optimizer.state[p2]
        assert torch.equal(s1["exp_avg"], s2["exp_avg"])
        assert torch.equal(s1["exp_avg_sq"], s2["exp_avg_sq"])
        assert float(s1["step"]) == float(s2["step"])
    np.testing.assert_array_equal(extras["F"], F)
    np.testing.assert_array_equal(back.embed(data), F)


def test_resume_matches_uninterrupted(tmp_path, data):
    straight, _ = train(data, TrainConfig(**{**CFG.to_dict(), "epochs": 5}))
    first, _ = train(data, CFG)
    save_state(first, tmp_path / "m.bin")
    resumed, _ = load_state(tmp_path / "m.bin")
    resumed, _ = train(data, TrainConfig(**{**CFG.to_dict(), "epochs": 2}), state=resumed)
    for p1, p2 in zip(straight.model.parameters(), resumed.model.parameters()):
        assert torch.equal(p1, p2)


def test_header_layout(tmp_path, data):
    state, _ = train(data, CFG)
    save_state(state, tmp_path / "m.bin")
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw.startswith(b"MIMVC-STATE 1\n")
    header, arrays = read_container(tmp_path / "m.bin")
    n_params = sum(p.numel() for p in state.model.parameters())
    assert sum(a.size for a in arrays.values()) == 3 * n_params
    assert header["model"]["dims"] == [5, 6]


def test_rejects_other_files(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"not a state\n{}\n")
    with pytest.raises(DataError):
        load_state(tmp_path / "x.bin")


def test_truncated(tmp_path, data):
    state, _ = train(data, CFG)
    save_state(state, tmp_path / "m.bin")
    raw = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-64])
    with pytest.raises(DataError):
        load_state(tmp_path / "t.bin")

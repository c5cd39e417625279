import numpy as np
import pytest

from znorm_lab.data import (CIFAR_RECORD, DataFormatError, Dataset, gen_blob_classes, gen_blob_masks,
                            gen_blobs, gen_two_moons, load_dataset, read_cifar10_binary,
                            read_cifar10_files, read_csv, save_dataset, write_cifar10_binary)
from znorm_lab.metrics import accuracy
from znorm_lab.nn import make_residual_mlp
from znorm_lab.optim import Optimizer


def same(a: Dataset, b: Dataset):
    return (a.inputs.tobytes() == b.inputs.tobytes() and a.targets.tobytes() == b.targets.tobytes()
            and np.array_equal(a.train_idx, b.train_idx) and np.array_equal(a.test_idx, b.test_idx))


@pytest.mark.parametrize("gen", [
    lambda s: gen_two_moons(101, 0.1, s), lambda s: gen_blobs(100, 3, s),
    lambda s: gen_blob_masks(10, 12, s), lambda s: gen_blob_classes(21, 8, s)])
def test_generators_deterministic(gen):
    assert same(gen(5), gen(5))
    assert not same(gen(5), gen(6))


def test_class_balance():
    for ds, k in ((gen_two_moons(101, 0.1, 0), 2), (gen_blobs(100, 3, 0), 3), (gen_blob_classes(21, 8, 0), 4)):
        counts = np.bincount(ds.targets, minlength=k)
        assert counts.max() - counts.min() <= 1 and counts.sum() == len(ds)


def test_blob_masks_have_both_classes():
    ds = gen_blob_masks(200, 8, seed=1)
    assert ds.inputs.shape == (200, 1, 8, 8) and ds.targets.shape == (200, 8, 8)
    flat = ds.targets.reshape(200, -1)
    assert np.all(flat.max(axis=1) == 1) and np.all(flat.min(axis=1) == 0)


def test_generator_preconditions():
    with pytest.raises(ValueError):
        gen_two_moons(1)
    with pytest.raises(ValueError):
        gen_blob_masks(4, 3)


@pytest.mark.slow
def test_noise_free_two_moons_fit_perfectly():
    ds = gen_two_moons(200, 0.0, seed=0)
    net = make_residual_mlp(16, 2, 2, 2, seed=1)
    opt = Optimizer(kind="adam", lr=0.01)
    for _ in range(1500):
        _, grads = net.backward(ds.inputs, ds.targets)
        opt.step(net, grads)
    assert accuracy(net.predict(ds.inputs).argmax(axis=1), ds.targets) == 1.0


def cifar_bytes(labels, seed=0):
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(len(labels), 3072), dtype=np.uint8)
    return pixels, np.concatenate([np.concatenate([[lab], px]) for lab, px in zip(labels, pixels)]).astype(np.uint8)


def test_cifar_two_record_fixture(tmp_path):
    pixels, raw = cifar_bytes([3, 9])
    path = tmp_path / "batch.bin"
    path.write_bytes(raw.tobytes())
    ds = read_cifar10_binary(path)
    assert len(ds) == 2 and ds.inputs.shape == (2, 3, 32, 32)
    assert ds.targets.tolist() == [3, 9]
    # record layout: R plane, then G, then B, each row-major
    assert ds.inputs[1, 1, 0, 5] == pixels[1, 1024 + 5] / 255.0
    assert ds.inputs[0, 2, 31, 31] == pixels[0, 3071] / 255.0
    assert ds.inputs.min() >= 0 and ds.inputs.max() <= 1
    assert len(read_cifar10_binary(path, limit=1)) == 1


def test_cifar_writer_round_trip(tmp_path):
    pixels, _ = cifar_bytes([0, 1, 2], seed=4)
    path = tmp_path / "w.bin"
    write_cifar10_binary(path, pixels, [0, 1, 2])
    assert path.stat().st_size == 3 * CIFAR_RECORD
    ds = read_cifar10_files([path, path], limit=5)
    assert len(ds) == 5
    assert np.array_equal(np.round(ds.inputs[0].ravel() * 255).astype(np.uint8), pixels[0])


def test_cifar_malformed_files(tmp_path):
    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    assert len(read_cifar10_binary(empty)) == 0
    short = tmp_path / "short.bin"
    short.write_bytes(bytes(3072))
    with pytest.raises(DataFormatError, match="multiple of 3073"):
        read_cifar10_binary(short)
    _, raw = cifar_bytes([1, 12])
    bad = tmp_path / "bad.bin"
    bad.write_bytes(raw.tobytes())
    with pytest.raises(DataFormatError, match="label 12"):
        read_cifar10_binary(bad)


def test_csv_fixtures(tmp_path):
    good = tmp_path / "good.csv"
    good.write_text("a,b,label,c\n1,2,0,3\n4.5,5,1,6\n7,8,1,-9e-1\n")
    ds = read_csv(good, "label")
    assert ds.inputs.shape == (3, 3) and ds.targets.tolist() == [0, 1, 1]
    assert ds.inputs[2].tolist() == [7.0, 8.0, -0.9]
    header_only = tmp_path / "h.csv"
    header_only.write_text("x,label\n")
    assert len(read_csv(header_only, "label")) == 0
    with pytest.raises(DataFormatError, match="'target'"):
        read_csv(good, "target")
    ragged = tmp_path / "r.csv"
    ragged.write_text("x,label\n1,2\n3\n")
    with pytest.raises(DataFormatError, match=":3:"):
        read_csv(ragged, "label")
    text = tmp_path / "t.csv"
    text.write_text("x,label\n1,cat\n")
    with pytest.raises(DataFormatError, match="non-numeric"):
        read_csv(text, "label")


def test_container_round_trip(tmp_path):
    for ds in (gen_two_moons(50, 0.1, 2).split(0.2, 7), gen_blob_masks(6, 8, 3)):
        path = tmp_path / "ds.npz"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert same(ds, back) and back.name == ds.name and back.seed == ds.seed


def test_split_determinism_and_invariants():
    ds = gen_blobs(97, 3, 0)
    a, b = ds.split(0.3, 11), ds.split(0.3, 11)
    assert np.array_equal(a.test_idx, b.test_idx)
    assert not np.array_equal(a.test_idx, ds.split(0.3, 12).test_idx)
    assert len(a.test_idx) == 29
    assert not set(a.train_idx) & set(a.test_idx)
    with pytest.raises(DataFormatError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(DataFormatError):
        Dataset(np.zeros((3, 2)), np.zeros(3), [0, 1], [1, 2])

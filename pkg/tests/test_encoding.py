import gzip
import struct

import numpy as np
import pytest

from snnstdp.encoding import (
    Dataset,
    EncodingParams,
    IdxFormatError,
    InsufficientSamplesError,
    encode_image,
    encode_split,
    load_idx,
    pixel_to_frequency,
    select_subset,
    spike_probabilities,
    write_idx,
)


def make_dataset(per_class=20, classes=10):
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(classes), per_class).astype(np.uint8)
    images = rng.integers(0, 256, size=(len(labels), 28, 28), dtype=np.uint8)
    return Dataset(images, labels)


@pytest.mark.parametrize("compress", [False, True])
def test_idx_round_trip(tmp_path, compress):
    ds = make_dataset(3)
    ip, lp = tmp_path / "img", tmp_path / "lab"
    write_idx(ds.images, ds.labels, ip, lp, compress=compress)
    back = load_idx(ip, lp)
    np.testing.assert_array_equal(back.images, ds.images)
    np.testing.assert_array_equal(back.labels, ds.labels)
    if compress:
        assert ip.read_bytes()[:2] == b"\x1f\x8b"


def test_idx_errors_name_file_and_offset(tmp_path):
    ds = make_dataset(2)
    ip, lp = tmp_path / "img", tmp_path / "lab"
    write_idx(ds.images, ds.labels, ip, lp)
    bad = tmp_path / "bad"
    bad.write_bytes(struct.pack(">I", 0x0803 + 1) + ip.read_bytes()[4:])
    with pytest.raises(IdxFormatError, match="bad.*offset 0"):
        load_idx(bad, lp)
    trunc = tmp_path / "trunc"
    trunc.write_bytes(ip.read_bytes()[:-10])
    with pytest.raises(IdxFormatError, match="trunc.*truncated payload"):
        load_idx(trunc, lp)
    lab_short = tmp_path / "lab_short"
    write_idx(ds.images[:5], ds.labels[:5], tmp_path / "i5", lab_short)
    with pytest.raises(IdxFormatError, match="5 labels"):
        load_idx(ip, lab_short)
    tiny = tmp_path / "tiny"
    tiny.write_bytes(b"\x00")
    with pytest.raises(IdxFormatError):
        load_idx(tiny, lp)


def test_gzip_autodetect_by_content(tmp_path):
    ds = make_dataset(1)
    ip, lp = tmp_path / "a.raw", tmp_path / "b.raw"
    write_idx(ds.images, ds.labels, ip, lp)
    gz = tmp_path / "images_without_suffix"
    gz.write_bytes(gzip.compress(ip.read_bytes()))
    np.testing.assert_array_equal(load_idx(gz, lp).images, ds.images)


def test_select_subset_balanced_disjoint():
    ds = make_dataset(30)
    tr, te = select_subset(ds, [0, 1, 2, 3, 4], 12, 23, seed=3)
    assert np.bincount(tr.labels, minlength=5)[:5].tolist() == [3, 3, 2, 2, 2]
    assert np.bincount(te.labels, minlength=5)[:5].tolist() == [5, 5, 5, 4, 4]
    assert not set(tr.indices) & set(te.indices)
    assert np.all(ds.labels[tr.indices] == tr.labels)
    tr2, te2 = select_subset(ds, [0, 1, 2, 3, 4], 12, 23, seed=3)
    np.testing.assert_array_equal(tr.indices, tr2.indices)
    np.testing.assert_array_equal(te.indices, te2.indices)


def test_select_subset_insufficient():
    ds = make_dataset(10)
    with pytest.raises(InsufficientSamplesError, match="class 0.*short by 5"):
        select_subset(ds, [0, 1], 10, 20, 0)
    with pytest.raises(ValueError):
        select_subset(ds, [1, 1], 2, 2, 0)


def test_pixel_to_frequency():
    assert pixel_to_frequency(0.0) == 5.0
    assert pixel_to_frequency(1.0) == 70.0
    assert pixel_to_frequency(0.5) == 37.5
    with pytest.raises(ValueError):
        pixel_to_frequency(1.01)
    with pytest.raises(ValueError):
        pixel_to_frequency(-0.1)


def test_encoding_params_validation():
    with pytest.raises(ValueError):
        EncodingParams(f_min=10, f_max=5)
    with pytest.raises(ValueError):
        EncodingParams(duration=100, dt=0.3)
    with pytest.raises(ValueError):
        EncodingParams(mode="burst")
    assert EncodingParams().n_steps == 100


def test_encode_image_shape_and_determinism():
    img = np.full((28, 28), 255, dtype=np.uint8)
    a = encode_image(img, seed=1, key=7)
    b = encode_image(img, seed=1, key=7)
    c = encode_image(img, seed=1, key=8)
    assert a.shape == (784, 100) and a.dtype == bool
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        encode_image(np.zeros(10))


def test_periodic_mode():
    p = EncodingParams(mode="periodic")
    img = np.zeros((28, 28), dtype=np.uint8)
    img[0, 0] = 255
    bits = encode_image(img, p)
    # 70 Hz -> period round(14.29) = 14 ms; 5 Hz -> period 200 ms
    assert bits[0].sum() == len(range(0, 100, 14))
    assert bits[1].sum() == 1


def test_spike_probabilities():
    img = np.zeros((28, 28))
    img[0, 0] = 255
    pr = spike_probabilities(img)
    assert pr[0] == pytest.approx(0.07) and pr[1] == pytest.approx(0.005)


def test_encode_split():
    ds = make_dataset(4)
    tr, _ = select_subset(ds, [0, 1], 4, 2, 0)
    x = encode_split(tr, EncodingParams(), seed=2)
    assert x.shape == (4, 784, 100)
    np.testing.assert_array_equal(x[1], encode_image(tr.images[1], EncodingParams(), 2, tr.indices[1]))

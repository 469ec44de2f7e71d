import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sfrecomb.errors import DecodeError, FormatError, RangeError
from sfrecomb.rasterio import (
    DisparityMap,
    FlowMap,
    decode_disparity,
    decode_flow,
    encode_disparity,
    encode_flow,
    read_disparity,
    read_flow,
    read_gray,
    read_mask,
    write_disparity,
    write_flow,
    write_mask,
)


def test_decode_disparity_examples():
    d = decode_disparity(np.array([[256, 0, 65535]], np.uint16))
    assert d.values[0, 0] == 1.0
    assert not d.valid[0, 1] and d.values[0, 1] == 0
    assert d.values[0, 2] == 255.99609375


def test_encode_disparity_examples():
    d = DisparityMap(np.array([[1.0, 5.0, 0.001]]), np.array([[True, False, True]]))
    assert encode_disparity(d).tolist() == [[256, 0, 1]]


def test_encode_disparity_range_error():
    with pytest.raises(RangeError):
        encode_disparity(DisparityMap(np.array([[256.0]]), np.array([[True]])))


def test_invalid_out_of_range_values_are_ignored():
    d = DisparityMap(np.array([[300.0, 2.0]]), np.array([[False, True]]))
    assert encode_disparity(d).tolist() == [[0, 512]]


def test_flow_examples():
    f = FlowMap(np.array([[[0.0, 0.0], [-1.5, 2.0]]]), np.array([[True, True]]))
    s = encode_flow(f)
    assert s[0, 0].tolist() == [32768, 32768, 1]
    assert s[0, 1, 0] == 32672
    g = decode_flow(np.array([[[32768, 32768, 0]]], np.uint16))
    assert not g.valid[0, 0]


def test_flow_range_error():
    with pytest.raises(RangeError):
        encode_flow(FlowMap(np.array([[[600.0, 0.0]]]), np.array([[True]])))


def test_flow_file_channel_order(tmp_path):
    f = FlowMap(np.array([[[1.0, -2.0]]]), np.array([[True]]))
    write_flow(f, tmp_path / "f.png")
    raw = cv2.imread(str(tmp_path / "f.png"), cv2.IMREAD_UNCHANGED)
    # file channel 1 (red) holds u; OpenCV returns BGR
    assert raw[0, 0, 2] == 32768 + 64 and raw[0, 0, 1] == 32768 - 128 and raw[0, 0, 0] == 1


def test_read_errors(tmp_path):
    with pytest.raises(DecodeError):
        read_disparity(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not a png")
    with pytest.raises(DecodeError):
        read_flow(tmp_path / "junk.png")
    cv2.imwrite(str(tmp_path / "eight.png"), np.zeros((3, 3), np.uint8))
    with pytest.raises(FormatError):
        read_disparity(tmp_path / "eight.png")
    cv2.imwrite(str(tmp_path / "one.png"), np.zeros((3, 3), np.uint16))
    with pytest.raises(FormatError):
        read_flow(tmp_path / "one.png")
    with pytest.raises(FormatError):
        read_gray(tmp_path / "one.png")


def test_read_gray(tmp_path):
    img = np.array([[0, 255, 128]], np.uint8)
    cv2.imwrite(str(tmp_path / "g.png"), img)
    g = read_gray(tmp_path / "g.png")
    np.testing.assert_array_equal(g.intensity, [[0.0, 1.0, 128 / 255]])
    rgb = np.zeros((1, 1, 3), np.uint8)
    rgb[0, 0, 2] = 255  # red, in OpenCV's BGR order
    cv2.imwrite(str(tmp_path / "c.png"), rgb)
    assert read_gray(tmp_path / "c.png").intensity[0, 0] == pytest.approx(0.299, abs=1e-12)


def test_mask_roundtrip(tmp_path):
    m = np.array([[True, False], [False, True]])
    write_mask(m, tmp_path / "m.png")
    np.testing.assert_array_equal(read_mask(tmp_path / "m.png"), m)


def test_write_is_atomic(tmp_path):
    write_disparity(DisparityMap(np.ones((2, 2)), np.ones((2, 2), bool)), tmp_path / "d.png")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["d.png"]


shapes = st.tuples(st.integers(1, 12), st.integers(1, 12))


@st.composite
def disparity_maps(draw):
    shape = draw(shapes)
    s = draw(arrays(np.int64, shape, elements=st.integers(1, 65535)))
    valid = draw(arrays(np.bool_, shape))
    return DisparityMap(s / 256.0, valid)


@st.composite
def flow_maps(draw):
    shape = draw(shapes)
    s = draw(arrays(np.int64, shape + (2,), elements=st.integers(0, 65535)))
    valid = draw(arrays(np.bool_, shape))
    return FlowMap((s - 32768) / 64.0, valid)


@settings(max_examples=60, deadline=None)
@given(disparity_maps())
def test_disparity_roundtrip_property(tmp_path_factory, disp):
    path = tmp_path_factory.mktemp("d") / "d.png"
    write_disparity(disp, path)
    back = read_disparity(path)
    np.testing.assert_array_equal(back.valid, disp.valid)
    np.testing.assert_array_equal(back.values, disp.values)


@settings(max_examples=60, deadline=None)
@given(flow_maps())
def test_flow_roundtrip_property(tmp_path_factory, flow):
    path = tmp_path_factory.mktemp("f") / "f.png"
    write_flow(flow, path)
    back = read_flow(path)
    np.testing.assert_array_equal(back.valid, flow.valid)
    np.testing.assert_array_equal(back.uv, flow.uv)


@given(arrays(np.uint16, st.tuples(st.integers(1, 8), st.integers(1, 8), st.just(3))))
def test_decoding_is_finite(stored):
    f = decode_flow(stored)
    d = decode_disparity(stored[..., 0])
    assert np.isfinite(f.uv).all() and np.isfinite(d.values).all()

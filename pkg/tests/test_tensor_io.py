import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from evidensity.errors import (
    DataError,
    NpyFormatError,
    RankError,
    SchemaError,
    ShapeError,
    ValidationError,
)
from evidensity.tensor_io import (
    HeadAnnotations,
    read_annotations,
    read_array,
    write_annotations,
    write_array,
)


def test_round_trip_small_map(tmp_path):
    path = tmp_path / "map.npy"
    write_array([[1.0, 2.0], [3.0, 4.0]], path)
    assert np.array_equal(read_array(path), [[1.0, 2.0], [3.0, 4.0]])


def test_round_trip_single_pixel(tmp_path):
    path = tmp_path / "map.npy"
    write_array([[0.5]], path)
    assert read_array(path).tolist() == [[0.5]]


def test_round_trip_stack_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    stack = rng.random((3, 8, 8))
    first, second = tmp_path / "a.npy", tmp_path / "b.npy"
    write_array(stack, first)
    loaded = read_array(first)
    assert loaded.tobytes() == stack.tobytes()
    write_array(loaded, second)
    assert first.read_bytes() == second.read_bytes()


def test_interoperates_with_numpy(tmp_path):
    values = np.linspace(0.0, 5.0, 12).reshape(3, 4)
    ours, theirs = tmp_path / "ours.npy", tmp_path / "theirs.npy"
    write_array(values, ours)
    assert np.array_equal(np.load(ours), values)
    np.save(theirs, values)
    assert np.array_equal(read_array(theirs), values)


def test_float32_payload_upcast(tmp_path):
    path = tmp_path / "f32.npy"
    np.save(path, np.ones((2, 2), dtype=np.float32))
    loaded = read_array(path)
    assert loaded.dtype == np.float64
    assert np.array_equal(loaded, np.ones((2, 2)))


def test_three_dim_file_is_stack(tmp_path):
    path = tmp_path / "stack.npy"
    write_array(np.zeros((10, 64, 64)), path)
    assert read_array(path).shape == (10, 64, 64)


def test_rank_one_rejected(tmp_path):
    path = tmp_path / "vec.npy"
    np.save(path, np.zeros(5))
    with pytest.raises(RankError):
        read_array(path)


def test_empty_map_rejected(tmp_path):
    with pytest.raises(ShapeError):
        write_array(np.zeros((0, 0)), tmp_path / "empty.npy")


def test_bad_magic_offset_zero(tmp_path):
    path = tmp_path / "bad.npy"
    path.write_bytes(b"NOTNPY" + b"\x00" * 64)
    with pytest.raises(NpyFormatError) as excinfo:
        read_array(path)
    assert excinfo.value.offset == 0


def test_unsupported_version_offset_six(tmp_path):
    path = tmp_path / "bad.npy"
    good = tmp_path / "good.npy"
    write_array([[1.0]], good)
    blob = bytearray(good.read_bytes())
    blob[6:8] = b"\x02\x00"
    path.write_bytes(bytes(blob))
    with pytest.raises(NpyFormatError) as excinfo:
        read_array(path)
    assert excinfo.value.offset == 6


def test_unparsable_header_offset_ten(tmp_path):
    path = tmp_path / "bad.npy"
    header = b"{'descr': "  # truncated dict literal
    path.write_bytes(b"\x93NUMPY\x01\x00" + len(header).to_bytes(2, "little") + header)
    with pytest.raises(NpyFormatError) as excinfo:
        read_array(path)
    assert excinfo.value.offset == 10


def test_integer_descr_rejected(tmp_path):
    path = tmp_path / "ints.npy"
    np.save(path, np.zeros((2, 2), dtype=np.int64))
    with pytest.raises(NpyFormatError):
        read_array(path)


def test_fortran_order_rejected(tmp_path):
    path = tmp_path / "fortran.npy"
    np.save(path, np.asfortranarray(np.arange(6.0).reshape(2, 3)))
    with pytest.raises(NpyFormatError):
        read_array(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "short.npy"
    good = tmp_path / "good.npy"
    write_array(np.ones((4, 4)), good)
    path.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(NpyFormatError):
        read_array(path)


def test_non_finite_values_rejected_with_index(tmp_path):
    path = tmp_path / "nan.npy"
    values = np.ones((3, 3))
    values[1, 2] = np.nan
    np.save(path, values)
    with pytest.raises(DataError, match=r"\(1, 2\)"):
        read_array(path)


def test_stack_values_clamped_on_read(tmp_path):
    path = tmp_path / "wild.npy"
    stack = np.array([[[-0.5, 0.25]], [[1.5, 0.75]]])
    np.save(path, stack)
    loaded = read_array(path)
    assert loaded.min() >= 0.0 and loaded.max() <= 1.0
    # In-range values pass through untouched.
    assert loaded[0, 0, 1] == 0.25 and loaded[1, 0, 1] == 0.75
    assert loaded[0, 0, 0] == 0.0 and loaded[1, 0, 0] == 1.0


def test_density_map_not_clamped(tmp_path):
    path = tmp_path / "dense.npy"
    write_array([[7.5]], path)
    assert read_array(path)[0, 0] == 7.5


def test_negative_density_rejected_on_write(tmp_path):
    with pytest.raises(DataError):
        write_array([[-1.0]], tmp_path / "neg.npy")


@settings(max_examples=40, deadline=None)
@given(
    values=hnp.arrays(
        dtype=np.float64,
        shape=hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=12),
        elements=st.floats(min_value=0.0, max_value=1e6, allow_nan=False),
    )
)
def test_round_trip_identity_property(values, tmp_path_factory):
    path = tmp_path_factory.mktemp("roundtrip") / "map.npy"
    write_array(values, path)
    loaded = read_array(path)
    assert loaded.shape == values.shape
    assert loaded.tobytes() == values.tobytes()


# --- annotations ---------------------------------------------------------


def _write_json(tmp_path, payload):
    path = tmp_path / "ann.json"
    path.write_text(json.dumps(payload))
    return path


def test_parse_minimal_annotations(tmp_path):
    ann = read_annotations(
        _write_json(tmp_path, {"width": 100, "height": 100, "points": [[10, 20]]})
    )
    assert ann.width == 100 and ann.height == 100
    assert ann.points.tolist() == [[10.0, 20.0]]


def test_missing_perspective_means_unit_scale(tmp_path):
    ann = read_annotations(
        _write_json(tmp_path, {"width": 50, "height": 80, "points": []})
    )
    assert float(ann.scale_at(0)) == 1.0
    assert float(ann.scale_at(79)) == 1.0


def test_point_out_of_bounds(tmp_path):
    path = _write_json(tmp_path, {"width": 100, "height": 100, "points": [[120, 20]]})
    with pytest.raises(ValidationError, match="point 0"):
        read_annotations(path)


def test_non_increasing_perspective_rows(tmp_path):
    path = _write_json(
        tmp_path,
        {
            "width": 10,
            "height": 10,
            "points": [],
            "perspective": {"rows": [5, 5], "scale": [1.0, 2.0]},
        },
    )
    with pytest.raises(SchemaError):
        read_annotations(path)


def test_non_positive_perspective_scale(tmp_path):
    path = _write_json(
        tmp_path,
        {
            "width": 10,
            "height": 10,
            "points": [],
            "perspective": {"rows": [0, 9], "scale": [1.0, 0.0]},
        },
    )
    with pytest.raises(SchemaError):
        read_annotations(path)


def test_perspective_interpolation_and_clamping(tmp_path):
    ann = read_annotations(
        _write_json(
            tmp_path,
            {
                "width": 10,
                "height": 100,
                "points": [],
                "perspective": {"rows": [10, 30], "scale": [1.0, 3.0]},
            },
        )
    )
    assert float(ann.scale_at(20)) == pytest.approx(2.0)
    assert float(ann.scale_at(0)) == 1.0  # clamped below the table
    assert float(ann.scale_at(99)) == 3.0  # clamped above the table


def test_annotation_round_trip(tmp_path):
    original = HeadAnnotations(
        width=64,
        height=48,
        points=np.array([[1.5, 2.5], [10.0, 20.0]]),
        perspective_rows=np.array([0.0, 47.0]),
        perspective_scale=np.array([1.0, 2.0]),
    )
    path = tmp_path / "ann.json"
    write_annotations(original, path)
    loaded = read_annotations(path)
    assert loaded.width == original.width and loaded.height == original.height
    assert np.array_equal(loaded.points, original.points)
    assert np.array_equal(loaded.perspective_rows, original.perspective_rows)
    assert np.array_equal(loaded.perspective_scale, original.perspective_scale)

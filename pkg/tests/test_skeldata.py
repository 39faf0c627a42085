import dataclasses
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitrobust.skeldata import (DatasetError, GaitSubjectParams, SkeletonDataset,
                                 clean_pose_sequence, default_subject_params, dumps_dataset,
                                 loads_dataset, preprocess, read_dataset, segment,
                                 stratified_kfold, synthesize_corpus, synthesize_gait_dataset,
                                 write_dataset)
from gaitrobust.skeldata.dataset import J


def _rot_y(video, angle):
    c, s = np.cos(angle), np.sin(angle)
    r = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.einsum("ab,btj->atj", r, video)


@pytest.fixture(scope="module")
def params():
    return default_subject_params(9, seed=3)


@pytest.fixture(scope="module")
def raw_video(params):
    return synthesize_gait_dataset(2, 1, 30, params[:2], seed=5)[0][0]


# -- synthesizer -------------------------------------------------------------------


def test_static_pose_when_dynamics_off(params):
    still = dataclasses.replace(params[0], arm_swing_amplitude=0.0, leg_swing_amplitude=0.0,
                                joint_noise_stdev=0.0, occlusion_rate=0.0, null_frame_rate=0.0)
    video = synthesize_gait_dataset(2, 1, 12, [still, params[1]], seed=0)[0][0]
    assert np.array_equal(video, np.repeat(video[:, :1], 12, axis=1))


def test_trajectories_periodic_in_pelvis_frame(params):
    p = dataclasses.replace(params[0], stride_frequency=1 / 20)
    pos = clean_pose_sequence(p, 80, start_frame=3.7)
    rel = pos - pos[:, :, J["pelvis"]:J["pelvis"] + 1]
    assert np.abs(rel[:, 20:] - rel[:, :-20]).max() < 1e-9
    # the pelvis height repeats too; only the forward position advances
    assert np.abs(pos[1, 20:, J["pelvis"]] - pos[1, :-20, J["pelvis"]]).max() < 1e-9


def test_synth_deterministic_and_seed_sensitive(params):
    a = synthesize_gait_dataset(3, 2, 9, params[:3], seed=11)
    b = synthesize_gait_dataset(3, 2, 9, params[:3], seed=11)
    c = synthesize_gait_dataset(3, 2, 9, params[:3], seed=12)
    assert all(x.tobytes() == y.tobytes() and k == m for (x, k), (y, m) in zip(a, b))
    assert any(x.tobytes() != y.tobytes() for (x, _), (y, _) in zip(a, c))


def test_synth_rejects_bad_dimensions(params):
    with pytest.raises(DatasetError):
        synthesize_gait_dataset(1, 1, 9)
    with pytest.raises(DatasetError):
        synthesize_gait_dataset(2, 1, 2)
    with pytest.raises(DatasetError):
        synthesize_gait_dataset(2, 0, 9)


def test_subject_params_distinct_and_valid(params):
    dicts = [p.to_dict() for p in params]
    assert len({repr(d) for d in dicts}) == len(dicts)
    assert GaitSubjectParams.from_dict(dicts[0]) == params[0]
    with pytest.raises(DatasetError):
        dataclasses.replace(params[0], occlusion_rate=1.5)


def test_null_frames_zero_everything(params):
    p = dataclasses.replace(params[0], null_frame_rate=1.0)
    video = synthesize_gait_dataset(2, 1, 6, [p, params[1]], seed=0)[0][0]
    assert not video.any()
    out, flags = preprocess(video, return_flags=True)
    assert flags.all() and not out.any()


def test_occluded_joints_hold_previous_position(params):
    p = dataclasses.replace(params[0], occlusion_rate=1.0, null_frame_rate=0.0)
    video = synthesize_gait_dataset(2, 1, 6, [p, params[1]], seed=0)[0][0]
    assert np.array_equal(video, np.repeat(video[:, :1], 6, axis=1))


# -- preprocessing -----------------------------------------------------------------


def test_preprocess_fixed_point(params):
    pose = clean_pose_sequence(params[2], 9)
    pose -= pose.mean(axis=2, keepdims=True)
    pose /= max(1.0, np.abs(pose).max())
    assert np.abs(preprocess(pose) - pose).max() < 1e-12


def test_preprocess_translation_invariant(raw_video):
    moved = raw_video + np.array([5.0, 0.0, 0.0])[:, None, None]
    assert np.abs(preprocess(moved) - preprocess(raw_video)).max() < 1e-9


@pytest.mark.parametrize("angle", [np.pi / 2, -np.pi / 2, np.pi, 0.3])
def test_preprocess_rotation_invariant(raw_video, angle):
    assert np.abs(preprocess(_rot_y(raw_video, angle)) - preprocess(raw_video)).max() < 1e-9


def test_preprocess_properties(raw_video):
    out = preprocess(raw_video)
    assert np.abs(out.mean(axis=2)).max() < 1e-9
    assert np.abs(out).max() <= 1.0
    assert np.abs(preprocess(out) - out).max() < 1e-9
    # facing the front: shoulders on the lateral axis, the subject's left at +x
    s = out[:, :, J["r_shoulder"]] - out[:, :, J["l_shoulder"]]
    assert np.abs(s[2]).max() < 1e-12 and (s[0] < 0).all()


def test_preprocess_flags_degenerate_frames(raw_video):
    video = raw_video.copy()
    video[:, 4] = 2.0
    out, flags = preprocess(video, return_flags=True)
    assert flags[4] and flags.sum() == 1
    assert not out[:, 4].any()


def test_preprocess_rejects_wrong_shape():
    with pytest.raises(DatasetError):
        preprocess(np.zeros((3, 4, 12)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(-np.pi, np.pi), st.floats(-20, 20), st.floats(-20, 20))
def test_preprocess_invariances_property(seed, angle, dx, dz):
    rng = np.random.default_rng(seed)
    video = rng.normal(size=(3, 4, 13))
    moved = _rot_y(video, angle) + np.array([dx, 0.0, dz])[:, None, None]
    a, b = preprocess(video), preprocess(moved)
    assert np.abs(a - b).max() < 1e-9
    assert np.abs(preprocess(a) - a).max() < 1e-9


# -- windows -----------------------------------------------------------------------


@pytest.mark.parametrize("frames,count", [(9, 3), (10, 3), (3, 1), (14, 4)])
def test_segment_counts_and_content(frames, count):
    video = np.arange(3 * frames * 13, dtype=float).reshape(3, frames, 13)
    windows = segment(video)
    assert len(windows) == count
    assert np.array_equal(np.concatenate(windows, axis=1), video[:, :3 * count])
    if frames == 3:
        assert np.array_equal(windows[0], video)


def test_segment_too_short():
    with pytest.raises(DatasetError):
        segment(np.zeros((3, 2, 13)))


# -- folds -------------------------------------------------------------------------


def _balanced(per_class, k=9):
    labels = np.repeat(np.arange(k), per_class)
    return SkeletonDataset(np.zeros((len(labels), 3, 3, 13)), labels, k)


def test_kfold_exact_stratification():
    split = stratified_kfold(_balanced(10), 10, seed=0)
    for f in range(10):
        test = split.test_indices(f)
        assert len(test) == 9
        assert sorted(np.arange(90)[test] // 10) == list(range(9))


def test_kfold_desk_scale_counts():
    ds = _balanced(200)
    split = stratified_kfold(ds, 10, seed=4)
    for f in range(10):
        test = split.test_indices(f)
        assert len(test) == 180
        assert np.all(np.bincount(ds.labels[test], minlength=9) == 20)


def test_kfold_deterministic():
    ds = _balanced(13)
    a = stratified_kfold(ds, 10, seed=2).assignments
    assert np.array_equal(a, stratified_kfold(ds, 10, seed=2).assignments)
    assert not np.array_equal(a, stratified_kfold(ds, 10, seed=3).assignments)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(5, 30), min_size=2, max_size=6), st.integers(2, 5), st.integers(0, 99))
def test_kfold_invariants(counts, folds, seed):
    labels = np.repeat(np.arange(len(counts)), counts)
    ds = SkeletonDataset(np.zeros((len(labels), 3, 3, 13)), labels, len(counts))
    split = stratified_kfold(ds, folds, seed)
    tests = [set(split.test_indices(f)) for f in range(folds)]
    assert set().union(*tests) == set(range(len(labels)))
    assert sum(len(t) for t in tests) == len(labels)
    for f in range(folds):
        hist = np.bincount(labels[split.test_indices(f)], minlength=len(counts))
        assert hist.min() >= 1
        assert not set(split.train_indices(f)) & tests[f]
    for k in range(len(counts)):
        sizes = [np.sum(labels[list(t)] == k) for t in tests]
        assert max(sizes) - min(sizes) <= 1


def test_kfold_too_few_samples():
    with pytest.raises(DatasetError, match="fewer than fold_count"):
        stratified_kfold(_balanced(5), 10)


# -- dataset invariants and file format ----------------------------------------------


def test_corpus_invariants():
    ds = synthesize_corpus(num_subjects=3, windows_per_subject=12, videos_per_subject=2, seed=1)
    assert ds.samples.shape == (36, 3, 3, 13)
    assert np.all(ds.class_counts() == 12)
    ds.validate()


def test_validate_rejects_out_of_range():
    with pytest.raises(DatasetError):
        SkeletonDataset(np.full((1, 3, 3, 13), 1.5), [0], 1).validate()
    with pytest.raises(DatasetError):
        SkeletonDataset(np.zeros((2, 3, 3, 13)), [0, 0], 2).validate()


def test_roundtrip_single_sample(tmp_path):
    rng = np.random.default_rng(0)
    ds = SkeletonDataset(rng.uniform(-1, 1, (1, 3, 3, 13)).astype(np.float32), [0], 1)
    write_dataset(ds, tmp_path / "d.skl")
    back = read_dataset(tmp_path / "d.skl")
    assert back.samples.tobytes() == ds.samples.tobytes()
    assert np.array_equal(back.labels, ds.labels) and back.num_classes == 1


def test_roundtrip_is_exact_at_float32():
    ds = synthesize_corpus(num_subjects=2, windows_per_subject=4, videos_per_subject=1, seed=0)
    once = loads_dataset(dumps_dataset(ds))
    assert np.array_equal(once.samples, ds.samples.astype(np.float32))
    assert dumps_dataset(once) == dumps_dataset(ds)


def test_file_layout():
    ds = SkeletonDataset(np.full((2, 3, 3, 13), 0.5), [1, 0], 2)
    raw = dumps_dataset(ds)
    assert raw[:4] == b"SKL1"
    assert struct.unpack("<5I", raw[4:24]) == (2, 3, 3, 13, 2)
    assert struct.unpack("<f", raw[24:28]) == (0.5,)
    assert struct.unpack("<2H", raw[-4:]) == (1, 0)
    assert len(raw) == 24 + 4 * 2 * 117 + 4


def test_bad_magic():
    raw = bytearray(dumps_dataset(SkeletonDataset(np.zeros((1, 3, 3, 13)), [0], 1)))
    raw[:4] = b"XXXX"
    with pytest.raises(DatasetError, match="magic"):
        loads_dataset(bytes(raw))


def test_truncated():
    one = dumps_dataset(SkeletonDataset(np.zeros((1, 3, 3, 13)), [0], 1))
    bad = one[:4] + struct.pack("<I", 2) + one[8:]
    with pytest.raises(DatasetError, match="truncated"):
        loads_dataset(bad)


def test_label_out_of_range():
    raw = bytearray(dumps_dataset(SkeletonDataset(np.zeros((1, 3, 3, 13)), [0], 1)))
    raw[-2:] = struct.pack("<H", 1)
    with pytest.raises(DatasetError, match="out of range"):
        loads_dataset(bytes(raw))

"""Centering, facing normalization, range scaling and windowing of skeleton videos."""

from __future__ import annotations

import math

import numpy as np

from .dataset import NUM_AXES, NUM_JOINTS, WINDOW, J, DatasetError

_DEGENERATE = 1e-12


def _facing_angle(frame: np.ndarray) -> float | None:
    """Rotation about the vertical axis that lines the shoulders up with the lateral axis.

    Of the two candidate angles, the one where (shoulder vector x head-to-pelvis)
    points forward (+z) is returned. ``None`` if the frame is degenerate.
    """
    s = frame[:, J["r_shoulder"]] - frame[:, J["l_shoulder"]]
    if np.hypot(s[0], s[2]) < _DEGENERATE:
        return None
    d = frame[:, J["pelvis"]] - frame[:, J["head"]]
    a = float(np.arctan2(s[2], s[0]))
    # after rotating by a, s = (|s_h|, s_y, 0); d' = R(a) d
    c, sn = np.cos(a), np.sin(a)
    dx = d[0] * c + d[2] * sn
    forward = np.hypot(s[0], s[2]) * d[1] - s[1] * dx
    if forward <= 0:
        a += np.pi
    return math.remainder(a, 2 * np.pi)


def _rotate_y(frame: np.ndarray, a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    out = frame.copy()
    out[0] = frame[0] * c + frame[2] * s
    out[2] = -frame[0] * s + frame[2] * c
    return out


def preprocess(video: np.ndarray, return_flags: bool = False):
    """Center every frame, turn it to face the front and fit the video into [-1, 1].

    Scaling uses one factor for the whole video and only shrinks: a video that
    already fits is not enlarged, which makes the transform idempotent.

    Args:
        video: ``[3, T, 13]`` joint positions.
        return_flags: also return a boolean ``[T]`` mask of degenerate frames
            (no defined facing direction; those frames are left unrotated).
    """
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 3 or video.shape[0] != NUM_AXES or video.shape[2] != NUM_JOINTS:
        raise DatasetError(f"video must be [3, T, 13], got {video.shape}")
    out = video - video.mean(axis=2, keepdims=True)
    flags = np.zeros(video.shape[1], dtype=bool)
    for t in range(video.shape[1]):
        frame = out[:, t]
        if np.ptp(frame, axis=1).max() < _DEGENERATE:
            flags[t] = True
            continue
        a = _facing_angle(frame)
        if a is None:
            flags[t] = True
            continue
        if a != 0.0:
            out[:, t] = _rotate_y(frame, a)
    peak = np.abs(out).max(initial=0.0)
    if peak > 1.0:
        out /= peak
    return (out, flags) if return_flags else out


def segment(video: np.ndarray, window: int = WINDOW) -> list[np.ndarray]:
    """Cut ``[C, T_video, J]`` into non-overlapping ``window``-frame samples."""
    video = np.asarray(video)
    if video.ndim != 3:
        raise DatasetError(f"video must be [C, T, J], got {video.shape}")
    n = video.shape[1] // window
    if n == 0:
        raise DatasetError(f"video has {video.shape[1]} frames, need at least {window}")
    return [video[:, i * window:(i + 1) * window].copy() for i in range(n)]

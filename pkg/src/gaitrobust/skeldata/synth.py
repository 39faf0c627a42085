"""Procedural walking skeletons standing in for LiDAR-extracted gait videos.

Each subject is a 13-joint kinematic tree whose limbs swing sinusoidally around
a pelvis that translates along the walking heading. Each recording of a walker
also varies in apparent size and pace. Sensor pathologies are layered on
afterwards: per-coordinate jitter, occluded joints frozen at their previous
position, and null frames.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .dataset import NUM_JOINTS, J, DatasetError, SkeletonDataset
from .preprocess import preprocess, segment

# (parent, child) per entry of GaitSubjectParams.limb_lengths
BONES = (
    ("neck", "head"),
    ("neck", "l_shoulder"),
    ("neck", "r_shoulder"),
    ("l_shoulder", "l_elbow"),
    ("r_shoulder", "r_elbow"),
    ("l_elbow", "l_hand"),
    ("r_elbow", "r_hand"),
    ("pelvis", "neck"),
    ("pelvis", "l_knee"),
    ("pelvis", "r_knee"),
    ("l_knee", "l_foot"),
    ("r_knee", "r_foot"),
)

# nominal adult bone lengths in metres, same order as BONES
_NOMINAL = np.array([0.25, 0.19, 0.19, 0.30, 0.30, 0.28, 0.28, 0.55, 0.46, 0.46, 0.45, 0.45])

_HIP_SPREAD = 0.12  # rad, thighs splay outward from the pelvis
_ARM_SPREAD = 0.08

# per-recording nuisance: relative spread of apparent body size and of gait amplitude
VIDEO_SCALE_SPREAD = 0.10
VIDEO_GAIT_SPREAD = 0.20


@dataclass(frozen=True)
class GaitSubjectParams:
    limb_lengths: tuple[float, ...]
    stride_frequency: float  # gait cycles per frame
    phase_offset: float
    arm_swing_amplitude: float  # rad
    leg_swing_amplitude: float  # rad
    joint_noise_stdev: float  # metres
    occlusion_rate: float
    null_frame_rate: float

    def __post_init__(self):
        if len(self.limb_lengths) != len(BONES) or min(self.limb_lengths) <= 0:
            raise DatasetError("limb_lengths must be 12 positive values")
        if self.stride_frequency <= 0:
            raise DatasetError("stride_frequency must be positive")
        if not 0 <= self.phase_offset < 2 * np.pi:
            raise DatasetError("phase_offset must lie in [0, 2*pi)")
        if min(self.arm_swing_amplitude, self.leg_swing_amplitude, self.joint_noise_stdev) < 0:
            raise DatasetError("amplitudes and noise must be non-negative")
        for p in (self.occlusion_rate, self.null_frame_rate):
            if not 0 <= p <= 1:
                raise DatasetError("rates must be probabilities")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["limb_lengths"] = list(self.limb_lengths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GaitSubjectParams":
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in names}
        kw["limb_lengths"] = tuple(float(v) for v in kw["limb_lengths"])
        return cls(**kw)


def default_subject_params(num_subjects: int, seed: int = 0) -> list[GaitSubjectParams]:
    """Draw a population of distinct walkers."""
    if num_subjects < 1:
        raise DatasetError("num_subjects must be positive")
    rng = np.random.default_rng([seed, 0x6A17])
    out = []
    for _ in range(num_subjects):
        stature = rng.uniform(0.8, 1.2)
        build = rng.uniform(0.85, 1.15, size=4)  # head, shoulders, arms, legs
        per_bone = np.array([build[0], build[1], build[1], build[2], build[2], build[2],
                             build[2], 1.0, build[3], build[3], build[3], build[3]])
        jitter = rng.uniform(0.95, 1.05, size=len(BONES))
        lengths = _NOMINAL * stature * per_bone * jitter
        out.append(GaitSubjectParams(
            limb_lengths=tuple(float(v) for v in lengths),
            stride_frequency=float(rng.uniform(0.03, 0.06)),
            phase_offset=float(rng.uniform(0, 2 * np.pi)),
            arm_swing_amplitude=float(rng.uniform(0.1, 0.5)),
            leg_swing_amplitude=float(rng.uniform(0.2, 0.45)),
            joint_noise_stdev=float(rng.uniform(0.01, 0.02)),
            occlusion_rate=float(rng.uniform(0.02, 0.1)),
            null_frame_rate=float(rng.uniform(0.0, 0.03)),
        ))
    return out


def _limb(angle: np.ndarray, spread: float, side: float) -> np.ndarray:
    """Unit vectors [3, T] hanging down, splayed sideways, pitched forward by ``angle``."""
    c = np.cos(spread)
    return np.stack([np.full_like(angle, side * np.sin(spread)),
                     -c * np.cos(angle), c * np.sin(angle)])


def clean_pose_sequence(params: GaitSubjectParams, frames: int,
                        start_frame: float = 0.0) -> np.ndarray:
    """Noise-free body-frame poses ``[3, frames, 13]`` with the pelvis walking along +z.

    Axes: x lateral (subject's left is +x), y up, z forward.
    """
    L = dict(zip(BONES, params.limb_lengths))
    t = np.arange(frames, dtype=float) + start_frame
    w = 2 * np.pi * params.stride_frequency
    phase = w * t + params.phase_offset
    a_leg, a_arm = params.leg_swing_amplitude, params.arm_swing_amplitude

    thigh = L[("pelvis", "l_knee")]
    shin = L[("l_knee", "l_foot")]
    stride = 4.0 * (thigh + shin) * np.sin(a_leg)
    bob = 0.25 * (thigh + shin) * (1 - np.cos(a_leg))

    pos = np.zeros((3, frames, NUM_JOINTS))
    pelvis = np.stack([np.zeros_like(t),
                       (thigh + shin) - bob * (1 - np.cos(2 * phase)) / 2,
                       stride * params.stride_frequency * t])
    pos[:, :, J["pelvis"]] = pelvis

    up = np.array([0.0, 1.0, 0.0])[:, None]
    pos[:, :, J["neck"]] = pelvis + L[("pelvis", "neck")] * up
    pos[:, :, J["head"]] = pos[:, :, J["neck"]] + L[("neck", "head")] * up
    for side, sign in (("l", 1.0), ("r", -1.0)):
        swing = sign * a_leg * np.sin(phase)
        flex = 0.5 * a_leg * (1 - np.cos(phase + (0.0 if sign > 0 else np.pi)))
        knee = pelvis + L[("pelvis", f"{side}_knee")] * _limb(swing, _HIP_SPREAD, sign)
        foot = knee + L[(f"{side}_knee", f"{side}_foot")] * _limb(swing - flex, 0.0, sign)
        pos[:, :, J[f"{side}_knee"]] = knee
        pos[:, :, J[f"{side}_foot"]] = foot

        lateral = np.array([sign, 0.0, 0.0])[:, None]
        shoulder = pos[:, :, J["neck"]] + L[("neck", f"{side}_shoulder")] * lateral
        arm = -sign * a_arm * np.sin(phase)
        bend = 0.3 * a_arm * (1 + np.sin(phase * sign))
        elbow = shoulder + L[(f"{side}_shoulder", f"{side}_elbow")] * _limb(arm, _ARM_SPREAD, sign)
        hand = elbow + L[(f"{side}_elbow", f"{side}_hand")] * _limb(arm + bend, _ARM_SPREAD, sign)
        pos[:, :, J[f"{side}_shoulder"]] = shoulder
        pos[:, :, J[f"{side}_elbow"]] = elbow
        pos[:, :, J[f"{side}_hand"]] = hand
    return pos


def _corrupt(pos: np.ndarray, params: GaitSubjectParams, rng: np.random.Generator) -> np.ndarray:
    out = pos + rng.normal(0.0, params.joint_noise_stdev, size=pos.shape) \
        if params.joint_noise_stdev > 0 else pos.copy()
    frames = out.shape[1]
    occluded = rng.random((frames, NUM_JOINTS)) < params.occlusion_rate
    occluded[0] = False
    for t in range(1, frames):
        if occluded[t].any():
            out[:, t, occluded[t]] = out[:, t - 1, occluded[t]]
    null = rng.random(frames) < params.null_frame_rate
    out[:, null, :] = 0.0
    return out


def recording_params(params: GaitSubjectParams, rng: np.random.Generator) -> GaitSubjectParams:
    """The walker as seen in one recording: rescaled body, livelier or calmer gait."""
    size = 1.0 + rng.uniform(-VIDEO_SCALE_SPREAD, VIDEO_SCALE_SPREAD)
    gait = 1.0 + rng.uniform(-VIDEO_GAIT_SPREAD, VIDEO_GAIT_SPREAD)
    pace = 1.0 + rng.uniform(-VIDEO_GAIT_SPREAD, VIDEO_GAIT_SPREAD) / 2
    return replace(params, limb_lengths=tuple(v * size for v in params.limb_lengths),
                   stride_frequency=params.stride_frequency * pace,
                   arm_swing_amplitude=params.arm_swing_amplitude * gait,
                   leg_swing_amplitude=params.leg_swing_amplitude * gait)


def synthesize_video(params: GaitSubjectParams, frames: int,
                     rng: np.random.Generator) -> np.ndarray:
    """One walking video ``[3, frames, 13]`` in scene coordinates."""
    params = recording_params(params, rng)
    start = rng.uniform(0.0, 1.0 / params.stride_frequency)
    heading = rng.uniform(0.0, 2 * np.pi)
    origin = np.array([rng.uniform(-5, 5), 0.0, rng.uniform(5, 25)])
    pos = clean_pose_sequence(params, frames, start)
    c, s = np.cos(heading), np.sin(heading)
    x, z = pos[0].copy(), pos[2].copy()
    pos[0] = c * x + s * z + origin[0]
    pos[2] = -s * x + c * z + origin[2]
    return _corrupt(pos, params, rng)


def synthesize_gait_dataset(num_subjects: int, videos_per_subject: int, frames_per_video: int,
                            params: list[GaitSubjectParams] | None = None,
                            seed: int = 0) -> list[tuple[np.ndarray, int]]:
    """Long-form videos as ``(video[3, T, 13], subject_id)`` pairs, subject-major order.

    Every video draws from its own generator seeded by ``(seed, subject, video)``,
    so any subset can be regenerated independently.
    """
    if num_subjects < 2:
        raise DatasetError("need at least 2 subjects")
    if videos_per_subject < 1:
        raise DatasetError("videos_per_subject must be positive")
    if frames_per_video < 3:
        raise DatasetError("frames_per_video must be at least 3")
    if params is None:
        params = default_subject_params(num_subjects, seed)
    if len(params) != num_subjects:
        raise DatasetError(f"{len(params)} parameter sets for {num_subjects} subjects")
    videos = []
    for k, p in enumerate(params):
        for v in range(videos_per_subject):
            rng = np.random.default_rng([seed, k, v])
            videos.append((synthesize_video(p, frames_per_video, rng), k))
    return videos


def build_dataset(videos: list[tuple[np.ndarray, int]], num_classes: int) -> SkeletonDataset:
    """Preprocess and window long-form videos into a :class:`SkeletonDataset`."""
    xs, ys = [], []
    for video, label in videos:
        for window in segment(preprocess(video)):
            xs.append(window)
            ys.append(label)
    return SkeletonDataset(np.stack(xs), np.array(ys), num_classes).validate()


def synthesize_corpus(num_subjects: int = 9, windows_per_subject: int = 200,
                      videos_per_subject: int = 4, seed: int = 0,
                      params: list[GaitSubjectParams] | None = None) -> SkeletonDataset:
    """The standard desk-scale corpus: ``num_subjects * windows_per_subject`` samples."""
    if windows_per_subject % videos_per_subject:
        raise DatasetError("windows_per_subject must be a multiple of videos_per_subject")
    frames = 3 * windows_per_subject // videos_per_subject
    videos = synthesize_gait_dataset(num_subjects, videos_per_subject, frames, params, seed)
    return build_dataset(videos, num_subjects)

"""Skeleton gait samples: synthesis, preprocessing, folds and file format."""

from .dataset import (JOINTS, NUM_AXES, NUM_JOINTS, WINDOW, DatasetError, SkeletonDataset)
from .folds import FoldSplit, stratified_kfold
from .io import dumps_dataset, loads_dataset, read_dataset, write_dataset
from .preprocess import preprocess, segment
from .synth import (BONES, GaitSubjectParams, build_dataset, clean_pose_sequence,
                    default_subject_params, synthesize_corpus, synthesize_gait_dataset,
                    synthesize_video)

__all__ = [
    "BONES", "JOINTS", "NUM_AXES", "NUM_JOINTS", "WINDOW", "DatasetError", "FoldSplit",
    "GaitSubjectParams", "SkeletonDataset", "build_dataset", "clean_pose_sequence",
    "default_subject_params", "dumps_dataset", "loads_dataset", "preprocess", "read_dataset",
    "segment", "stratified_kfold", "synthesize_corpus", "synthesize_gait_dataset",
    "synthesize_video", "write_dataset",
]

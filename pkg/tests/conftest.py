import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from tasnn.config import RunConfig  # noqa: E402

TINY = {
    "corpus": {"n_families": 4, "samples_per_family": 10, "variants_per_transform": 1},
    "extract": {"graph_shape": [64, 64], "encoder_dim": 32},
    "model": {"fc_hidden": 32, "embedding_dim": 16, "task_hidden": 32,
              "conv_channels": [4, 8, 8, 8]},
    "train": {"epochs": 2, "steps_per_epoch": 3, "batch_size": 8},
    "eval": {"ways": [3], "shots": [1, 2], "episodes": 10},
}


@pytest.fixture(scope="session")
def tiny_cfg():
    return RunConfig.from_dict(TINY)


@pytest.fixture(scope="session")
def tiny_fs(tiny_cfg):
    from tasnn.corpus import build_corpus
    from tasnn.dataset import features_from_programs
    return features_from_programs(build_corpus(tiny_cfg.corpus_config()),
                                  tiny_cfg.extract_config())

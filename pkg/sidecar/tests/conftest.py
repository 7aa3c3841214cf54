import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _tiny import (  # noqa: E402
    build_bert_mlm,
    build_clip_text,
    build_gpt2,
    build_nli,
    build_roberta_mlm,
)

GOLDEN_DIR = Path(__file__).parent / "goldens"


@pytest.fixture(scope="session")
def bert_ckpt(tmp_path_factory) -> str:
    return str(build_bert_mlm(tmp_path_factory.mktemp("ckpt-bert")))


@pytest.fixture(scope="session")
def gpt2_ckpt(tmp_path_factory) -> str:
    return str(build_gpt2(tmp_path_factory.mktemp("ckpt-gpt2")))


@pytest.fixture(scope="session")
def clip_ckpt(tmp_path_factory) -> str:
    return str(build_clip_text(tmp_path_factory.mktemp("ckpt-clip")))


@pytest.fixture(scope="session")
def roberta_ckpt(tmp_path_factory) -> str:
    return str(build_roberta_mlm(tmp_path_factory.mktemp("ckpt-roberta")))


@pytest.fixture(scope="session")
def nli_ckpt(tmp_path_factory) -> str:
    return str(build_nli(tmp_path_factory.mktemp("ckpt-nli")))

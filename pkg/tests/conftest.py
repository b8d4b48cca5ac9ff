import numpy as np
import pytest

from subword_attention.corpus import load_dataset
from subword_attention.nn import ModelConfig, init_params
from subword_attention.pipeline import fit_bpe, fit_unigram
from subword_attention.preprocess import bundled_tables_dir

# filled by tests/test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_lines():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def toy_path():
    return bundled_tables_dir() / "toy_corpus.tsv"


@pytest.fixture(scope="session")
def toy_samples(toy_path):
    return load_dataset(toy_path)


@pytest.fixture(scope="session")
def toy_tokenizers(toy_samples):
    texts = [s.text for s in toy_samples]
    return fit_bpe(texts), fit_unigram(texts)


@pytest.fixture
def tiny_config():
    return ModelConfig(max_len=6, bpe_vocab_size=11, uni_vocab_size=9, d_model=8, n_heads=2, dense_units=16)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, np.random.default_rng(3))

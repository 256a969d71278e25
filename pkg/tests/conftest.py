import copy
import io
from pathlib import Path

import pytest

from lifelong_crf import parse_corpus, parse_corpus_file
from lifelong_crf.crf import TrainingConfig
from lifelong_crf.lifelong import train_phase

FIXTURES = Path(__file__).parent / "fixtures"

# "The battery of this camera is great", heads and relation types chosen so
# every token's relation list matches the documented worked example.
TABLE1_TEXT = """\
1\tThe\tDT\t2\tdet\tO
2\tbattery\tNN\t7\tnsubj\tB-ASP
3\tof\tIN\t5\tcase\tO
4\tthis\tDT\t5\tdet\tO
5\tcamera\tNN\t2\tnmod\tB-ASP
6\tis\tVBZ\t7\tcop\tO
7\tgreat\tJJ\t0\troot\tO
"""


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def table1_corpus():
    return parse_corpus(io.StringIO(TABLE1_TEXT), "camera")


@pytest.fixture
def table1_sentence(table1_corpus):
    return table1_corpus.sentences[0]


@pytest.fixture(scope="session")
def training_corpus():
    return parse_corpus_file(FIXTURES / "train_cameras.conll")


@pytest.fixture(scope="session")
def _trained_once(training_corpus):
    return train_phase(training_corpus, TrainingConfig(), threshold=2)


@pytest.fixture
def trained_state(_trained_once):
    """A fresh deep copy per test; extract_domain mutates the state."""
    return copy.deepcopy(_trained_once[0])


@pytest.fixture
def training_summary(_trained_once):
    return _trained_once[1]

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

import pytest

from ptsskit.parser import parse_spec, parse_term

CORPUS = pathlib.Path(__file__).resolve().parent.parent / "corpus"

RUNNING_SPEC = """\
ptss running
actions a, b, tau
op 0 : -> s
op pre<A> : d -> s
op + : s s -> s
rule prefix: <A>.mu --<A>-> mu
rule sum_l: x --<A>-> mu |- +(x,y) --<A>-> mu
rule sum_r: y --<A>-> mu |- +(x,y) --<A>-> mu
"""


@pytest.fixture(scope="session")
def running():
    return parse_spec(RUNNING_SPEC)


@pytest.fixture(scope="session")
def sig(running):
    return running.signature


@pytest.fixture
def t(sig):
    def build(text):
        return parse_term(text, sig)

    return build

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src import ges_core as ges  # noqa: E402
from src.ges_core import RandomSource  # noqa: E402
from src.models import DENY, PERMIT, BitRule  # noqa: E402


@pytest.fixture(scope="session")
def transparent_instance():
    return ges.inst_gen(12, 4, "transparent", RandomSource(11))


@pytest.fixture(scope="session")
def clt_instance():
    # kappa=4 keeps x0 small enough for per-test use
    return ges.inst_gen(12, 4, "clt", RandomSource(12))


def bit_rule(pattern: str, action=DENY) -> BitRule:
    """'10*1' -> BitRule with a wildcard at position 2."""
    v = tuple(0 if c == "*" else int(c) for c in pattern)
    wild = frozenset(i for i, c in enumerate(pattern) if c == "*")
    return BitRule(v, wild, action)


def bits_of(x: int, n: int):
    return tuple((x >> (n - 1 - i)) & 1 for i in range(n))


@pytest.fixture
def toy_bit_rules():
    return [
        bit_rule("10**1*", DENY),
        bit_rule("0*1***", PERMIT),
        bit_rule("111111", PERMIT),
        bit_rule("******", DENY),
    ]

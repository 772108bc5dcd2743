"""Verdicts shared by every checker, audit and experiment report."""

from enum import Enum
from typing import Iterable


class Verdict(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"
    INCONCLUSIVE = "Inconclusive"

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self]


EXIT_CODES = {
    Verdict.PASS: 0,
    Verdict.FAIL: 2,
    Verdict.INCONCLUSIVE: 3,
}


def fold(verdicts: Iterable[Verdict]) -> Verdict:
    """Any Fail wins, then any Inconclusive, else Pass (empty folds to Inconclusive)."""
    seen = list(verdicts)
    if not seen:
        return Verdict.INCONCLUSIVE
    if Verdict.FAIL in seen:
        return Verdict.FAIL
    if Verdict.INCONCLUSIVE in seen:
        return Verdict.INCONCLUSIVE
    return Verdict.PASS

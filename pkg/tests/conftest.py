import warnings
from pathlib import Path

import pytest

warnings.filterwarnings("ignore", category=RuntimeWarning)

SPEC_DIR = Path(__file__).parent / "specs"


def spec_text(name: str) -> str:
    return (SPEC_DIR / f"{name}.mob").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def corpus():
    return {p.stem: p.read_text(encoding="utf-8")
            for p in sorted(SPEC_DIR.glob("*.mob"))}

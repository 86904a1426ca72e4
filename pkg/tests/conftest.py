import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
SRC = ROOT / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))


@pytest.fixture(scope="session")
def phones():
    from premreg.datasets import bundled_dataset

    return bundled_dataset("phones")


@pytest.fixture(scope="session")
def hbk():
    from premreg.datasets import bundled_dataset

    return bundled_dataset("hbk")

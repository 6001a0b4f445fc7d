import os
import shutil
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("SPPNET_CLI") or shutil.which("sppnet")
    if not path or not Path(path).exists():
        pytest.skip("sppnet CLI not found; set SPPNET_CLI")
    return str(Path(path).resolve())
